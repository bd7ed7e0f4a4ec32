#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "proda/numerics/parameters.hpp"

namespace proda::num {

// Binary layout, all integers and floats little-endian:
//   "PDCK" | u32 version | u32 count |
//   count x { u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 payload[numel] }
inline constexpr char kCheckpointMagic[4] = {'P', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  Shape shape;
  std::vector<double> values;
};

using CheckpointMap = std::map<std::string, CheckpointEntry>;

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore& store);
CheckpointMap decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes to `<path>.tmp` and renames over `path`.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
CheckpointMap read_checkpoint(const std::filesystem::path& path);

/// Copies every entry into the matching parameter. Names and shapes must match
/// the store exactly (no missing, no extra entries).
void load_into(ParameterStore& store, const CheckpointMap& checkpoint);

/// Atomic whole-file text write (temp file then rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace proda::num
