#include "proda/numerics/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "proda/errors.hpp"

namespace proda::num {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T take(const char* field) {
    need(sizeof(T), field);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string take_string(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(0, field, "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore& store) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.all().size()));
  for (const auto& p : store.all()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : p.tensor.data()) put<double>(out, v);
  }
  return out;
}

CheckpointMap decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.take_string(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw ParseError(0, "magic", "not a checkpoint file");
  }
  const auto version = in.take<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError(0, "version", "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.take<std::uint32_t>("count");
  CheckpointMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = in.take<std::uint32_t>("name_len");
    auto name = in.take_string(len, "name");
    CheckpointEntry entry;
    const auto rank = in.take<std::uint32_t>("rank");
    for (std::uint32_t r = 0; r < rank; ++r) {
      entry.shape.push_back(static_cast<std::size_t>(in.take<std::uint64_t>("dims")));
    }
    entry.values.resize(numel(entry.shape));
    for (auto& v : entry.values) v = in.take<double>("payload");
    if (!out.emplace(name, std::move(entry)).second) {
      throw ParseError(0, name, "duplicate checkpoint entry");
    }
  }
  if (!in.done()) throw ParseError(0, "payload", "trailing bytes after last entry");
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  auto bytes = encode_checkpoint(store);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

CheckpointMap read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_into(ParameterStore& store, const CheckpointMap& checkpoint) {
  for (const auto& [name, entry] : checkpoint) {
    if (!store.contains(name)) throw ParseError(0, name, "checkpoint entry has no parameter");
  }
  for (auto& p : store.all()) {
    auto it = checkpoint.find(p.name);
    if (it == checkpoint.end()) throw ParseError(0, p.name, "parameter missing from checkpoint");
    if (it->second.shape != p.tensor.shape()) {
      throw ParseError(0, p.name,
                       "shape mismatch " + to_string(it->second.shape) + " vs " +
                           to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

}  // namespace proda::num
