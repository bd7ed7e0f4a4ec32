#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proda {

/// Violated precondition or structural invariant (shape mismatch, bad ids, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A forward value became NaN/Inf. Carries the name of the producing op.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error(what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Malformed dataset/config/checkpoint input. Line is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what)
      : std::runtime_error(format(line, field, what)),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(std::size_t line, const std::string& field,
                            const std::string& what) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += field + ": ";
    return out + what;
  }

  std::size_t line_;
  std::string field_;
};

}  // namespace proda
