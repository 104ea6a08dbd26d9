#pragma once

#include <stdexcept>
#include <string>

namespace recseg {

/// Malformed input text (volume header, config file, CSV manifest).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Data that parsed but is internally inconsistent (payload size, missing
/// pseudo-labels, class values out of range).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Distance metrics are undefined when one of the operands is empty.
class UndefinedMetricError : public std::domain_error {
 public:
  enum class Operand { kFirst, kSecond, kBoth };

  UndefinedMetricError(Operand which, const std::string& what)
      : std::domain_error(what), which_(which) {}
  Operand operand() const noexcept { return which_; }

 private:
  Operand which_;
};

}  // namespace recseg
