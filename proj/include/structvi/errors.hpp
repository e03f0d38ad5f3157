#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace structvi {

/// Malformed input: length mismatch, non-positive scale, out-of-range observation.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A size guard on an O(T^2) test/oracle path was exceeded.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Elimination hit a zero or negative pivot.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(const std::string& what, std::size_t pivot_index)
      : std::runtime_error(what), pivot_index_(pivot_index) {}
  std::size_t pivot_index() const noexcept { return pivot_index_; }

 private:
  std::size_t pivot_index_;
};

/// Caller broke an API contract (e.g. a batch without its noise draws).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace structvi
