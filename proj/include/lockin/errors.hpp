#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lockin {

/// Malformed or out-of-contract input (bad JSON line, bound violation,
/// duplicate step). `line()` is 1-based, 0 when not tied to a line.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Not enough valid observations to compute a statistic.
class InsufficientData : public std::runtime_error {
 public:
  explicit InsufficientData(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lockin
