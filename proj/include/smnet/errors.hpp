#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace smnet {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;

  DimensionError(const std::string& what, const std::vector<std::size_t>& a,
                 const std::vector<std::size_t>& b)
      : std::invalid_argument(what + ": " + shape_string(a) + " vs " + shape_string(b)) {}
};

// Backward on an empty or truncated tape, or an environment used out of order.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values where finite ones are required. Carries the offending name.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string name, const std::string& what)
      : std::runtime_error(what + " (" + name + ")"), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smnet
