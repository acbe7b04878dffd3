#pragma once

#include <stdexcept>
#include <string>

namespace cac {

/// Invalid input, configuration or model (CLI exit code 2).
class config_error : public std::invalid_argument {
 public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

/// File could not be read or written (CLI exit code 3).
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cac
