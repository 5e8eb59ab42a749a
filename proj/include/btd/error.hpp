#pragma once

#include <stdexcept>
#include <string>

namespace btd {

enum class ErrorKind {
  kShape,      // inconsistent dimensions
  kConfig,     // invalid parameter or configuration value
  kNumerical,  // failed factorization or non-finite data
  kIo,         // unreadable / unwritable files, malformed containers
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_shape(const std::string& what) {
  throw Error(ErrorKind::kShape, what);
}
[[noreturn]] inline void throw_config(const std::string& what) {
  throw Error(ErrorKind::kConfig, what);
}
[[noreturn]] inline void throw_numerical(const std::string& what) {
  throw Error(ErrorKind::kNumerical, what);
}
[[noreturn]] inline void throw_io(const std::string& what) {
  throw Error(ErrorKind::kIo, what);
}

}  // namespace btd
