#pragma once

#include <stdexcept>
#include <string>

namespace routenet {

// Categories map one-to-one onto CLI exit codes (see tools/README section of
// the top-level README).
enum class ErrorKind {
  kInvalidArgument = 2,
  kIo = 3,
  kSchema = 4,
  kRuntime = 5,
  kNumerical = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what, ErrorKind kind = ErrorKind::kInvalidArgument) {
  if (!cond) throw Error(kind, what);
}

}  // namespace routenet
