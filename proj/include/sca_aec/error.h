#pragma once

#include <stdexcept>
#include <string>

namespace sca_aec {

// Error categories map onto CLI exit codes (usage=1, data=2, numerical=3).
enum class ErrorKind { kUsage = 1, kData = 2, kNumerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void FailUsage(const std::string& what) {
  throw Error(ErrorKind::kUsage, what);
}
[[noreturn]] inline void FailData(const std::string& what) {
  throw Error(ErrorKind::kData, what);
}
[[noreturn]] inline void FailNumerical(const std::string& what) {
  throw Error(ErrorKind::kNumerical, what);
}

#define SCA_CHECK(cond, msg)                                            \
  do {                                                                  \
    if (!(cond)) ::sca_aec::FailUsage(std::string(msg));                \
  } while (0)

}  // namespace sca_aec
