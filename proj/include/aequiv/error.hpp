#pragma once

#include <stdexcept>
#include <string>

namespace aequiv {

// Each category maps onto a distinct CLI exit code.
enum class ErrorKind {
  kUsage = 1,
  kIo = 2,
  kValidation = 3,
  kBridge = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

struct BridgeError : Error {
  explicit BridgeError(const std::string& what) : Error(ErrorKind::kBridge, what) {}
};

}  // namespace aequiv
