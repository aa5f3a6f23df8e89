#pragma once

#include <stdexcept>
#include <string>

namespace msce {

// Error taxonomy mirrored by the C API status codes and CLI exit codes.
enum class ErrorKind {
    invalid_argument,  // bad call/config/flags
    data,              // file parsing, shape mismatches, malformed inputs
    protocol,          // wire-format violations
    numeric,           // non-finite values, failed numeric contracts
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_invalid(const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void fail_protocol(const std::string& msg) { throw Error(ErrorKind::protocol, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }

}  // namespace msce
