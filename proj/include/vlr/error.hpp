#pragma once

#include <stdexcept>
#include <string>

namespace vlr {

/// Error categories. Each maps onto a CLI exit code.
enum class ErrorKind {
  Usage,      // exit 2
  Config,     // exit 3
  Data,       // exit 4 (ingestion, cache miss, stale cache)
  Numerical,  // exit 5
  Context,    // sequence longer than the model context
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::Data, msg); }
inline Error numerical_error(const std::string& msg) { return Error(ErrorKind::Numerical, msg); }
inline Error context_error(const std::string& msg) { return Error(ErrorKind::Context, msg); }

const char* to_string(ErrorKind kind) noexcept;
int exit_code(ErrorKind kind) noexcept;

/// Warnings go to stderr unless a sink is installed (tests install one to count them).
using WarningSink = void (*)(const std::string&);
void set_warning_sink(WarningSink sink) noexcept;
void warn(const std::string& msg);

}  // namespace vlr
