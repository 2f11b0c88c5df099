#include "vlr/error.hpp"

#include <atomic>
#include <iostream>

namespace vlr {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Context: return "context";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Config: return 3;
    case ErrorKind::Data: return 4;
    case ErrorKind::Numerical: return 5;
    case ErrorKind::Context: return 4;
  }
  return 1;
}

namespace {
std::atomic<WarningSink> g_sink{nullptr};
}

void set_warning_sink(WarningSink sink) noexcept { g_sink.store(sink); }

void warn(const std::string& msg) {
  if (auto sink = g_sink.load()) {
    sink(msg);
    return;
  }
  std::cerr << "warning: " << msg << '\n';
}

}  // namespace vlr
