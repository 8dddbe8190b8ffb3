#include "mafn/log.hpp"

#include <atomic>
#include <iostream>

namespace mafn {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warn};
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warn(const std::string& msg) {
  if (g_level >= LogLevel::Warn) std::cerr << "warning: " << msg << '\n';
}

void log_info(const std::string& msg) {
  if (g_level >= LogLevel::Info) std::cerr << msg << '\n';
}

}  // namespace mafn
