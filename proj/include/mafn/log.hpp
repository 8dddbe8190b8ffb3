#ifndef MAFN_LOG_HPP
#define MAFN_LOG_HPP

#include <string>

namespace mafn {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes "warning: <msg>" to stderr unless quiet.
void log_warn(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace mafn

#endif  // MAFN_LOG_HPP
