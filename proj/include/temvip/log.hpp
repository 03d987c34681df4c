#ifndef TEMVIP_LOG_HPP
#define TEMVIP_LOG_HPP

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace temvip::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// TEMVIP_LOG=error|warn|info|debug, default warn. Read once.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("TEMVIP_LOG");
    if (!env) return Level::Warn;
    const std::string_view v(env);
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(threshold()); }

inline void write(Level l, std::string_view msg) {
  if (!enabled(l)) return;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  std::cerr << "temvip [" << tags[static_cast<int>(l)] << "] " << msg << '\n';
}

inline void error(std::string_view m) { write(Level::Error, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void debug(std::string_view m) { write(Level::Debug, m); }

}  // namespace temvip::log

#endif  // TEMVIP_LOG_HPP
