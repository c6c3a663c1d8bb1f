#pragma once

#include <sstream>
#include <string>

// Thin logging front end. libtorch bundles its own fmt, so the spdlog backend
// lives in a translation unit that never sees torch headers.
namespace voidseg::log {

enum class Level { Debug, Info, Warn, Error, Off };

void write(Level level, const std::string& message);

/// "debug", "info", "warn", "error" or "off".
void set_level(const std::string& name);

std::string fixed(double value, int digits);
std::string sci(double value, int digits);

template <typename... Parts>
std::string concat(const Parts&... parts) {
    std::ostringstream out;
    (out << ... << parts);
    return out.str();
}

template <typename... Parts>
void debug(const Parts&... parts) { write(Level::Debug, concat(parts...)); }
template <typename... Parts>
void info(const Parts&... parts) { write(Level::Info, concat(parts...)); }
template <typename... Parts>
void warn(const Parts&... parts) { write(Level::Warn, concat(parts...)); }
template <typename... Parts>
void error(const Parts&... parts) { write(Level::Error, concat(parts...)); }

}  // namespace voidseg::log
