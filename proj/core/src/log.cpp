#include "voidseg/log.hpp"

#include <cstdio>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace voidseg::log {

void write(Level level, const std::string& message) {
    switch (level) {
        case Level::Debug: spdlog::debug(message); break;
        case Level::Info: spdlog::info(message); break;
        case Level::Warn: spdlog::warn(message); break;
        case Level::Error: spdlog::error(message); break;
        case Level::Off: break;
    }
}

void set_level(const std::string& name) {
    if (name == "debug") spdlog::set_level(spdlog::level::debug);
    else if (name == "info") spdlog::set_level(spdlog::level::info);
    else if (name == "warn") spdlog::set_level(spdlog::level::warn);
    else if (name == "error") spdlog::set_level(spdlog::level::err);
    else if (name == "off") spdlog::set_level(spdlog::level::off);
    else throw std::invalid_argument("unknown log level '" + name + "'");
}

std::string fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    return buf;
}

std::string sci(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*e", digits, value);
    return buf;
}

}  // namespace voidseg::log
