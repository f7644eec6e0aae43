#pragma once

#include <stdexcept>
#include <string>

namespace insight {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Configuration / schema problems; the CLI maps these to exit code 1.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(message) {}
};

} // namespace insight
