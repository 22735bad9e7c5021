#pragma once

#include <stdexcept>
#include <string>

namespace nmrdecon {

/// Malformed or inconsistent input data (spectrum files, catalogs, report inputs).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A run configuration that cannot be executed (e.g. catalog does not overlap the spectrum).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric fault inside the sampler; carries a state dump for diagnosis.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace nmrdecon
