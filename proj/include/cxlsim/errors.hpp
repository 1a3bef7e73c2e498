#ifndef CXLSIM_ERRORS_HPP
#define CXLSIM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cxlsim {

// Invalid configuration, workload file, or topology. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Broken runtime contract (scheduling in the past, unmapped address,
// out-of-range device access, ...). CLI exit code 2.
class SimError : public std::runtime_error {
public:
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed protocol field contents.
class ProtocolError : public SimError {
public:
    enum class Kind { ReservedBitsSet, InvalidCode, UnalignedAddress };

    ProtocolError(Kind k, const std::string& what) : SimError(what), kind(k) {}

    Kind kind;
};

} // namespace cxlsim

#endif
