#ifndef CXLSIM_TIME_HPP
#define CXLSIM_TIME_HPP

#include <cstdint>

namespace cxlsim {

// Simulated time in picoseconds. The picosecond keeps 4 GHz CPU cycles
// (250 ps), DRAM timings (9.1 ns, 12.5 ns) and flash timings (3 us - 1 ms)
// all exactly representable as integers.
using Tick = std::uint64_t;

inline constexpr Tick kPsPerNs = 1000;
inline constexpr Tick kPsPerUs = 1000ull * 1000;
inline constexpr Tick kPsPerMs = 1000ull * 1000 * 1000;

constexpr Tick ps_from_ns(double ns) { return static_cast<Tick>(ns * 1000.0 + 0.5); }
constexpr Tick ps_from_us(double us) { return static_cast<Tick>(us * 1.0e6 + 0.5); }
constexpr Tick ps_from_ms(double ms) { return static_cast<Tick>(ms * 1.0e9 + 0.5); }

} // namespace cxlsim

#endif
