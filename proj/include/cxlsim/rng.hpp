#ifndef CXLSIM_RNG_HPP
#define CXLSIM_RNG_HPP

#include <cstdint>

namespace cxlsim {

// splitmix64: the 64-bit-state generator with the reference mixing constants.
// Every random decision in a run derives from one root seed through split(),
// so a (seed, config) pair replays bit-identically.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 significant bits.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound). Bound must be nonzero.
    std::uint64_t next_below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    // Derive an independent sub-stream for the given tag.
    SplitMix64 split(std::uint64_t tag) const {
        SplitMix64 mixer(state_ ^ (0x9E3779B97F4A7C15ull * (tag + 1)));
        return SplitMix64(mixer.next());
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace cxlsim

#endif
