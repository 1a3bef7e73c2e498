#ifndef CXLSIM_WORKLOAD_HPP
#define CXLSIM_WORKLOAD_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cxlsim/record.hpp"
#include "cxlsim/rng.hpp"

namespace cxlsim {

// ---------------------------------------------------------------------------
// Apex-Map style power-law locality generator
// ---------------------------------------------------------------------------

struct ApexMapConfig {
    double alpha = 1.0;             // (0,1]: 1 uniform, ->0 concentrates at 0
    std::uint64_t footprint_bytes = 0;
    std::uint64_t count = 0;
    double load_fraction = 1.0;
    std::uint32_t request_bytes = 64;

    void validate() const;
};

// Draw u ~ U(0,1); index = floor((M/64) * u^(1/alpha)); address = 64 * index.
AccessRecord apexmap_next(SplitMix64& rng, const ApexMapConfig& cfg);
std::vector<AccessRecord> apexmap_generate(const ApexMapConfig& cfg, SplitMix64 rng);

// ---------------------------------------------------------------------------
// STREAM kernels
// ---------------------------------------------------------------------------

enum class StreamKernel : std::uint8_t { Copy, Scale, Add, Triad };

StreamKernel stream_kernel_from_string(const std::string& s);
const char* to_string(StreamKernel k);

struct StreamConfig {
    StreamKernel kernel = StreamKernel::Copy;
    std::uint64_t elements = 0; // 64 B elements per array
    std::uint32_t threads = 1;
    std::uint64_t base_address = 0;

    void validate() const;
    // Arrays a, b, c live back to back from base_address.
    std::uint64_t footprint_bytes() const { return 3 * elements * kLineBytes; }
};

// Per-element access sequences: Copy/Scale load a, store b; Add loads a and b,
// stores c; Triad loads b and c, stores a. Threads own contiguous element
// ranges and advance sequentially.
std::vector<AccessRecord> stream_gen(const StreamConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic mixes with function ids
// ---------------------------------------------------------------------------

struct MixConfig {
    double load_pct = 0.0;
    double store_pct = 0.0;
    double compute_pct = 1.0;
    std::uint64_t footprint_bytes = 0;
    double alpha = 0.05;            // per-mix locality of the address draw
    double function_zipf_s = 1.2;
    std::uint32_t function_count = 64;
    std::uint64_t count = 0;

    void validate() const;
};

// Op classes are drawn i.i.d.; the function id is Zipf-distributed and each
// function owns a contiguous footprint slice, addressed with apexmap
// locality inside the slice.
std::vector<AccessRecord> mix_gen(const MixConfig& cfg, SplitMix64 rng);

// ---------------------------------------------------------------------------
// Trace files: `OP ADDRESS_HEX FUNCTION_ID`, '#' comments
// ---------------------------------------------------------------------------

std::vector<AccessRecord> load_trace(const std::string& path);
void write_trace(const std::string& path, const std::vector<AccessRecord>& stream);

// Deterministic round-robin core assignment for a flat stream.
void assign_cores(std::vector<AccessRecord>& stream, std::uint32_t cores);

} // namespace cxlsim

#endif
