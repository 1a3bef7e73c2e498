#ifndef CXLSIM_CONFIG_HPP
#define CXLSIM_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cxlsim/system.hpp"
#include "cxlsim/workload.hpp"

namespace cxlsim {

struct WorkloadSpec {
    enum class Type : std::uint8_t { ApexMap, Mix, Stream, Trace } type = Type::ApexMap;
    ApexMapConfig apex;
    MixConfig mix;
    StreamConfig stream;
    std::string trace_path;

    std::uint64_t footprint_bytes() const;
    void validate() const;
};

struct FullConfig {
    SystemConfig system;
    WorkloadSpec workload;
};

// Parses and validates a JSON config file. Keys follow the documented
// schema; unknown keys are rejected so typos fail loudly. Errors carry the
// offending field path.
FullConfig load_config(const std::string& path);
FullConfig parse_config_text(const std::string& text);

// Generates the configured access stream, cores assigned.
std::vector<AccessRecord> generate_workload(const WorkloadSpec& spec, std::uint64_t seed,
                                            std::uint32_t cores);

} // namespace cxlsim

#endif
