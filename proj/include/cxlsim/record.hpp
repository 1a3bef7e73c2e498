#ifndef CXLSIM_RECORD_HPP
#define CXLSIM_RECORD_HPP

#include <cstdint>

namespace cxlsim {

enum class OpType : std::uint8_t { Load, Store, Compute };

// One host instruction; the unit flowing through the whole pipeline.
// Memory ops carry a 64 B aligned address, compute ops carry none.
struct AccessRecord {
    OpType op = OpType::Compute;
    std::uint64_t address = 0;
    std::uint32_t function_id = 0;
    std::uint32_t core = 0;

    bool operator==(const AccessRecord&) const = default;
};

inline constexpr std::uint32_t kLineBytes = 64;

} // namespace cxlsim

#endif
