#ifndef CXLSIM_PROTOCOL_HPP
#define CXLSIM_PROTOCOL_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "cxlsim/errors.hpp"
#include "cxlsim/record.hpp"

namespace cxlsim {

// Determinism hint: DT demands handling without internal-task interference,
// ND permits fire-and-forget handling. Unannotated falls back to the device
// default (which behaves like ND).
enum class Determinism : std::uint8_t { Unannotated = 0, Dt = 1, Nd = 2 };

// Bufferability hint: BF permits buffering in device DRAM (plus pinning and
// sequential prefetch here), NB demands a durable write-through. Unannotated
// falls back to the device default (which behaves like BF).
enum class Bufferability : std::uint8_t { Unannotated = 0, Bf = 1, Nb = 2 };

struct Annotation {
    Determinism det = Determinism::Unannotated;
    Bufferability buf = Bufferability::Unannotated;

    bool operator==(const Annotation&) const = default;
};

// Stable short form used in CSV output: "UA", "DT", "NB", "DT+BF", ...
std::string to_string(const Annotation& a);

enum class FlitClass : std::uint8_t { M2SReq, M2SRwD, S2MNDR, S2MDRS };
enum class FlitOpcode : std::uint8_t { MemRd, MemWr, MemRdData, Cmp, Gpf };

const char* to_string(FlitClass c);
const char* to_string(FlitOpcode o);

// One CXL.mem message. Request/response classes carry the 10-bit annotation
// field in `reserved`; data-bearing classes must leave it zero.
struct Flit {
    FlitClass cls = FlitClass::M2SReq;
    FlitOpcode opcode = FlitOpcode::MemRd;
    std::uint64_t address = 0;      // device-local byte address, 64 B aligned
    std::uint16_t tag = 0;
    std::uint16_t payload_bytes = 0; // 0 or 64
    std::uint16_t reserved = 0;      // 10-bit field, annotations only

    bool operator==(const Flit&) const = default;
};

// Layout of the 10-bit field: bits[1:0] determinism (00 unannotated, 01 DT,
// 10 ND), bits[3:2] bufferability (00 unannotated, 01 BF, 10 NB), bits[9:4]
// zero. Injective over the 9 valid states.
std::uint16_t encode_annotation(const Annotation& a);

// Inverse of encode_annotation. Throws ProtocolError with ReservedBitsSet if
// bits[9:4] are nonzero and InvalidCode if either two-bit code is 11.
Annotation decode_annotation(std::uint16_t field);

// Throws ProtocolError if the flit breaks a class invariant (payload size,
// annotation on a data flit, reserved field overflow).
void validate_flit(const Flit& f);

struct BuiltRequest {
    Flit request;
    std::optional<Flit> data; // companion M2SRwD when the record is a store
};

// Loads yield one M2SReq(MemRd); stores yield M2SReq(MemWr) plus an M2SRwD
// carrying the 64 B payload. Throws ProtocolError(UnalignedAddress).
BuiltRequest build_request(const AccessRecord& record, const Annotation& a,
                           std::uint16_t tag);

// Completion for a request flit: S2M DRS for MemRd, S2M NDR for MemWr and
// Gpf. The NDR echoes the request's annotation field; data flits carry none.
Flit make_response(const Flit& request);

// One line per flit: `CLASS OPCODE addr=0x%x tag=%u resv=0b%010b`.
std::string debug_string(const Flit& f);

} // namespace cxlsim

#endif
