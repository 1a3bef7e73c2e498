#include "cxlsim/protocol.hpp"

#include <cstdio>

namespace cxlsim {

namespace {

constexpr std::uint16_t kDetMask = 0x3;
constexpr std::uint16_t kBufShift = 2;
constexpr std::uint16_t kBufMask = 0x3 << kBufShift;
constexpr std::uint16_t kHighMask = 0x3F0; // bits[9:4]

bool carries_annotation(FlitClass c) {
    return c == FlitClass::M2SReq || c == FlitClass::S2MNDR;
}

bool carries_payload(FlitClass c) {
    return c == FlitClass::M2SRwD || c == FlitClass::S2MDRS;
}

} // namespace

std::string to_string(const Annotation& a) {
    if (a.det == Determinism::Unannotated && a.buf == Bufferability::Unannotated)
        return "UA";
    std::string s;
    if (a.det == Determinism::Dt) s = "DT";
    else if (a.det == Determinism::Nd) s = "ND";
    if (a.buf != Bufferability::Unannotated) {
        if (!s.empty()) s += '+';
        s += (a.buf == Bufferability::Bf) ? "BF" : "NB";
    }
    return s;
}

const char* to_string(FlitClass c) {
    switch (c) {
    case FlitClass::M2SReq: return "M2SReq";
    case FlitClass::M2SRwD: return "M2SRwD";
    case FlitClass::S2MNDR: return "S2MNDR";
    case FlitClass::S2MDRS: return "S2MDRS";
    }
    return "?";
}

const char* to_string(FlitOpcode o) {
    switch (o) {
    case FlitOpcode::MemRd: return "MemRd";
    case FlitOpcode::MemWr: return "MemWr";
    case FlitOpcode::MemRdData: return "MemRdData";
    case FlitOpcode::Cmp: return "Cmp";
    case FlitOpcode::Gpf: return "GPF";
    }
    return "?";
}

std::uint16_t encode_annotation(const Annotation& a) {
    return static_cast<std::uint16_t>(static_cast<std::uint16_t>(a.det) |
                                      (static_cast<std::uint16_t>(a.buf) << kBufShift));
}

Annotation decode_annotation(std::uint16_t field) {
    if (field >= 1024) {
        throw ProtocolError(ProtocolError::Kind::ReservedBitsSet,
                            "annotation field wider than 10 bits");
    }
    if (field & kHighMask) {
        throw ProtocolError(ProtocolError::Kind::ReservedBitsSet,
                            "annotation bits[9:4] must be zero");
    }
    std::uint16_t det = field & kDetMask;
    std::uint16_t buf = (field & kBufMask) >> kBufShift;
    if (det == 3 || buf == 3) {
        throw ProtocolError(ProtocolError::Kind::InvalidCode,
                            "annotation code 11 is undefined");
    }
    return Annotation{static_cast<Determinism>(det), static_cast<Bufferability>(buf)};
}

void validate_flit(const Flit& f) {
    if (carries_payload(f.cls)) {
        if (f.payload_bytes != kLineBytes)
            throw ProtocolError(ProtocolError::Kind::InvalidCode,
                                "data flit must carry a 64 B payload");
        if (f.reserved != 0)
            throw ProtocolError(ProtocolError::Kind::ReservedBitsSet,
                                "data flits never carry annotations");
    } else {
        if (f.payload_bytes != 0)
            throw ProtocolError(ProtocolError::Kind::InvalidCode,
                                "request/response flit carries no payload");
        decode_annotation(f.reserved);
    }
    (void)carries_annotation(f.cls);
}

BuiltRequest build_request(const AccessRecord& record, const Annotation& a,
                           std::uint16_t tag) {
    if (record.address % kLineBytes != 0) {
        throw ProtocolError(ProtocolError::Kind::UnalignedAddress,
                            "address must be 64 B aligned");
    }
    BuiltRequest out;
    out.request.cls = FlitClass::M2SReq;
    out.request.address = record.address;
    out.request.tag = tag;
    out.request.reserved = encode_annotation(a);
    if (record.op == OpType::Store) {
        out.request.opcode = FlitOpcode::MemWr;
        Flit data;
        data.cls = FlitClass::M2SRwD;
        data.opcode = FlitOpcode::MemWr;
        data.address = record.address;
        data.tag = tag;
        data.payload_bytes = kLineBytes;
        data.reserved = 0;
        out.data = data;
    } else {
        out.request.opcode = FlitOpcode::MemRd;
    }
    validate_flit(out.request);
    if (out.data) validate_flit(*out.data);
    return out;
}

Flit make_response(const Flit& request) {
    Flit r;
    r.address = request.address;
    r.tag = request.tag;
    if (request.opcode == FlitOpcode::MemRd) {
        r.cls = FlitClass::S2MDRS;
        r.opcode = FlitOpcode::MemRdData;
        r.payload_bytes = kLineBytes;
        r.reserved = 0;
    } else {
        r.cls = FlitClass::S2MNDR;
        r.opcode = FlitOpcode::Cmp;
        r.payload_bytes = 0;
        r.reserved = request.reserved; // echoed; the host does not act on it
    }
    return r;
}

std::string debug_string(const Flit& f) {
    char resv[11];
    for (int i = 0; i < 10; ++i) {
        resv[i] = (f.reserved >> (9 - i)) & 1 ? '1' : '0';
    }
    resv[10] = '\0';
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s %s addr=0x%llx tag=%u resv=0b%s",
                  to_string(f.cls), to_string(f.opcode),
                  static_cast<unsigned long long>(f.address),
                  static_cast<unsigned>(f.tag), resv);
    return buf;
}

} // namespace cxlsim
