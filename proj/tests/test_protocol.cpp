#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "cxlsim/protocol.hpp"

using namespace cxlsim;

namespace {

const Determinism kDets[] = {Determinism::Unannotated, Determinism::Dt, Determinism::Nd};
const Bufferability kBufs[] = {Bufferability::Unannotated, Bufferability::Bf,
                               Bufferability::Nb};

} // namespace

TEST_CASE("encode_annotation bit layout") {
    CHECK(encode_annotation({Determinism::Unannotated, Bufferability::Unannotated}) == 0);
    CHECK(encode_annotation({Determinism::Dt, Bufferability::Nb}) == 0b0000001001);
    CHECK(encode_annotation({Determinism::Nd, Bufferability::Bf}) == 0b0000000110);
    CHECK(encode_annotation({Determinism::Dt, Bufferability::Unannotated}) == 0b01);
    CHECK(encode_annotation({Determinism::Unannotated, Bufferability::Nb}) == 0b1000);
}

TEST_CASE("encode is injective over the 9 states") {
    std::set<std::uint16_t> seen;
    for (Determinism d : kDets) {
        for (Bufferability b : kBufs) {
            std::uint16_t field = encode_annotation({d, b});
            CHECK(field < 1024);
            CHECK((field & 0x3F0) == 0); // bits[9:4] stay zero
            CHECK(seen.insert(field).second);
        }
    }
    CHECK(seen.size() == 9);
}

TEST_CASE("decode round-trips every valid annotation") {
    for (Determinism d : kDets) {
        for (Bufferability b : kBufs) {
            Annotation a{d, b};
            CHECK(decode_annotation(encode_annotation(a)) == a);
        }
    }
}

TEST_CASE("decode error paths") {
    CHECK(decode_annotation(0) == Annotation{});
    CHECK(decode_annotation(0b0000001001) ==
          Annotation{Determinism::Dt, Bufferability::Nb});
    CHECK_THROWS_AS(decode_annotation(0b1000000000), ProtocolError);
    CHECK_THROWS_AS(decode_annotation(0b0000010000), ProtocolError);
    CHECK_THROWS_AS(decode_annotation(0b0000000011), ProtocolError); // det code 11
    CHECK_THROWS_AS(decode_annotation(0b0000001100), ProtocolError); // buf code 11
    CHECK_THROWS_AS(decode_annotation(1024), ProtocolError);
}

TEST_CASE("decode fuzz: every 10-bit field either decodes or throws a typed error") {
    int ok = 0, err = 0;
    for (std::uint16_t f = 0; f < 1024; ++f) {
        try {
            Annotation a = decode_annotation(f);
            CHECK(encode_annotation(a) == f);
            ++ok;
        } catch (const ProtocolError&) {
            ++err;
        }
    }
    CHECK(ok == 9);
    CHECK(ok + err == 1024);
}

TEST_CASE("build_request for loads") {
    AccessRecord rec{OpType::Load, 0x1000, 7, 0};
    BuiltRequest br = build_request(rec, {Determinism::Dt, Bufferability::Unannotated}, 3);
    CHECK(br.request.cls == FlitClass::M2SReq);
    CHECK(br.request.opcode == FlitOpcode::MemRd);
    CHECK(br.request.address == 0x1000);
    CHECK(br.request.tag == 3);
    CHECK(br.request.reserved == 0b01);
    CHECK(br.request.payload_bytes == 0);
    CHECK(!br.data.has_value());
}

TEST_CASE("build_request for stores carries a zero-annotation data flit") {
    AccessRecord rec{OpType::Store, 0x0, 1, 0};
    BuiltRequest br = build_request(rec, {Determinism::Unannotated, Bufferability::Nb}, 9);
    CHECK(br.request.opcode == FlitOpcode::MemWr);
    CHECK(br.request.reserved == 0b1000);
    REQUIRE(br.data.has_value());
    CHECK(br.data->cls == FlitClass::M2SRwD);
    CHECK(br.data->payload_bytes == 64);
    CHECK(br.data->reserved == 0);
}

TEST_CASE("build_request rejects unaligned addresses") {
    AccessRecord rec{OpType::Load, 0x7, 0, 0};
    CHECK_THROWS_AS(build_request(rec, {}, 0), ProtocolError);
}

TEST_CASE("data flits never carry annotations") {
    Flit bad;
    bad.cls = FlitClass::M2SRwD;
    bad.opcode = FlitOpcode::MemWr;
    bad.payload_bytes = 64;
    bad.reserved = 1;
    CHECK_THROWS_AS(validate_flit(bad), ProtocolError);
    bad.cls = FlitClass::S2MDRS;
    bad.opcode = FlitOpcode::MemRdData;
    CHECK_THROWS_AS(validate_flit(bad), ProtocolError);
    bad.reserved = 0;
    CHECK_NOTHROW(validate_flit(bad));
}

TEST_CASE("responses: DRS for reads, annotation-echoing NDR for writes") {
    AccessRecord load{OpType::Load, 0x40, 0, 0};
    Flit drs = make_response(build_request(load, {Determinism::Dt, Bufferability::Bf}, 1).request);
    CHECK(drs.cls == FlitClass::S2MDRS);
    CHECK(drs.opcode == FlitOpcode::MemRdData);
    CHECK(drs.payload_bytes == 64);
    CHECK(drs.reserved == 0);

    AccessRecord store{OpType::Store, 0x40, 0, 0};
    Flit req = build_request(store, {Determinism::Dt, Bufferability::Bf}, 2).request;
    Flit ndr = make_response(req);
    CHECK(ndr.cls == FlitClass::S2MNDR);
    CHECK(ndr.opcode == FlitOpcode::Cmp);
    CHECK(ndr.payload_bytes == 0);
    CHECK(ndr.reserved == req.reserved);
    CHECK(decode_annotation(ndr.reserved) ==
          Annotation{Determinism::Dt, Bufferability::Bf});
}

TEST_CASE("debug serialization golden lines") {
    AccessRecord rec{OpType::Load, 0x1000, 0, 0};
    Flit f = build_request(rec, {Determinism::Dt, Bufferability::Unannotated}, 3).request;
    CHECK(debug_string(f) == "M2SReq MemRd addr=0x1000 tag=3 resv=0b0000000001");

    Flit g;
    g.cls = FlitClass::S2MDRS;
    g.opcode = FlitOpcode::MemRdData;
    g.address = 0xdead00;
    g.tag = 65535;
    g.payload_bytes = 64;
    CHECK(debug_string(g) == "S2MDRS MemRdData addr=0xdead00 tag=65535 resv=0b0000000000");

    Flit gpf;
    gpf.cls = FlitClass::M2SReq;
    gpf.opcode = FlitOpcode::Gpf;
    CHECK(debug_string(gpf) == "M2SReq GPF addr=0x0 tag=0 resv=0b0000000000");
}

TEST_CASE("annotation CSV names are stable") {
    CHECK(to_string(Annotation{}) == "UA");
    CHECK(to_string(Annotation{Determinism::Dt, Bufferability::Unannotated}) == "DT");
    CHECK(to_string(Annotation{Determinism::Unannotated, Bufferability::Nb}) == "NB");
    CHECK(to_string(Annotation{Determinism::Nd, Bufferability::Bf}) == "ND+BF");
    CHECK(to_string(Annotation{Determinism::Dt, Bufferability::Nb}) == "DT+NB");
}
