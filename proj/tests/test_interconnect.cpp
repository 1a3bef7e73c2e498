#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "cxlsim/interconnect.hpp"
#include "cxlsim/errors.hpp"

using namespace cxlsim;

// ---------------------------------------------------------------------------
// Address map
// ---------------------------------------------------------------------------

TEST_CASE("resolve on a single-region map") {
    AddressMap map;
    map.add_region({0x1000, 0x2000, RegionKind::HdmCacheable, 3, -1, 0, 1});
    map.validate();
    Resolved r = map.resolve(0x1800);
    CHECK(r.endpoint == 3);
    CHECK(r.device_addr == 0x800);
    CHECK(r.cacheable);
    CHECK(r.vh == 1);
}

TEST_CASE("BAR regions resolve as non-cacheable") {
    AddressMap map;
    map.add_region({0, 0x1000, RegionKind::BarNonCacheable, 0, -1, 0, 0});
    map.validate();
    CHECK(!map.resolve(0).cacheable);
    AddressMap map2;
    map2.add_region({0, 0x1000, RegionKind::HostDram, 0, -1, 0, 0});
    CHECK(map2.resolve(0xfc0).cacheable);
}

TEST_CASE("gaps between regions are unmapped") {
    AddressMap map;
    map.add_region({0, 0x1000, RegionKind::HostDram, 0, -1, 0, 0});
    map.add_region({0x2000, 0x1000, RegionKind::HdmCacheable, 0, -1, 0, 0});
    map.validate();
    CHECK_THROWS_AS(map.resolve(0x1800), SimError);
    CHECK_THROWS_AS(map.resolve(0x3000), SimError);
}

TEST_CASE("region disjointness, checked exhaustively around boundaries") {
    AddressMap map;
    map.add_region({0, 4096, RegionKind::HostDram, 0, -1, 0, 0});
    map.add_region({4096, 4096, RegionKind::HdmCacheable, 0, -1, 0, 0});
    map.add_region({8192, 4096, RegionKind::BarNonCacheable, 0, -1, 0, 0});
    map.validate();
    // Every address near every boundary resolves to exactly one region.
    for (std::uint64_t edge : {std::uint64_t(4096), std::uint64_t(8192)}) {
        for (std::int64_t d : {-1, 0, 1}) {
            std::uint64_t addr = edge + d;
            int covering = 0;
            for (const Region& r : map.regions()) {
                if (addr >= r.base && addr < r.base + r.size) ++covering;
            }
            CHECK(covering == 1);
            CHECK_NOTHROW(map.resolve(addr));
        }
    }
    AddressMap overlap;
    overlap.add_region({0, 4096, RegionKind::HostDram, 0, -1, 0, 0});
    overlap.add_region({4095, 4096, RegionKind::HostDram, 0, -1, 0, 0});
    CHECK_THROWS_AS(overlap.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Link timing
// ---------------------------------------------------------------------------

TEST_CASE("transfer_latency matches the serialization formula") {
    LinkConfig x4{4, 64, 25 * kPsPerNs, 16};
    LinkConfig x8{8, 64, 25 * kPsPerNs, 16};
    CHECK(x4.bytes_per_ns() == 32);
    CHECK(x8.bytes_per_ns() == 64);
    CHECK(transfer_latency(64, x4, 1) == 27500); // 25 + 80/32 ns
    CHECK(transfer_latency(0, x8, 1) == 25250);  // 25 + 16/64 ns
    CHECK(transfer_latency(64, x4, 3) == 77500); // hop scaling
    CHECK_THROWS_AS(transfer_latency(64, x4, 0), SimError);
}

TEST_CASE("link config validation") {
    LinkConfig bad{6, 64, 25 * kPsPerNs, 16};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(LinkConfig{}.validate());
}

// ---------------------------------------------------------------------------
// Topology building and validation
// ---------------------------------------------------------------------------

namespace {

TopologySpec two_host_mld_spec() {
    TopologySpec spec;
    spec.hosts = 2;
    spec.switches.push_back({"sw0", 64});
    spec.endpoints.push_back({"ssd0", EndpointKind::FlashSsd, 1ull << 30, 2});
    spec.edges = {{"host0", "sw0"}, {"host1", "sw0"}, {"sw0", "ssd0"}};
    spec.vhs.push_back({0, {"sw0"}, "ssd0", 0});
    spec.vhs.push_back({1, {"sw0"}, "ssd0", 1});
    return spec;
}

} // namespace

TEST_CASE("mld partitioning: even split, remainder to the last") {
    auto parts = partition_mld(32ull << 30, 2);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].base == 0);
    CHECK(parts[0].size == 16ull << 30);
    CHECK(parts[1].base == 16ull << 30);
    CHECK(parts[1].size == 16ull << 30);

    auto odd = partition_mld(10 * 4096, 3);
    CHECK(odd[0].size == odd[1].size);
    CHECK(odd[2].size == 10 * 4096 - 2 * odd[0].size);
    std::uint64_t total = 0;
    for (const auto& p : odd) total += p.size;
    CHECK(total == 10 * 4096);

    CHECK_THROWS_WITH_AS(partition_mld(1 << 30, 17),
                         doctest::Contains("TooManyMlds"), ConfigError);
    CHECK_THROWS_AS(partition_mld(1 << 30, 0), ConfigError);
}

TEST_CASE("two-host MLD topology builds and binds VHs") {
    Topology topo = Topology::build(two_host_mld_spec());
    CHECK(topo.vhs().size() == 2);
    CHECK(topo.find_vh(0, 0, 0) == 0);
    CHECK(topo.find_vh(1, 0, 1) == 1);
    CHECK_THROWS_WITH_AS(topo.find_vh(0, 0, 1), doctest::Contains("NoVhBinding"), SimError);
    CHECK(topo.vhs()[0].links.size() == 2); // host->switch->endpoint
    // Partition capacities sum to the device capacity.
    std::uint64_t total = 0;
    for (const auto& p : topo.partitions(0)) total += p.size;
    CHECK(total == 1ull << 30);
}

TEST_CASE("switch port budget: 5 x16 ports will not fit in 64 lanes") {
    TopologySpec spec;
    spec.hosts = 1;
    spec.switches.push_back({"sw0", 64});
    for (int i = 0; i < 4; ++i) {
        spec.endpoints.push_back(
            {"ssd" + std::to_string(i), EndpointKind::FlashSsd, 1 << 30, 1});
        spec.edges.emplace_back("sw0", "ssd" + std::to_string(i));
    }
    spec.edges.emplace_back("host0", "sw0"); // fifth port
    spec.vhs.push_back({0, {"sw0"}, "ssd0", -1});
    CHECK_THROWS_WITH_AS(Topology::build(spec), doctest::Contains("PortBudgetExceeded"),
                         ConfigError);
    // With 128 lanes the same wiring is fine.
    spec.switches[0].lanes_total = 128;
    CHECK_NOTHROW(Topology::build(spec));
}

TEST_CASE("a partition claimed by two VHs is rejected") {
    TopologySpec spec = two_host_mld_spec();
    spec.vhs[1].mld_index = 0;
    CHECK_THROWS_WITH_AS(Topology::build(spec), doctest::Contains("PartitionConflict"),
                         ConfigError);
}

TEST_CASE("VH paths must follow existing edges") {
    TopologySpec spec = two_host_mld_spec();
    spec.vhs[0].path = {}; // host0 -> ssd0 directly, but no such edge exists
    CHECK_THROWS_AS(Topology::build(spec), ConfigError);
}

TEST_CASE("mld_count outside 1..16 is rejected at build") {
    TopologySpec spec = two_host_mld_spec();
    spec.endpoints[0].mld_count = 17;
    CHECK_THROWS_WITH_AS(Topology::build(spec), doctest::Contains("TooManyMlds"), ConfigError);
}

// ---------------------------------------------------------------------------
// Fabric routing
// ---------------------------------------------------------------------------

TEST_CASE("direct VH delivers after the 1-hop latency") {
    EventQueue eq;
    Fabric fabric(eq, Topology::direct(EndpointKind::FlashSsd, 1 << 30),
                  LinkConfig{4, 64, 25 * kPsPerNs, 16});
    Flit f;
    f.cls = FlitClass::M2SReq;
    f.opcode = FlitOpcode::MemRd;
    Tick arrived = 0;
    fabric.route_to_endpoint(f, 0, [&](const Flit&, Tick t) { arrived = t; });
    eq.run_all();
    CHECK(arrived == 25500); // 25 ns + 16 B / 32 B/ns
}

TEST_CASE("two flits on one link serialize") {
    EventQueue eq;
    Fabric fabric(eq, Topology::direct(EndpointKind::FlashSsd, 1 << 30),
                  LinkConfig{4, 64, 25 * kPsPerNs, 16});
    Flit f;
    f.cls = FlitClass::M2SRwD;
    f.opcode = FlitOpcode::MemWr;
    f.payload_bytes = 64;
    std::vector<Tick> arrivals;
    fabric.route_to_endpoint(f, 0, [&](const Flit&, Tick t) { arrivals.push_back(t); });
    fabric.route_to_endpoint(f, 0, [&](const Flit&, Tick t) { arrivals.push_back(t); });
    eq.run_all();
    REQUIRE(arrivals.size() == 2);
    CHECK(arrivals[0] == 27500);
    CHECK(arrivals[1] - arrivals[0] == 2500); // 80 B at 32 B/ns behind the first
}

TEST_CASE("opposite directions do not contend") {
    EventQueue eq;
    Fabric fabric(eq, Topology::direct(EndpointKind::FlashSsd, 1 << 30), LinkConfig{});
    Flit f;
    Tick down = 0, up = 0;
    fabric.route_to_endpoint(f, 0, [&](const Flit&, Tick t) { down = t; });
    fabric.route_to_host(f, 0, [&](const Flit&, Tick t) { up = t; });
    eq.run_all();
    CHECK(down == up); // full duplex
}

TEST_CASE("multi-hop paths reserve every link and add per-hop latency") {
    TopologySpec spec;
    spec.hosts = 1;
    spec.switches.push_back({"sw0", 64});
    spec.switches.push_back({"sw1", 64});
    spec.endpoints.push_back({"ssd0", EndpointKind::FlashSsd, 1 << 30, 1});
    spec.edges = {{"host0", "sw0"}, {"sw0", "sw1"}, {"sw1", "ssd0"}};
    spec.vhs.push_back({0, {"sw0", "sw1"}, "ssd0", -1});
    EventQueue eq;
    Fabric fabric(eq, Topology::build(spec), LinkConfig{4, 64, 25 * kPsPerNs, 16});
    Flit f;
    f.payload_bytes = 64;
    f.cls = FlitClass::M2SRwD;
    Tick arrived = 0;
    fabric.route_to_endpoint(f, 0, [&](const Flit&, Tick t) { arrived = t; });
    eq.run_all();
    CHECK(arrived == 77500); // 3 hops + one 80 B serialization
    for (std::uint32_t l = 0; l < 3; ++l) CHECK(fabric.bytes_sent(l, false) == 80);
    // Conservation: bytes entering equal bytes leaving each link.
    CHECK(fabric.bytes_sent(0, false) == fabric.bytes_sent(2, false));
}

TEST_CASE("gpf broadcast completes after every endpoint flushes") {
    EventQueue eq;
    Fabric fabric(eq, Topology::direct(EndpointKind::FlashSsd, 1 << 30), LinkConfig{});
    bool flushed = false;
    Tick done_at = 0;
    fabric.gpf_broadcast(
        {0},
        [&](std::uint32_t ep, Tick arrival, std::function<void(Tick)> cb) {
            CHECK(ep == 0);
            flushed = true;
            cb(arrival + 100 * kPsPerUs); // pretend the flush took 100 us
        },
        [&](Tick t) { done_at = t; });
    eq.run_all();
    CHECK(flushed);
    CHECK(done_at > 100 * kPsPerUs); // flush time plus both trips
    CHECK(done_at < 101 * kPsPerUs); // but only link overhead on top
}
