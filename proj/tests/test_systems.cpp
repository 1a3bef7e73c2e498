#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "cxlsim/config.hpp"
#include "cxlsim/system.hpp"

using namespace cxlsim;

namespace {

SystemConfig base_cfg(SystemKind kind, std::uint64_t region_mib = 64) {
    SystemConfig cfg;
    cfg.kind = kind;
    cfg.region_size = region_mib << 20;
    cfg.flash.capacity = region_mib << 20;
    cfg.seed = 1;
    return cfg;
}

std::vector<AccessRecord> apex_stream(double alpha, std::uint64_t count,
                                      std::uint64_t footprint_mib, double load_fraction,
                                      std::uint32_t cores, std::uint64_t seed = 1) {
    ApexMapConfig a;
    a.alpha = alpha;
    a.footprint_bytes = footprint_mib << 20;
    a.count = count;
    a.load_fraction = load_fraction;
    auto s = apexmap_generate(a, SplitMix64(seed).split(1));
    assign_cores(s, cores);
    return s;
}

std::string csv_of(const StatsReport& r) {
    std::ostringstream os;
    r.write_csv(os);
    return os.str();
}

} // namespace

TEST_CASE("all five kinds build and run the same stream") {
    auto stream = apex_stream(0.1, 5000, 64, 0.9, 4);
    for (SystemKind k : {SystemKind::Dram, SystemKind::CxlDram, SystemKind::PcieSsd,
                         SystemKind::CxlSsd, SystemKind::CxlAssd}) {
        SystemConfig cfg = base_cfg(k);
        StatsReport r = run_system(cfg, stream);
        CHECK(r.completed() == 5000);
        CHECK(r.issued() == r.completed());
        CHECK(r.total_ticks() > 0);
    }
}

TEST_CASE("empty workload: zero samples, clock never advances") {
    StatsReport r = run_system(base_cfg(SystemKind::CxlSsd), {});
    CHECK(r.completed() == 0);
    CHECK(r.total_ticks() == 0);
}

TEST_CASE("kind isolation: the workload stream is shared, untouched, bit-identical") {
    auto stream = apex_stream(0.5, 2000, 64, 1.0, 4);
    auto copy = stream;
    run_system(base_cfg(SystemKind::Dram), stream);
    run_system(base_cfg(SystemKind::PcieSsd), stream);
    CHECK(stream == copy);
}

TEST_CASE("PcieSsd is strictly slower than Dram on any memory workload") {
    auto stream = apex_stream(0.5, 3000, 64, 1.0, 4);
    StatsReport dram = run_system(base_cfg(SystemKind::Dram), stream);
    StatsReport pcie = run_system(base_cfg(SystemKind::PcieSsd), stream);
    CHECK(pcie.total_ticks() > dram.total_ticks());
    CHECK(ratio_to_baseline(pcie, dram) > 1.0);
}

TEST_CASE("normalization sanity: a report against itself is exactly 1") {
    auto stream = apex_stream(1.0, 500, 64, 1.0, 4);
    StatsReport r = run_system(base_cfg(SystemKind::CxlDram), stream);
    CHECK(ratio_to_baseline(r, r) == 1.0);
}

TEST_CASE("double run determinism: byte-identical CSV for every kind") {
    for (SystemKind k : {SystemKind::Dram, SystemKind::CxlDram, SystemKind::PcieSsd,
                         SystemKind::CxlSsd, SystemKind::CxlAssd}) {
        SystemConfig cfg = base_cfg(k);
        cfg.annotations.dt_mode = DtMode::Threshold;
        cfg.annotations.bf_function_fraction = 1.0;
        auto stream = apex_stream(0.2, 4000, 64, 0.8, 4, 7);
        std::string a = csv_of(run_system_auto(cfg, stream));
        std::string b = csv_of(run_system_auto(cfg, stream));
        CHECK(a == b);
        CHECK(a.size() > 4000); // not trivially empty
    }
}

TEST_CASE("CxlSsd and PcieSsd force annotations off") {
    for (SystemKind k : {SystemKind::CxlSsd, SystemKind::PcieSsd}) {
        SystemConfig cfg = base_cfg(k);
        cfg.annotations.dt_mode = DtMode::Threshold; // ignored outside CxlAssd
        cfg.annotations.bf_function_fraction = 1.0;
        auto stream = apex_stream(0.5, 2000, 64, 0.7, 4);
        StatsReport r = run_system(cfg, stream);
        for (const auto& s : r.samples()) {
            CHECK(s.annotation == Annotation{});
        }
    }
}

TEST_CASE("CxlAssd tags memory instructions per the DT policy") {
    SystemConfig cfg = base_cfg(SystemKind::CxlAssd);
    cfg.annotations.dt_mode = DtMode::Target;
    cfg.annotations.dt_target_fraction = 0.75;
    auto stream = apex_stream(0.5, 20000, 64, 0.9, 4);
    Simulation sim(cfg);
    StatsReport r = sim.run(stream);
    std::uint64_t dt = 0, nd = 0;
    for (const auto& s : r.samples()) {
        dt += s.annotation.det == Determinism::Dt;
        nd += s.annotation.det == Determinism::Nd;
    }
    CHECK(dt + nd == r.completed()); // every memory op got a decision
    double realized = double(dt) / double(dt + nd);
    CHECK(std::abs(realized - 0.75) <= 0.02);
}

TEST_CASE("host DRAM tokens round-trip through the Dram kind") {
    SystemConfig cfg = base_cfg(SystemKind::Dram);
    std::vector<AccessRecord> stream;
    stream.push_back({OpType::Store, 0x1000, 0, 0});
    stream.push_back({OpType::Load, 0x1000, 0, 0});
    Simulation sim(cfg);
    sim.run_stream(stream);
    // The store is buffered in CPU caches; flush pushes it to host DRAM.
    sim.flush_all();
    CHECK(sim.host_dram_peek(0x1000) == 1);
}

TEST_CASE("end-to-end GPF durability on CxlAssd") {
    SystemConfig cfg = base_cfg(SystemKind::CxlAssd, 16);
    std::vector<AccessRecord> stream;
    for (std::uint64_t i = 0; i < 64; ++i)
        stream.push_back({OpType::Store, i * 64, 0, 0});
    Simulation sim(cfg);
    sim.run_stream(stream);
    sim.flush_all(); // host flush + GPF broadcast
    sim.crash_drop_volatile();
    FlashSsd* dev = sim.flash_device();
    REQUIRE(dev != nullptr);
    // Every store landed durably; tokens are 1-based issue order.
    for (std::uint64_t i = 0; i < 64; ++i) {
        CHECK(dev->peek_durable(i * 64) == i + 1);
    }
}

TEST_CASE("NB stores are durable without any flush") {
    SystemConfig cfg = base_cfg(SystemKind::CxlAssd, 16);
    cfg.annotations.nb_functions = {42};
    std::vector<AccessRecord> stream;
    stream.push_back({OpType::Store, 0x2000, 42, 0}); // NB by function
    stream.push_back({OpType::Store, 0x4000, 1, 0});  // plain buffered store
    Simulation sim(cfg);
    sim.run_stream(stream);
    sim.crash_drop_volatile();
    FlashSsd* dev = sim.flash_device();
    CHECK(dev->peek_durable(0x2000) == 1); // NB survived
    CHECK(dev->peek_durable(0x4000) == 0); // buffered write did not
}

TEST_CASE("workload records targeting unknown cores are rejected") {
    SystemConfig cfg = base_cfg(SystemKind::Dram);
    std::vector<AccessRecord> stream{{OpType::Load, 0, 0, 99}};
    Simulation sim(cfg);
    CHECK_THROWS_AS(sim.run_stream(stream), ConfigError);
}

TEST_CASE("region bounds are enforced") {
    SystemConfig cfg = base_cfg(SystemKind::CxlSsd, 16);
    std::vector<AccessRecord> stream{{OpType::Load, cfg.region_size, 0, 0}};
    Simulation sim(cfg);
    CHECK_THROWS_AS(sim.run_stream(stream), SimError);
}

TEST_CASE("system config validation names offending fields") {
    SystemConfig cfg = base_cfg(SystemKind::CxlSsd);
    cfg.region_size = cfg.flash.capacity + (1 << 20);
    CHECK_THROWS_WITH_AS(Simulation{cfg}, doctest::Contains("region_size"), ConfigError);
    SystemConfig cfg2 = base_cfg(SystemKind::Dram);
    cfg2.warmup_fraction = 1.5;
    CHECK_THROWS_WITH_AS(Simulation{cfg2}, doctest::Contains("warmup_fraction"), ConfigError);
}

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

TEST_CASE("minimal JSON config parses with Table-style defaults") {
    FullConfig fc = parse_config_text(R"({
        "system": {"kind": "cxl-ssd"},
        "workload": {"type": "apexmap", "alpha": 0.5, "footprint_mib": 64, "count": 1000}
    })");
    CHECK(fc.system.kind == SystemKind::CxlSsd);
    CHECK(fc.system.host.cores == 4);
    CHECK(fc.system.host.l1d.ways == 12);
    CHECK(fc.system.host.l1d.mshrs == 16);
    CHECK(fc.system.host.l2.size_bytes == 2 * 1024 * 1024);
    CHECK(fc.system.flash.t_read == 3 * kPsPerUs);
    CHECK(fc.system.flash.t_prog == 100 * kPsPerUs);
    CHECK(fc.system.flash.t_erase == kPsPerMs);
    CHECK(fc.system.device_dram.t_rp == 9100);
    CHECK(fc.system.dram.t_cas == 12500);
    CHECK(fc.system.link.gt_per_lane == 64);
    CHECK(fc.system.region_size == 64ull << 20);
    auto stream = generate_workload(fc.workload, fc.system.seed, fc.system.host.cores);
    CHECK(stream.size() == 1000);
}

TEST_CASE("config errors cite the offending field") {
    CHECK_THROWS_WITH_AS(parse_config_text(R"({
            "workload": {"type": "apexmap", "alpha": 0.0, "footprint_mib": 64, "count": 1}
        })"),
                         doctest::Contains("apexmap.alpha"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({
            "workload": {"type": "apexmap", "alpha": 0.5, "footprint_mib": 64,
                         "count": 1, "typo_key": 3}
        })"),
                         doctest::Contains("typo_key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("{not json"), doctest::Contains("invalid JSON"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({
            "system": {"kind": "floppy"},
            "workload": {"type": "apexmap", "alpha": 0.5, "footprint_mib": 64, "count": 1}
        })"),
                         doctest::Contains("system.kind"), ConfigError);
}

TEST_CASE("stream workloads adopt thread count as core count") {
    FullConfig fc = parse_config_text(R"({
        "system": {"kind": "cxl-dram"},
        "workload": {"type": "stream", "kernel": "triad", "elements": 1024, "threads": 8}
    })");
    CHECK(fc.system.host.cores == 8);
    auto stream = generate_workload(fc.workload, 1, fc.system.host.cores);
    CHECK(stream.size() == 3 * 1024);
    StatsReport r = run_system(fc.system, stream);
    CHECK(r.completed() == stream.size());
}
