#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "cxlsim/errors.hpp"
#include "cxlsim/event_queue.hpp"
#include "cxlsim/rng.hpp"
#include "cxlsim/stats.hpp"

using namespace cxlsim;

TEST_CASE("equal-time events dispatch in insertion order") {
    EventQueue eq;
    std::string order;
    eq.schedule(100, EventKind::CoreStep, [&] { order += 'A'; });
    eq.schedule(100, EventKind::CoreStep, [&] { order += 'B'; });
    eq.run_all();
    CHECK(order == "AB");
    CHECK(eq.now() == 100);
}

TEST_CASE("events dispatch in time order") {
    EventQueue eq;
    std::string order;
    eq.schedule(200, EventKind::CoreStep, [&] { order += 'D'; });
    eq.schedule(150, EventKind::CoreStep, [&] { order += 'E'; });
    eq.run_all();
    CHECK(order == "ED");
}

TEST_CASE("scheduling in the past throws") {
    EventQueue eq;
    eq.schedule(60, EventKind::CoreStep, [] {});
    eq.run_all();
    CHECK(eq.now() == 60);
    CHECK_THROWS_AS(eq.schedule(50, EventKind::CoreStep, [] {}), SimError);
    CHECK_NOTHROW(eq.schedule(60, EventKind::CoreStep, [] {}));
}

TEST_CASE("run_until on an empty queue advances the clock to the limit") {
    EventQueue eq;
    CHECK(eq.run_until(1000) == 1000);
    CHECK(eq.dispatched() == 0);
}

TEST_CASE("run_until leaves future events queued") {
    EventQueue eq;
    bool fired = false;
    eq.schedule(500, EventKind::CoreStep, [&] { fired = true; });
    CHECK(eq.run_until(400) == 400);
    CHECK(!fired);
    CHECK(eq.pending() == 1);
    eq.run_all();
    CHECK(fired);
    CHECK(eq.now() == 500);
}

TEST_CASE("dispatch timestamps are monotone and events can chain") {
    EventQueue eq;
    std::vector<Tick> stamps;
    eq.schedule(10, EventKind::CoreStep, [&] {
        stamps.push_back(eq.now());
        eq.schedule_in(5, EventKind::CoreStep, [&] { stamps.push_back(eq.now()); });
    });
    eq.schedule(12, EventKind::CoreStep, [&] { stamps.push_back(eq.now()); });
    eq.run_all();
    REQUIRE(stamps.size() == 3);
    CHECK(stamps == std::vector<Tick>{10, 12, 15});
}

TEST_CASE("percentile is nearest-rank") {
    CHECK(percentile({1, 2, 3, 4}, 0.5) == 2);
    CHECK(percentile({7}, 0.999) == 7);
    CHECK(percentile({10, 20}, 1.0) == 20);
    CHECK(percentile({5, 1, 9, 3, 7}, 0.4) == 3);
    CHECK_THROWS_AS(percentile({}, 0.5), SimError);
}

TEST_CASE("percentile matches an index-free scan oracle") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tick> samples;
        std::size_t n = 1 + rng.next_below(200);
        for (std::size_t i = 0; i < n; ++i) samples.push_back(rng.next_below(1000));
        for (double p : {0.01, 0.25, 0.5, 0.9, 0.99, 1.0}) {
            Tick got = percentile(samples, p);
            // Oracle: smallest value v such that at least ceil(p*n) samples <= v.
            std::size_t need = static_cast<std::size_t>(std::ceil(p * double(n)));
            Tick best = 0;
            bool found = false;
            for (Tick cand : samples) {
                std::size_t le = 0;
                for (Tick s : samples) le += s <= cand;
                if (le >= need && (!found || cand < best)) {
                    best = cand;
                    found = true;
                }
            }
            CHECK(got == best);
        }
    }
}

TEST_CASE("splitmix64 reference vectors") {
    SplitMix64 a(0);
    CHECK(a.next() == 0xe220a8397b1dcdafull);
    CHECK(a.next() == 0x6e789e6aa1b965f4ull);
    CHECK(a.next() == 0x06c45d188009454full);
    CHECK(a.next() == 0xf88bb8a8724c81ecull);

    SplitMix64 b(42);
    CHECK(b.next() == 0xbdd732262feb6e95ull);
    CHECK(b.next() == 0x28efe333b266f103ull);

    SplitMix64 c(0x123456789abcdefull);
    CHECK(c.next() == 0x157a3807a48faa9dull);
    CHECK(c.next() == 0xd573529b34a1d093ull);
}

TEST_CASE("splitmix64 sub-streams are stable and distinct") {
    SplitMix64 root(1234);
    SplitMix64 s1 = root.split(1);
    SplitMix64 s2 = root.split(2);
    SplitMix64 s1b = root.split(1);
    CHECK(s1.next() == s1b.next());
    CHECK(s1.next() != s2.next());
    // Splitting does not advance the parent.
    SplitMix64 fresh(1234);
    CHECK(root.next() == fresh.next());
}

TEST_CASE("next_below stays in range and next_double in [0,1)") {
    SplitMix64 rng(99);
    for (int i = 0; i < 10000; ++i) {
        CHECK(rng.next_below(17) < 17);
        double d = rng.next_double();
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("stats report finalization, CSV shape, and conservation") {
    StatsReport r;
    r.record_issue();
    r.record_issue();
    r.record_sample({1, OpType::Store, 100, 250, Annotation{}, ServedBy::CpuL1});
    r.record_sample({0, OpType::Load, 0, 200, Annotation{}, ServedBy::DeviceFlash});
    CHECK(r.issued() == 2);
    r.finalize(300);
    CHECK(r.completed() == 2);
    CHECK(r.in_flight() == 0);
    CHECK(r.total_ticks() == 300);
    // Sorted by req_id in the CSV.
    std::ostringstream os;
    r.write_csv(os);
    std::string csv = os.str();
    CHECK(csv ==
          "req_id,op,issue_ps,complete_ps,latency_ps,annotation,served_by\n"
          "0,load,0,200,200,UA,device_flash\n"
          "1,store,100,250,150,UA,cpu_l1\n");
    CHECK(r.mean_latency_ps() == doctest::Approx(175.0));
    CHECK_THROWS_AS(r.record_sample({2, OpType::Load, 0, 1, Annotation{}, ServedBy::CpuL1}),
                    SimError);
}

TEST_CASE("warm-up cutoff excludes early request ids from latency stats") {
    StatsReport r;
    for (std::uint64_t i = 0; i < 10; ++i) {
        r.record_issue();
        Tick lat = i < 5 ? 1000 : 10; // slow warm-up, fast steady state
        r.record_sample({i, OpType::Load, i * 100, i * 100 + lat, Annotation{}, ServedBy::CpuL1});
    }
    r.set_warmup_cutoff(5);
    r.finalize(2000);
    CHECK(r.counted_samples() == 5);
    CHECK(r.mean_latency_ps() == doctest::Approx(10.0));
    CHECK(r.latency_percentile(1.0) == 10);
    CHECK(r.completed() == 10); // CSV and conservation still see everything
}

TEST_CASE("samples completing before issue are rejected") {
    StatsReport r;
    CHECK_THROWS_AS(r.record_sample({0, OpType::Load, 10, 5, Annotation{}, ServedBy::CpuL1}),
                    SimError);
}
