#ifndef CXLSIM_HOST_HPP
#define CXLSIM_HOST_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "cxlsim/cache.hpp"
#include "cxlsim/event_queue.hpp"
#include "cxlsim/protocol.hpp"
#include "cxlsim/record.hpp"
#include "cxlsim/stats.hpp"

namespace cxlsim {

struct CacheLevelConfig {
    std::uint64_t size_bytes = 0;
    std::uint32_t ways = 1;
    std::uint32_t mshrs = 8;
    std::uint32_t hit_cycles = 1;
};

struct HostConfig {
    std::uint32_t cores = 4;
    std::uint64_t freq_hz = 4'000'000'000ull;
    std::uint32_t lsq_entries = 64;
    std::uint32_t store_queue_entries = 64;
    CacheLevelConfig l1i{64 * 1024, 8, 8, 4}; // accepted for config parity, not modeled
    CacheLevelConfig l1d{64 * 1024, 12, 16, 5};
    CacheLevelConfig l2{2 * 1024 * 1024, 8, 32, 20};
    std::uint32_t line_bytes = 64;

    Tick cycle_ps() const { return kPsPerMs * 1000 / freq_hz; }
    void validate() const; // throws ConfigError
};

// ---------------------------------------------------------------------------
// Annotation policies
// ---------------------------------------------------------------------------

enum class DtMode { Off, Threshold, Target };

struct AnnotationConfig {
    DtMode dt_mode = DtMode::Off;
    double dt_threshold = 0.5;
    double dt_target_fraction = 0.75;
    double bf_function_fraction = 0.0;
    std::set<std::uint32_t> nb_functions;
    Tick dt_window = 10 * kPsPerUs;

    void validate() const;
};

// Runtime DT decision from LSQ/store-queue occupancy. In Threshold mode a
// request is tagged DT when the load share of in-flight memory ops exceeds
// theta. Target mode layers a deterministic tag budget on the same signal so
// the realized DT fraction tracks the requested one.
class DtPolicy {
public:
    DtPolicy(DtMode mode, double theta, double target)
        : mode_(mode), theta_(theta), target_(target) {}

    Determinism decide(std::uint64_t loads_in_flight, std::uint64_t occupied_entries);

    double realized_fraction() const {
        return mem_count_ ? static_cast<double>(dt_count_) / static_cast<double>(mem_count_)
                          : 0.0;
    }
    std::uint64_t decisions() const { return mem_count_; }

private:
    DtMode mode_;
    double theta_;
    double target_;
    std::uint64_t mem_count_ = 0;
    std::uint64_t dt_count_ = 0;
};

// Function-level BF/NB tagging from a storage-access heat table. The
// nb_functions set wins over heat ranking.
class BfNbPolicy {
public:
    BfNbPolicy() = default;
    BfNbPolicy(std::vector<std::pair<std::uint32_t, std::uint64_t>> heat,
               double bf_fraction, std::set<std::uint32_t> nb_functions);

    Bufferability decide(std::uint32_t function_id) const;
    std::size_t bf_count() const { return bf_.size(); }

private:
    std::set<std::uint32_t> nb_;
    std::set<std::uint32_t> bf_;
};

// ---------------------------------------------------------------------------
// Cache hierarchy
// ---------------------------------------------------------------------------

// Miss traffic leaving the CPU caches (demand fills and write-backs).
struct MemRequest {
    std::uint64_t line_addr = 0;
    bool is_write = false;
    std::uint64_t token = 0; // write payload version, for the integrity model
    Annotation annotation;
    std::uint32_t function_id = 0;
};
inline constexpr std::uint32_t kWritebackFunction = 0xffffffffu;

using MemResponseFn =
    std::function<void(Tick complete, ServedBy served, std::uint64_t token)>;
using DownstreamFn = std::function<void(const MemRequest&, MemResponseFn)>;

// Private per-core L1D caches over a shared inclusive L2, both write-back
// write-allocate LRU with MSHR-bounded miss overlap. Timing-state only: the
// payload "value" is a 64-bit token per line.
class CpuHierarchy {
public:
    CpuHierarchy(EventQueue& eq, const HostConfig& cfg, DownstreamFn downstream,
                 StatsReport* stats);

    // Side-effect-free check for the L1 fast path.
    bool l1_can_hit(std::uint32_t core, std::uint64_t key) const;

    // Fast path for a hit in the issuing core's private L1: no events, and
    // the core may call it ahead of the event clock. Returns the hit latency.
    std::optional<Tick> try_l1_hit(std::uint32_t core, std::uint64_t key, bool is_store,
                                   const Annotation& ann, std::uint64_t token);

    // Full path; must be called at the current event time.
    void issue(std::uint32_t core, std::uint64_t key, bool is_store, const Annotation& ann,
               std::uint64_t token, std::uint32_t function_id, MemResponseFn done);

    // Drop any cached copy of the line (NB write-through path).
    void invalidate_line(std::uint64_t key);

    // Write every dirty line back downstream and mark it clean. Write-backs
    // ride the normal downstream path, so anything serialized behind them
    // (a GPF flit, say) observes them first.
    void flush_dirty();

    // introspection for tests
    bool l1_has(std::uint32_t core, std::uint64_t key) const;
    bool l2_has(std::uint64_t key) const;
    bool inclusion_holds() const;
    std::uint32_t l1_outstanding(std::uint32_t core) const;
    std::uint32_t l2_outstanding() const { return static_cast<std::uint32_t>(l2_mshr_.size()); }
    std::uint32_t l1_mshr_peak(std::uint32_t core) const { return l1_[core].mshr_peak; }
    std::uint32_t l2_mshr_peak() const { return l2_mshr_peak_; }

private:
    struct Waiter {
        bool is_store;
        std::uint64_t token;
        bool bf;
        MemResponseFn done;
    };
    struct L1Entry {
        std::vector<Waiter> waiters;
        bool counted_l2 = false;
    };
    struct L2Entry {
        std::vector<std::uint32_t> cores; // L1 misses merged on this line
    };
    struct PendingL1 {
        std::uint32_t core;
        std::uint64_t key;
        bool is_store;
        Annotation ann;
        std::uint64_t token;
        std::uint32_t function_id;
        MemResponseFn done;
    };
    struct L1 {
        SetAssocCache cache;
        std::unordered_map<std::uint64_t, L1Entry> mshr;
        std::deque<PendingL1> wait_q;
        std::uint32_t mshr_peak = 0;
        explicit L1(const CacheGeometry& g) : cache(g) {}
    };

    void l1_access(const PendingL1& op, bool first_attempt);
    void l2_access(std::uint32_t core, std::uint64_t key, const Annotation& ann,
                   std::uint32_t function_id, bool first_attempt);
    void l2_complete(std::uint64_t key, ServedBy served, std::uint64_t token);
    void l1_fill_complete(std::uint32_t core, std::uint64_t key, ServedBy served,
                          std::uint64_t token);
    void handle_l2_victim(const SetAssocCache::Victim& v);
    void writeback_l1_victim(const SetAssocCache::Victim& v);
    void wake_l1(std::uint32_t core);
    void wake_l2();

    EventQueue& eq_;
    HostConfig cfg_;
    DownstreamFn downstream_;
    StatsReport* stats_;
    std::vector<L1> l1_;
    SetAssocCache l2_;
    std::unordered_map<std::uint64_t, L2Entry> l2_mshr_;
    struct PendingL2 {
        std::uint32_t core;
        std::uint64_t key;
        Annotation ann;
        std::uint32_t function_id;
    };
    std::deque<PendingL2> l2_wait_q_;
    std::uint32_t l2_mshr_peak_ = 0;
};

// ---------------------------------------------------------------------------
// Core model
// ---------------------------------------------------------------------------

struct CoreOp {
    AccessRecord rec;
    std::uint64_t req_id = 0;
};

// One in-order issue port per core: compute costs a cycle, cacheable loads
// overlap up to the LSQ/MSHR limits, stores drain through a store queue, and
// non-cacheable (BAR) accesses serialize one-outstanding-per-core.
class Core {
public:
    struct Env {
        EventQueue* eq = nullptr;
        const HostConfig* cfg = nullptr;
        CpuHierarchy* hierarchy = nullptr;
        std::function<bool(std::uint64_t addr)> cacheable; // throws SimError if unmapped
        std::function<void(const AccessRecord&, std::uint64_t token, MemResponseFn)> bar_issue;
        std::function<void(const AccessRecord&, std::uint64_t token, Annotation, MemResponseFn)>
            nb_issue;
        DtPolicy* dt = nullptr;
        BfNbPolicy* bf = nullptr;
        std::function<std::uint64_t()> next_store_token;
        StatsReport* stats = nullptr;
    };

    Core(std::uint32_t id, Env env);

    void set_stream(std::vector<CoreOp> ops) { ops_ = std::move(ops); }
    void start();
    bool done() const { return done_; }
    std::uint64_t loads_in_flight() const { return loads_in_flight_; }
    std::uint64_t stores_in_flight() const { return stores_in_flight_; }

private:
    void step();
    void schedule_step(Tick at);
    void maybe_wake();
    Annotation annotate(const AccessRecord& rec, Bufferability buf);
    void complete(const CoreOp& op, Tick issue, Tick complete, Annotation ann, ServedBy served);

    std::uint32_t id_;
    Env env_;
    std::vector<CoreOp> ops_;
    std::size_t pc_ = 0;
    Tick next_issue_ = 0;
    Tick cycle_;
    std::uint64_t loads_in_flight_ = 0;
    std::uint64_t stores_in_flight_ = 0;
    bool step_scheduled_ = false;
    bool blocked_on_capacity_ = false;
    bool bar_pending_ = false;
    bool done_ = false;
};

} // namespace cxlsim

#endif
