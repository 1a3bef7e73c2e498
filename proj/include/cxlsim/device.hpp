#ifndef CXLSIM_DEVICE_HPP
#define CXLSIM_DEVICE_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxlsim/cache.hpp"
#include "cxlsim/event_queue.hpp"
#include "cxlsim/protocol.hpp"
#include "cxlsim/stats.hpp"

namespace cxlsim {

struct FlashConfig {
    std::uint64_t capacity = 4ull << 30;
    std::uint32_t page_bytes = 4096;
    std::uint32_t pages_per_block = 256;
    std::uint32_t channels = 8;
    Tick t_read = 3 * kPsPerUs;    // tR
    Tick t_prog = 100 * kPsPerUs;  // tPROG
    Tick t_erase = 1 * kPsPerMs;   // tBERS
    double over_provision = 0.07;
    double gc_low_watermark = 0.05;
    double gc_high_watermark = 0.10;
    Tick dt_window = 10 * kPsPerUs;

    void validate() const;
};

struct DeviceDramConfig {
    std::uint64_t capacity = 0; // 0 -> flash capacity / 64
    std::uint32_t ways = 16;
    std::uint32_t line_bytes = 4096;
    Tick t_rp = ps_from_ns(9.1);
    Tick t_rcd = ps_from_ns(9.1);
    Tick t_ras = ps_from_ns(19.0);

    Tick access_latency() const { return t_rp + t_rcd; }
};

struct DeviceLogEntry {
    Tick tick;
    std::string event;
    std::string detail;
};

enum class GcPhase : std::uint8_t { Idle, Migrating, Erasing };

// Greedy victim: minimum valid count among eligible blocks, ties to the
// lowest block id. Returns nothing when no block is eligible.
std::optional<std::uint32_t> gc_select_victim(std::span<const std::uint32_t> valid_counts,
                                              std::span<const std::uint8_t> eligible);

struct ResponseMeta {
    ServedBy served = ServedBy::DeviceDram;
    std::uint64_t token = 0;
};

// Type 3 flash endpoint: page-granular write-back DRAM cache over an
// append-only FTL with greedy watermark-triggered GC. Annotations steer the
// internal scheduler: DT opens a suppression window for GC page operations,
// BF pins lines and prefetches the next sequential page, NB stores complete
// only after the page is durably programmed.
class FlashSsd {
public:
    struct Counters {
        std::uint64_t requests = 0;
        std::uint64_t store_requests = 0;
        std::uint64_t dirty_evictions = 0;
        std::uint64_t clean_evictions = 0;
        std::uint64_t dram_hits = 0;
        std::uint64_t flash_reads = 0;     // demand fills
        std::uint64_t flash_programs = 0;  // evictions, flushes, NB commits
        std::uint64_t gc_reads = 0;
        std::uint64_t gc_programs = 0;
        std::uint64_t gc_erases = 0;
        std::uint64_t prefetches = 0;
        std::uint64_t pinned_demotions = 0;
        std::uint64_t dt_deferrals = 0;
        std::uint64_t emergency_gc = 0;
        std::uint64_t nb_programs = 0;
    };

    using RespondFn = std::function<void(const Flit&, const ResponseMeta&, Tick)>;

    FlashSsd(EventQueue& eq, const FlashConfig& cfg, DeviceDramConfig dram,
             StatsReport* stats = nullptr, std::vector<DeviceLogEntry>* log = nullptr);

    // Parses the request flit and schedules completion events.
    // `store_token` is the payload version carried by an M2SRwD companion.
    void handle_request(const Flit& req, const Annotation& ann, std::uint64_t store_token,
                        Tick arrival, RespondFn respond);

    // PCIe-BAR service: identical internals, annotations ignored.
    void serve_bar_request(const Flit& req, std::uint64_t store_token, Tick arrival,
                           RespondFn respond);

    // Programs every dirty DRAM-cache page to flash, channel-parallel, and
    // completes once no volatile dirty state remains.
    void persist_flush(Tick at, std::function<void(Tick)> done);

    // Test hook: drops all volatile state; later reads reflect flash only.
    void crash_drop_volatile();

    // Test hook: start a GC pass now regardless of the watermarks.
    void force_gc();

    // --- introspection ---
    std::uint64_t capacity() const { return cfg_.capacity; }
    const Counters& counters() const { return counters_; }
    GcPhase gc_phase() const { return gc_phase_; }
    Tick dt_window_until() const { return dt_window_until_; }
    std::uint64_t free_blocks() const { return free_blocks_total_; }
    std::uint64_t total_blocks() const { return blocks_.size(); }
    std::uint64_t dirty_line_count() const { return cache_.dirty_count(); }
    std::uint64_t cached_line_count() const { return cache_.valid_count(); }
    const std::vector<GcEvent>& gc_events() const { return gc_history_; }
    bool gc_op_in_flight() const { return gc_op_in_flight_; }
    std::uint64_t outstanding_programs() const { return outstanding_programs_; }

    // Value a load would see right now / after a crash.
    std::uint64_t peek(std::uint64_t addr) const;
    std::uint64_t peek_durable(std::uint64_t addr) const;

    // FTL bijection and per-block valid counts; quiesced state only.
    bool ftl_consistent() const;
    std::optional<std::uint32_t> select_gc_victim_now() const;

private:
    static constexpr std::uint32_t kInvalid = 0xffffffffu;

    struct PageContent {
        std::vector<std::pair<std::uint16_t, std::uint64_t>> slots;
        std::uint64_t get(std::uint16_t off) const;
        void set(std::uint16_t off, std::uint64_t token);
        bool empty() const { return slots.empty(); }
    };
    struct Waiter {
        enum class Kind : std::uint8_t { Load, Store, NbStore } kind;
        std::uint16_t off;
        std::uint64_t token;
        bool bf;
        Flit req;
        RespondFn respond;
    };
    struct PendingFill {
        std::vector<Waiter> waiters;
        bool pin = false;
        bool prefetch = false; // fill came from the prefetcher
    };
    struct BlockMeta {
        std::uint32_t valid_count = 0;
        std::uint32_t cursor = 0; // next free page index; append-only until erase
        std::uint32_t erase_count = 0;
        std::uint32_t inflight = 0; // allocated, not yet committed
        bool is_free = false;
        bool is_active = false;
    };
    struct AllocWaiter {
        bool for_gc;
        std::function<void(std::uint32_t ppn, Tick at)> cb;
    };

    std::uint32_t block_of(std::uint32_t ppn) const { return ppn / cfg_.pages_per_block; }
    std::uint32_t channel_of_block(std::uint32_t block) const { return block % cfg_.channels; }
    std::uint32_t channel_of(std::uint32_t ppn) const { return channel_of_block(block_of(ppn)); }
    double free_fraction() const {
        return static_cast<double>(free_blocks_total_) / static_cast<double>(blocks_.size());
    }

    Tick channel_op(std::uint32_t ch, Tick at, Tick dur);
    void log(const char* event, const std::string& detail);

    void do_load(std::uint64_t lpn, std::uint16_t off, const Flit& req, const Annotation& ann,
                 Tick arrival, RespondFn respond);
    void do_store(std::uint64_t lpn, std::uint16_t off, const Flit& req, std::uint64_t token,
                  const Annotation& ann, Tick arrival, RespondFn respond);
    void do_nb_store(std::uint64_t lpn, std::uint16_t off, const Flit& req, std::uint64_t token,
                     const Annotation& ann, Tick arrival, RespondFn respond);

    void start_fill(std::uint64_t lpn, Tick at, bool pin, bool prefetch);
    void finish_fill(std::uint64_t lpn, std::uint32_t ppn);
    void note_demand(std::uint64_t lpn);
    bool sequential_run(std::uint64_t lpn) const;
    void maybe_prefetch(std::uint64_t lpn, Tick at);
    void resurrect_writeback(std::uint64_t lpn);
    void evict_line(const SetAssocCache::Victim& v);

    void commit_volatile_store(std::uint64_t lpn, std::uint16_t off, std::uint64_t token);
    void nb_commit(std::uint64_t lpn, std::uint16_t off, std::uint64_t token, Tick at,
                   const Flit& req, RespondFn respond);

    std::uint32_t try_alloc(bool for_gc);
    void request_allocation(Tick at, bool for_gc,
                            std::function<void(std::uint32_t ppn, Tick at)> cb);
    void wake_alloc_waiters();
    void program_page(std::uint64_t lpn, PageContent content, Tick at, std::uint64_t gen,
                      std::function<void(Tick done)> then);
    void commit_program(std::uint64_t lpn, std::uint32_t ppn, PageContent content);

    void maybe_start_gc();
    void schedule_gc_step(Tick at);
    void gc_step();
    void gc_finish_block();
    bool gc_emergency() const;

    void pump_flush();
    void check_integrity(std::uint64_t lpn, std::uint16_t off, std::uint64_t served) const;

    EventQueue& eq_;
    FlashConfig cfg_;
    DeviceDramConfig dram_;
    StatsReport* stats_;
    std::vector<DeviceLogEntry>* log_;

    struct WbEntry {
        PageContent content;
        std::uint64_t gen;
    };

    SetAssocCache cache_; // keyed by lpn
    std::unordered_map<std::uint32_t, PageContent> flash_content_; // keyed by ppn
    std::unordered_map<std::uint64_t, PageContent> cache_content_;
    std::unordered_map<std::uint64_t, WbEntry> wb_buffer_;
    std::unordered_map<std::uint64_t, PendingFill> pending_fills_;
    std::unordered_map<std::uint64_t, std::uint64_t> dirty_epoch_;
    std::unordered_map<std::uint64_t, std::uint64_t> expected_; // integrity oracle
    // Programs for one page can overlap in flight; generation numbers keep
    // an older program from clobbering a newer mapping.
    std::unordered_map<std::uint64_t, std::uint64_t> committed_gen_;
    std::uint64_t write_gen_ = 0;

    std::uint64_t logical_pages_ = 0;
    std::vector<std::uint32_t> l2p_;
    std::vector<std::uint32_t> rmap_;
    std::vector<BlockMeta> blocks_;
    std::vector<std::vector<std::uint32_t>> free_lists_; // per channel
    std::vector<std::int64_t> active_block_;             // per channel, -1 if none
    std::int64_t gc_active_ = -1; // GC-owned block; demand never draws from it
    std::uint64_t free_blocks_total_ = 0;
    std::uint32_t alloc_rr_ = 0;
    // Watermarks clamped to the reachable range: a fully mapped expander can
    // never free more blocks than the over-provisioned pool holds.
    double gc_low_eff_ = 0.0;
    double gc_high_eff_ = 0.0;
    std::deque<AllocWaiter> alloc_waiters_;
    std::uint64_t outstanding_programs_ = 0;

    std::vector<Tick> channel_busy_;
    Tick dt_window_until_ = 0;
    // Recent demand pages; the prefetcher fires only on evidence of a
    // forward sequential run, so random BF traffic stays prefetch-free.
    // Sized like a small stream-detector table: enough rows that a few
    // dozen interleaved sequential streams keep their run evidence alive.
    static constexpr std::size_t kRecentLpns = 32;
    std::uint64_t recent_lpns_[kRecentLpns] = {};
    std::size_t recent_idx_ = 0;

    GcPhase gc_phase_ = GcPhase::Idle;
    std::uint32_t gc_victim_ = kInvalid;
    std::uint32_t gc_scan_ = 0;
    Tick gc_block_started_ = 0;
    std::uint64_t gc_pages_moved_ = 0;
    bool gc_op_in_flight_ = false;
    std::vector<GcEvent> gc_history_;

    bool flush_active_ = false;
    std::vector<std::function<void(Tick)>> flush_done_;
    std::set<std::uint64_t> flushing_;

    Counters counters_;
};

// DRAM-only Type 3 expander: every request is served at DRAM-cache timing;
// there is no flash path behind it.
class DramEndpoint {
public:
    DramEndpoint(EventQueue& eq, std::uint64_t capacity, DeviceDramConfig timing,
                 StatsReport* stats = nullptr);

    void handle_request(const Flit& req, const Annotation& ann, std::uint64_t store_token,
                        Tick arrival, FlashSsd::RespondFn respond);

    std::uint64_t capacity() const { return capacity_; }
    std::uint64_t requests() const { return requests_; }
    std::uint64_t peek(std::uint64_t addr) const;

private:
    EventQueue& eq_;
    std::uint64_t capacity_;
    DeviceDramConfig timing_;
    StatsReport* stats_;
    std::unordered_map<std::uint64_t, std::uint64_t> content_;
    std::uint64_t requests_ = 0;
};

} // namespace cxlsim

#endif
