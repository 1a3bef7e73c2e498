#ifndef CXLSIM_STATS_HPP
#define CXLSIM_STATS_HPP

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cxlsim/protocol.hpp"
#include "cxlsim/record.hpp"
#include "cxlsim/time.hpp"

namespace cxlsim {

enum class ServedBy : std::uint8_t { CpuL1, CpuL2, DeviceDram, DeviceFlash, HostDram };
const char* to_string(ServedBy s);

struct LatencySample {
    std::uint64_t req_id;
    OpType op;
    Tick issue;
    Tick complete;
    Annotation annotation;
    ServedBy served_by;
};

struct GcEvent {
    Tick start;
    Tick end;
    std::uint64_t pages_moved;
};

struct BandwidthWindow {
    Tick window_start;
    std::uint64_t bytes;
};

// Nearest-rank percentile: sort ascending, take element ceil(p*n)-1.
// p must lie in (0, 1]; throws SimError("EmptySamples") on an empty list.
Tick percentile(std::vector<Tick> samples, double p);

// Per-run measurement sink. Mutable while the run executes, immutable after
// finalize(). Latency statistics honor the warm-up cutoff; raw counters and
// the CSV cover the whole run.
class StatsReport {
public:
    // --- collection ---
    void record_issue() { ++issued_; }
    void record_sample(const LatencySample& s);
    void count_l1(bool hit) { ++l1_accesses_; l1_hits_ += hit; }
    void count_l2(bool hit) { ++l2_accesses_; l2_hits_ += hit; }
    void count_storage_access() { ++storage_accesses_; }
    void count_device_dram_hit() { ++device_dram_hits_; }
    void count_flash_read() { ++flash_reads_; }
    void count_flash_program() { ++flash_programs_; }
    void count_flash_erase() { ++flash_erases_; }
    void add_gc_event(const GcEvent& e) { gc_events_.push_back(e); }

    // req_ids below the cutoff are excluded from latency statistics.
    void set_warmup_cutoff(std::uint64_t first_counted_req_id) {
        warmup_cutoff_ = first_counted_req_id;
    }

    void finalize(Tick end_tick);
    bool finalized() const { return finalized_; }

    // --- results ---
    std::uint64_t issued() const { return issued_; }
    std::uint64_t completed() const { return samples_.size(); }
    std::uint64_t in_flight() const { return issued_ - samples_.size(); }
    Tick total_ticks() const { return end_tick_; }

    std::uint64_t storage_accesses() const { return storage_accesses_; }
    std::uint64_t device_dram_hits() const { return device_dram_hits_; }
    std::uint64_t flash_reads() const { return flash_reads_; }
    std::uint64_t flash_programs() const { return flash_programs_; }
    std::uint64_t flash_erases() const { return flash_erases_; }
    std::uint64_t l1_hits() const { return l1_hits_; }
    std::uint64_t l2_hits() const { return l2_hits_; }
    double l1_hit_ratio() const;
    double l2_hit_ratio() const;

    const std::vector<LatencySample>& samples() const { return samples_; }
    const std::vector<GcEvent>& gc_events() const { return gc_events_; }
    const std::vector<BandwidthWindow>& bandwidth_windows() const { return windows_; }

    // Post-warm-up latency statistics.
    double mean_latency_ps() const;
    Tick latency_percentile(double p) const;
    std::uint64_t counted_samples() const;
    std::uint64_t tail_count_at_least(Tick threshold) const;

    // Mean cost per access as the CPU experiences it: post-warm-up wall span
    // divided by post-warm-up completions. This is the figure latency sweeps
    // compare; overlapped misses make it smaller than the sample mean.
    double effective_latency_ps() const;

    // Whole-run bandwidth in bytes per second of simulated time.
    double bandwidth_bytes_per_s() const;

    // `req_id,op,issue_ps,complete_ps,latency_ps,annotation,served_by`,
    // one row per memory request, sorted by req_id.
    void write_csv(std::ostream& os) const;
    void write_summary(std::ostream& os) const;

private:
    std::vector<Tick> counted_latencies() const;

    std::vector<LatencySample> samples_;
    std::vector<GcEvent> gc_events_;
    std::vector<BandwidthWindow> windows_;
    std::uint64_t issued_ = 0;
    std::uint64_t warmup_cutoff_ = 0;
    std::uint64_t storage_accesses_ = 0;
    std::uint64_t device_dram_hits_ = 0;
    std::uint64_t flash_reads_ = 0;
    std::uint64_t flash_programs_ = 0;
    std::uint64_t flash_erases_ = 0;
    std::uint64_t l1_accesses_ = 0, l1_hits_ = 0;
    std::uint64_t l2_accesses_ = 0, l2_hits_ = 0;
    Tick end_tick_ = 0;
    bool finalized_ = false;
};

} // namespace cxlsim

#endif
