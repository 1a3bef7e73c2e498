#include "cxlsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cxlsim/errors.hpp"

namespace cxlsim {

namespace {
constexpr Tick kBandwidthWindow = 100 * kPsPerUs;
}

const char* to_string(ServedBy s) {
    switch (s) {
    case ServedBy::CpuL1: return "cpu_l1";
    case ServedBy::CpuL2: return "cpu_l2";
    case ServedBy::DeviceDram: return "device_dram";
    case ServedBy::DeviceFlash: return "device_flash";
    case ServedBy::HostDram: return "host_dram";
    }
    return "?";
}

Tick percentile(std::vector<Tick> samples, double p) {
    if (samples.empty()) throw SimError("EmptySamples: percentile of empty list");
    if (!(p > 0.0 && p <= 1.0)) throw SimError("percentile p must be in (0,1]");
    std::sort(samples.begin(), samples.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(samples.size())));
    if (rank == 0) rank = 1;
    return samples[rank - 1];
}

void StatsReport::record_sample(const LatencySample& s) {
    if (finalized_) throw SimError("StatsReport is finalized");
    if (s.complete < s.issue) throw SimError("sample completes before issue");
    samples_.push_back(s);
}

void StatsReport::finalize(Tick end_tick) {
    if (finalized_) return;
    end_tick_ = end_tick;
    std::sort(samples_.begin(), samples_.end(),
              [](const LatencySample& a, const LatencySample& b) {
                  return a.req_id < b.req_id;
              });
    // Time-windowed bytes moved, from completion times.
    if (!samples_.empty()) {
        Tick max_complete = 0;
        for (const auto& s : samples_) max_complete = std::max(max_complete, s.complete);
        windows_.assign(max_complete / kBandwidthWindow + 1, BandwidthWindow{});
        for (std::size_t i = 0; i < windows_.size(); ++i)
            windows_[i].window_start = static_cast<Tick>(i) * kBandwidthWindow;
        for (const auto& s : samples_)
            windows_[s.complete / kBandwidthWindow].bytes += kLineBytes;
    }
    finalized_ = true;
}

double StatsReport::l1_hit_ratio() const {
    return l1_accesses_ ? static_cast<double>(l1_hits_) / static_cast<double>(l1_accesses_) : 0.0;
}

double StatsReport::l2_hit_ratio() const {
    return l2_accesses_ ? static_cast<double>(l2_hits_) / static_cast<double>(l2_accesses_) : 0.0;
}

std::vector<Tick> StatsReport::counted_latencies() const {
    std::vector<Tick> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) {
        if (s.req_id >= warmup_cutoff_) out.push_back(s.complete - s.issue);
    }
    return out;
}

std::uint64_t StatsReport::counted_samples() const {
    std::uint64_t n = 0;
    for (const auto& s : samples_)
        if (s.req_id >= warmup_cutoff_) ++n;
    return n;
}

std::uint64_t StatsReport::tail_count_at_least(Tick threshold) const {
    std::uint64_t n = 0;
    for (const auto& s : samples_)
        if (s.req_id >= warmup_cutoff_ && s.complete - s.issue >= threshold) ++n;
    return n;
}

double StatsReport::mean_latency_ps() const {
    auto lat = counted_latencies();
    if (lat.empty()) return 0.0;
    double sum = 0.0;
    for (Tick t : lat) sum += static_cast<double>(t);
    return sum / static_cast<double>(lat.size());
}

Tick StatsReport::latency_percentile(double p) const {
    return percentile(counted_latencies(), p);
}

double StatsReport::effective_latency_ps() const {
    Tick first_issue = 0;
    Tick last_complete = 0;
    std::uint64_t n = 0;
    bool seen = false;
    for (const auto& s : samples_) {
        if (s.req_id < warmup_cutoff_) continue;
        if (!seen || s.issue < first_issue) first_issue = s.issue;
        if (s.complete > last_complete) last_complete = s.complete;
        seen = true;
        ++n;
    }
    if (!seen || n == 0) return 0.0;
    return static_cast<double>(last_complete - first_issue) / static_cast<double>(n);
}

double StatsReport::bandwidth_bytes_per_s() const {
    if (end_tick_ == 0 || samples_.empty()) return 0.0;
    double bytes = static_cast<double>(samples_.size()) * kLineBytes;
    double seconds = static_cast<double>(end_tick_) * 1e-12;
    return bytes / seconds;
}

void StatsReport::write_csv(std::ostream& os) const {
    os << "req_id,op,issue_ps,complete_ps,latency_ps,annotation,served_by\n";
    for (const auto& s : samples_) {
        os << s.req_id << ',' << (s.op == OpType::Load ? "load" : "store") << ','
           << s.issue << ',' << s.complete << ',' << (s.complete - s.issue) << ','
           << to_string(s.annotation) << ',' << to_string(s.served_by) << '\n';
    }
}

void StatsReport::write_summary(std::ostream& os) const {
    os << "requests_issued " << issued_ << '\n';
    os << "requests_completed " << completed() << '\n';
    os << "total_ticks_ps " << end_tick_ << '\n';
    auto lat = counted_latencies();
    if (!lat.empty()) {
        os << "mean_latency_ps " << mean_latency_ps() << '\n';
        os << "p50_latency_ps " << percentile(lat, 0.50) << '\n';
        os << "p99_latency_ps " << percentile(lat, 0.99) << '\n';
        os << "p99_9_latency_ps " << percentile(lat, 0.999) << '\n';
        os << "p100_latency_ps " << percentile(lat, 1.0) << '\n';
        os << "effective_latency_ps " << effective_latency_ps() << '\n';
    }
    os << "storage_accesses " << storage_accesses_ << '\n';
    os << "device_dram_hits " << device_dram_hits_ << '\n';
    os << "flash_reads " << flash_reads_ << '\n';
    os << "flash_programs " << flash_programs_ << '\n';
    os << "flash_erases " << flash_erases_ << '\n';
    os << "l1_hit_ratio " << l1_hit_ratio() << '\n';
    os << "l2_hit_ratio " << l2_hit_ratio() << '\n';
    os << "gc_events " << gc_events_.size() << '\n';
}

} // namespace cxlsim
