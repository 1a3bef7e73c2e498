#ifndef CXLSIM_SYSTEM_HPP
#define CXLSIM_SYSTEM_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cxlsim/device.hpp"
#include "cxlsim/event_queue.hpp"
#include "cxlsim/host.hpp"
#include "cxlsim/interconnect.hpp"
#include "cxlsim/stats.hpp"
#include "cxlsim/workload.hpp"

namespace cxlsim {

enum class SystemKind : std::uint8_t { Dram, CxlDram, PcieSsd, CxlSsd, CxlAssd };

SystemKind system_kind_from_string(const std::string& s);
const char* to_string(SystemKind k);

struct DramTimingConfig {
    Tick t_rp = ps_from_ns(12.5);
    Tick t_rcd = ps_from_ns(12.5);
    Tick t_cas = ps_from_ns(12.5);
    std::uint32_t channels = 2;
    std::uint32_t ranks = 8; // accepted for config parity, not modeled
    std::uint32_t banks = 8; // accepted for config parity, not modeled
    Tick burst = ps_from_ns(2.5);

    Tick access_latency() const { return t_rp + t_rcd + t_cas; }
    void validate() const;
};

struct SystemConfig {
    SystemKind kind = SystemKind::CxlSsd;
    HostConfig host;
    AnnotationConfig annotations; // honored only for CxlAssd
    LinkConfig link;
    FlashConfig flash;
    DeviceDramConfig device_dram;
    DramTimingConfig dram;
    std::uint64_t region_size = 0; // expansion region / host DRAM span
    std::uint64_t seed = 1;
    double warmup_fraction = 0.05;
    bool emit_event_log = false;
    // Optional pre-supplied function heat (skips the profiling pass).
    std::vector<std::pair<std::uint32_t, std::uint64_t>> function_heat;

    void validate() const; // throws ConfigError naming the field
};

// A runnable composition of host, interconnect, and endpoint for one system
// kind. Construction wires everything; run() drives an access stream to
// completion and yields a finalized StatsReport.
class Simulation {
public:
    explicit Simulation(const SystemConfig& cfg);
    ~Simulation();
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    // Whole-workload convenience: partitions by record core, runs to
    // completion, finalizes and returns the report.
    StatsReport run(const std::vector<AccessRecord>& stream);

    // Phased scripting for experiments: each call drains the stream fully.
    void run_stream(const std::vector<AccessRecord>& stream);
    // Host dirty-line flush followed by a GPF broadcast, run to completion.
    void flush_all();
    void crash_drop_volatile();
    StatsReport take_report();

    EventQueue& queue() { return eq_; }
    FlashSsd* flash_device() { return flash_.get(); }
    DramEndpoint* dram_device() { return dram_ep_.get(); }
    const std::vector<DeviceLogEntry>& device_log() const { return device_log_; }
    const SystemConfig& config() const { return cfg_; }
    // Per-function endpoint accesses observed so far (profiling support).
    std::vector<std::pair<std::uint32_t, std::uint64_t>> function_heat() const;
    double dt_realized_fraction() const;
    std::uint64_t host_dram_peek(std::uint64_t addr) const;

private:
    struct HostDramChannel {
        Tick busy_until = 0;
    };

    void wire();
    void downstream(const MemRequest& req, MemResponseFn done);
    void bar_issue(const AccessRecord& rec, std::uint64_t token, MemResponseFn done);
    void nb_issue(const AccessRecord& rec, std::uint64_t token, Annotation ann,
                  MemResponseFn done);
    void host_dram_access(std::uint64_t line_addr, bool is_write, std::uint64_t token,
                          MemResponseFn done);
    void deliver_to_endpoint(const Flit& req, const Annotation& ann, std::uint64_t token,
                             std::uint32_t vh, Tick arrival, MemResponseFn done);

    SystemConfig cfg_;
    EventQueue eq_;
    StatsReport stats_;
    std::vector<DeviceLogEntry> device_log_;
    AddressMap map_;
    std::unique_ptr<Fabric> fabric_;
    std::unique_ptr<FlashSsd> flash_;
    std::unique_ptr<DramEndpoint> dram_ep_;
    std::unique_ptr<CpuHierarchy> hierarchy_;
    std::unique_ptr<DtPolicy> dt_policy_;
    std::unique_ptr<BfNbPolicy> bf_policy_;
    std::vector<std::unique_ptr<Core>> cores_;
    std::vector<HostDramChannel> dram_channels_;
    std::unordered_map<std::uint64_t, std::uint64_t> host_dram_content_;
    std::unordered_map<std::uint32_t, std::uint64_t> heat_;
    std::uint64_t next_token_ = 0;
    std::uint64_t next_req_id_ = 0;
    std::uint16_t next_tag_ = 0;
    bool annotations_active_ = false;
};

// Runs the stream on a fresh simulation of `cfg`.
StatsReport run_system(const SystemConfig& cfg, const std::vector<AccessRecord>& stream);

// Un-annotated profiling pass: per-function storage-access counts, sorted
// descending, ready to feed BfNbPolicy or be written as CSV.
std::vector<std::pair<std::uint32_t, std::uint64_t>> profile_function_heat(
    SystemConfig cfg, const std::vector<AccessRecord>& stream);

// Runs `cfg` with an automatic profiling pre-pass when the kind needs a
// heat table and none was supplied.
StatsReport run_system_auto(SystemConfig cfg, const std::vector<AccessRecord>& stream);

inline double ratio_to_baseline(const StatsReport& report, const StatsReport& baseline) {
    return static_cast<double>(report.total_ticks()) /
           static_cast<double>(baseline.total_ticks());
}

} // namespace cxlsim

#endif
