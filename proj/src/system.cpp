#include "cxlsim/system.hpp"

#include <algorithm>

#include "cxlsim/errors.hpp"

namespace cxlsim {

SystemKind system_kind_from_string(const std::string& s) {
    if (s == "dram") return SystemKind::Dram;
    if (s == "cxl-dram") return SystemKind::CxlDram;
    if (s == "pcie-ssd") return SystemKind::PcieSsd;
    if (s == "cxl-ssd") return SystemKind::CxlSsd;
    if (s == "cxl-assd") return SystemKind::CxlAssd;
    throw ConfigError("system.kind must be dram|cxl-dram|pcie-ssd|cxl-ssd|cxl-assd, got '" +
                      s + "'");
}

const char* to_string(SystemKind k) {
    switch (k) {
    case SystemKind::Dram: return "dram";
    case SystemKind::CxlDram: return "cxl-dram";
    case SystemKind::PcieSsd: return "pcie-ssd";
    case SystemKind::CxlSsd: return "cxl-ssd";
    case SystemKind::CxlAssd: return "cxl-assd";
    }
    return "?";
}

void DramTimingConfig::validate() const {
    if (channels == 0) throw ConfigError("dram_timing.channels must be positive");
    if (t_rp == 0 || t_rcd == 0 || t_cas == 0)
        throw ConfigError("dram_timing latencies must be positive");
}

void SystemConfig::validate() const {
    host.validate();
    annotations.validate();
    dram.validate();
    if (region_size == 0 || region_size % kLineBytes != 0)
        throw ConfigError("system.region_size must be a positive multiple of 64");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw ConfigError("run.warmup_fraction must be in [0,1)");
    bool uses_flash = kind == SystemKind::PcieSsd || kind == SystemKind::CxlSsd ||
                      kind == SystemKind::CxlAssd;
    if (uses_flash) {
        flash.validate();
        link.validate();
        if (region_size > flash.capacity)
            throw ConfigError("system.region_size exceeds device.capacity");
    }
    if (kind == SystemKind::CxlDram) link.validate();
}

// ---------------------------------------------------------------------------
// Construction and wiring
// ---------------------------------------------------------------------------

Simulation::Simulation(const SystemConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    wire();
}

Simulation::~Simulation() = default;

void Simulation::wire() {
    const SystemKind kind = cfg_.kind;
    annotations_active_ = kind == SystemKind::CxlAssd;

    Region region;
    region.base = 0;
    switch (kind) {
    case SystemKind::Dram:
        region.size = cfg_.region_size;
        region.kind = RegionKind::HostDram;
        break;
    case SystemKind::CxlDram: {
        region.size = cfg_.region_size;
        region.kind = RegionKind::HdmCacheable;
        Topology topo = Topology::direct(EndpointKind::DramEp, cfg_.region_size);
        fabric_ = std::make_unique<Fabric>(eq_, std::move(topo), cfg_.link);
        dram_ep_ = std::make_unique<DramEndpoint>(eq_, cfg_.region_size, cfg_.device_dram,
                                                  &stats_);
        break;
    }
    case SystemKind::PcieSsd:
    case SystemKind::CxlSsd:
    case SystemKind::CxlAssd: {
        region.size = cfg_.flash.capacity;
        region.kind = kind == SystemKind::PcieSsd ? RegionKind::BarNonCacheable
                                                  : RegionKind::HdmCacheable;
        Topology topo = Topology::direct(EndpointKind::FlashSsd, cfg_.flash.capacity);
        fabric_ = std::make_unique<Fabric>(eq_, std::move(topo), cfg_.link);
        flash_ = std::make_unique<FlashSsd>(eq_, cfg_.flash, cfg_.device_dram, &stats_,
                                            cfg_.emit_event_log ? &device_log_ : nullptr);
        break;
    }
    }
    map_.add_region(region);
    map_.validate();

    dram_channels_.assign(cfg_.dram.channels, HostDramChannel{});

    hierarchy_ = std::make_unique<CpuHierarchy>(
        eq_, cfg_.host,
        [this](const MemRequest& req, MemResponseFn done) { downstream(req, std::move(done)); },
        &stats_);

    if (annotations_active_) {
        dt_policy_ = std::make_unique<DtPolicy>(cfg_.annotations.dt_mode,
                                                cfg_.annotations.dt_threshold,
                                                cfg_.annotations.dt_target_fraction);
        bf_policy_ = std::make_unique<BfNbPolicy>(cfg_.function_heat,
                                                  cfg_.annotations.bf_function_fraction,
                                                  cfg_.annotations.nb_functions);
    }
}

// ---------------------------------------------------------------------------
// Memory paths
// ---------------------------------------------------------------------------

void Simulation::host_dram_access(std::uint64_t line_addr, bool is_write, std::uint64_t token,
                                  MemResponseFn done) {
    std::uint32_t ch =
        static_cast<std::uint32_t>((line_addr / kLineBytes) % dram_channels_.size());
    HostDramChannel& c = dram_channels_[ch];
    Tick start = std::max(eq_.now(), c.busy_until);
    c.busy_until = start + cfg_.dram.burst;
    Tick t = start + cfg_.dram.access_latency();
    std::uint64_t out_token = token;
    if (is_write) {
        host_dram_content_[line_addr / kLineBytes] = token;
    } else {
        auto it = host_dram_content_.find(line_addr / kLineBytes);
        out_token = it == host_dram_content_.end() ? 0 : it->second;
    }
    if (!done) return;
    eq_.schedule(t, EventKind::RequestComplete,
                 [done, t, out_token] { done(t, ServedBy::HostDram, out_token); });
}

void Simulation::deliver_to_endpoint(const Flit& req, const Annotation& ann,
                                     std::uint64_t token, std::uint32_t vh, Tick arrival,
                                     MemResponseFn done) {
    auto respond = [this, vh, done](const Flit& resp, const ResponseMeta& meta, Tick) {
        fabric_->route_to_host(resp, vh,
                               [done, meta](const Flit&, Tick t) {
                                   if (done) done(t, meta.served, meta.token);
                               });
    };
    if (flash_) {
        flash_->handle_request(req, ann, token, arrival, respond);
    } else {
        dram_ep_->handle_request(req, ann, token, arrival, respond);
    }
}

void Simulation::downstream(const MemRequest& req, MemResponseFn done) {
    Resolved res = map_.resolve(req.line_addr);
    if (res.kind == RegionKind::HostDram) {
        host_dram_access(req.line_addr, req.is_write, req.token, std::move(done));
        return;
    }
    if (req.function_id != kWritebackFunction) heat_[req.function_id] += 1;

    AccessRecord pseudo;
    pseudo.op = req.is_write ? OpType::Store : OpType::Load;
    pseudo.address = res.device_addr;
    BuiltRequest br = build_request(pseudo, req.annotation, next_tag_++);
    std::uint32_t vh = res.vh;
    Annotation ann = req.annotation;
    std::uint64_t token = req.token;
    if (br.data) {
        // The header flit paces the link; the device acts when the data
        // flit lands behind it.
        fabric_->route_to_endpoint(br.request, vh, [](const Flit&, Tick) {});
        Flit header = br.request;
        fabric_->route_to_endpoint(*br.data, vh,
                                   [this, header, ann, token, vh, done](const Flit&,
                                                                        Tick arrival) {
                                       deliver_to_endpoint(header, ann, token, vh, arrival,
                                                           done);
                                   });
    } else {
        fabric_->route_to_endpoint(br.request, vh,
                                   [this, ann, token, vh, done](const Flit& f, Tick arrival) {
                                       deliver_to_endpoint(f, ann, token, vh, arrival, done);
                                   });
    }
}

void Simulation::bar_issue(const AccessRecord& rec, std::uint64_t token, MemResponseFn done) {
    Resolved res = map_.resolve(rec.address);
    if (res.kind != RegionKind::BarNonCacheable)
        throw SimError("BAR issue to a cacheable region");
    heat_[rec.function_id] += 1;
    AccessRecord pseudo = rec;
    pseudo.address = res.device_addr;
    BuiltRequest br = build_request(pseudo, Annotation{}, next_tag_++);
    std::uint32_t vh = res.vh;
    auto deliver = [this, vh, token, done](const Flit& f, Tick arrival) {
        auto respond = [this, vh, done](const Flit& resp, const ResponseMeta& meta, Tick) {
            fabric_->route_to_host(resp, vh,
                                   [done, meta](const Flit&, Tick t) {
                                       if (done) done(t, meta.served, meta.token);
                                   });
        };
        flash_->serve_bar_request(f, token, arrival, respond);
    };
    if (br.data) {
        fabric_->route_to_endpoint(br.request, vh, [](const Flit&, Tick) {});
        Flit header = br.request;
        fabric_->route_to_endpoint(*br.data, vh, [deliver, header](const Flit&, Tick arrival) {
            deliver(header, arrival);
        });
    } else {
        fabric_->route_to_endpoint(br.request, vh, deliver);
    }
}

void Simulation::nb_issue(const AccessRecord& rec, std::uint64_t token, Annotation ann,
                          MemResponseFn done) {
    // Write-through: any cached copy is stale the moment the NB completes.
    hierarchy_->invalidate_line(rec.address / kLineBytes);
    MemRequest req;
    req.line_addr = rec.address;
    req.is_write = true;
    req.token = token;
    req.annotation = ann;
    req.function_id = rec.function_id;
    downstream(req, std::move(done));
}

// ---------------------------------------------------------------------------
// Run control
// ---------------------------------------------------------------------------

void Simulation::run_stream(const std::vector<AccessRecord>& stream) {
    std::vector<std::vector<CoreOp>> per_core(cfg_.host.cores);
    for (const AccessRecord& rec : stream) {
        if (rec.core >= cfg_.host.cores)
            throw ConfigError("workload record targets core " + std::to_string(rec.core) +
                              " but host.cores=" + std::to_string(cfg_.host.cores));
        std::uint64_t rid = 0;
        if (rec.op != OpType::Compute) rid = next_req_id_++;
        per_core[rec.core].push_back(CoreOp{rec, rid});
    }
    cores_.clear();
    for (std::uint32_t c = 0; c < cfg_.host.cores; ++c) {
        Core::Env env;
        env.eq = &eq_;
        env.cfg = &cfg_.host;
        env.hierarchy = hierarchy_.get();
        env.cacheable = [this](std::uint64_t addr) { return map_.resolve(addr).cacheable; };
        env.bar_issue = [this](const AccessRecord& rec, std::uint64_t token,
                               MemResponseFn done) { bar_issue(rec, token, std::move(done)); };
        env.nb_issue = [this](const AccessRecord& rec, std::uint64_t token, Annotation ann,
                              MemResponseFn done) {
            nb_issue(rec, token, ann, std::move(done));
        };
        env.dt = dt_policy_.get();
        env.bf = bf_policy_.get();
        env.next_store_token = [this] { return ++next_token_; };
        env.stats = &stats_;
        cores_.push_back(std::make_unique<Core>(c, std::move(env)));
        cores_.back()->set_stream(std::move(per_core[c]));
        cores_.back()->start();
    }
    eq_.run_all();
    for (const auto& core : cores_) {
        if (!core->done()) throw SimError("simulation stalled: a core never finished");
    }
}

StatsReport Simulation::run(const std::vector<AccessRecord>& stream) {
    std::uint64_t mem_ops = 0;
    for (const AccessRecord& rec : stream)
        if (rec.op != OpType::Compute) ++mem_ops;
    stats_.set_warmup_cutoff(
        static_cast<std::uint64_t>(cfg_.warmup_fraction * static_cast<double>(mem_ops)));
    run_stream(stream);
    return take_report();
}

void Simulation::flush_all() {
    hierarchy_->flush_dirty();
    if (fabric_ && (flash_ || dram_ep_)) {
        std::vector<std::uint32_t> vhs;
        for (std::uint32_t i = 0; i < fabric_->topology().vhs().size(); ++i) vhs.push_back(i);
        bool finished = false;
        fabric_->gpf_broadcast(
            vhs,
            [this](std::uint32_t, Tick arrival, std::function<void(Tick)> flushed) {
                if (flash_) flash_->persist_flush(arrival, std::move(flushed));
                else flushed(arrival);
            },
            [&finished](Tick) { finished = true; });
        eq_.run_all();
        if (!finished) throw SimError("GPF broadcast never completed");
    } else {
        eq_.run_all();
    }
}

void Simulation::crash_drop_volatile() {
    if (flash_) flash_->crash_drop_volatile();
}

StatsReport Simulation::take_report() {
    stats_.finalize(eq_.now());
    return std::move(stats_);
}

std::vector<std::pair<std::uint32_t, std::uint64_t>> Simulation::function_heat() const {
    std::vector<std::pair<std::uint32_t, std::uint64_t>> out(heat_.begin(), heat_.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

double Simulation::dt_realized_fraction() const {
    return dt_policy_ ? dt_policy_->realized_fraction() : 0.0;
}

std::uint64_t Simulation::host_dram_peek(std::uint64_t addr) const {
    auto it = host_dram_content_.find(addr / kLineBytes);
    return it == host_dram_content_.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// Convenience entry points
// ---------------------------------------------------------------------------

StatsReport run_system(const SystemConfig& cfg, const std::vector<AccessRecord>& stream) {
    Simulation sim(cfg);
    return sim.run(stream);
}

std::vector<std::pair<std::uint32_t, std::uint64_t>> profile_function_heat(
    SystemConfig cfg, const std::vector<AccessRecord>& stream) {
    if (cfg.kind == SystemKind::CxlAssd) cfg.kind = SystemKind::CxlSsd;
    Simulation sim(cfg);
    sim.run(stream);
    return sim.function_heat();
}

StatsReport run_system_auto(SystemConfig cfg, const std::vector<AccessRecord>& stream) {
    bool needs_heat = cfg.kind == SystemKind::CxlAssd &&
                      cfg.annotations.bf_function_fraction > 0.0 && cfg.function_heat.empty();
    if (needs_heat) cfg.function_heat = profile_function_heat(cfg, stream);
    return run_system(cfg, stream);
}

} // namespace cxlsim
