#include "cxlsim/host.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cxlsim {

namespace {

bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

CacheGeometry geometry_of(const CacheLevelConfig& c, std::uint32_t line_bytes) {
    return CacheGeometry{c.size_bytes, c.ways, line_bytes};
}

} // namespace

void HostConfig::validate() const {
    if (cores == 0) throw ConfigError("host.cores must be positive");
    if (freq_hz == 0) throw ConfigError("host.freq_hz must be positive");
    if (line_bytes != 64) throw ConfigError("host.line_bytes must be 64");
    if (lsq_entries == 0) throw ConfigError("host.lsq_entries must be positive");
    if (store_queue_entries == 0) throw ConfigError("host.store_queue_entries must be positive");
    for (auto [name, c] : {std::pair<const char*, const CacheLevelConfig*>{"l1i", &l1i},
                           {"l1d", &l1d},
                           {"l2", &l2}}) {
        if (!is_pow2(c->size_bytes))
            throw ConfigError(std::string("host.") + name + ".size_bytes must be a power of two");
        if (c->ways == 0 || c->mshrs == 0)
            throw ConfigError(std::string("host.") + name + ": ways and mshrs must be positive");
        if (c->size_bytes / line_bytes / c->ways == 0)
            throw ConfigError(std::string("host.") + name + ": fewer than one set");
    }
    if (kPsPerMs * 1000 % freq_hz != 0)
        throw ConfigError("host.freq_hz must divide 1e12 ps evenly");
}

void AnnotationConfig::validate() const {
    if (dt_threshold < 0.0 || dt_threshold > 1.0)
        throw ConfigError("annotations.dt_threshold must be in [0,1]");
    if (dt_target_fraction < 0.0 || dt_target_fraction > 1.0)
        throw ConfigError("annotations.dt_target_fraction must be in [0,1]");
    if (bf_function_fraction < 0.0 || bf_function_fraction > 1.0)
        throw ConfigError("annotations.bf_function_fraction must be in [0,1]");
}

Determinism DtPolicy::decide(std::uint64_t loads_in_flight, std::uint64_t occupied_entries) {
    if (mode_ == DtMode::Off) return Determinism::Unannotated;
    ++mem_count_;
    double signal = occupied_entries
                        ? static_cast<double>(loads_in_flight) /
                              static_cast<double>(occupied_entries)
                        : 0.0;
    bool dt = false;
    if (mode_ == DtMode::Threshold) {
        dt = signal > theta_;
    } else {
        // Budget of target*N tags spent preferentially where the load signal
        // is high; low-signal instructions get tagged only once a whole tag
        // is owed. Keeps the realized fraction within O(1/N) of the target.
        double deficit = target_ * static_cast<double>(mem_count_) -
                         static_cast<double>(dt_count_);
        dt = (signal > theta_) ? (deficit > 0.0) : (deficit >= 1.0);
    }
    if (dt) ++dt_count_;
    return dt ? Determinism::Dt : Determinism::Nd;
}

BfNbPolicy::BfNbPolicy(std::vector<std::pair<std::uint32_t, std::uint64_t>> heat,
                       double bf_fraction, std::set<std::uint32_t> nb_functions)
    : nb_(std::move(nb_functions)) {
    std::sort(heat.begin(), heat.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    auto k = static_cast<std::size_t>(
        std::floor(bf_fraction * static_cast<double>(heat.size()) + 1e-9));
    k = std::min(k, heat.size());
    for (std::size_t i = 0; i < k; ++i) bf_.insert(heat[i].first);
}

Bufferability BfNbPolicy::decide(std::uint32_t function_id) const {
    if (nb_.count(function_id)) return Bufferability::Nb;
    if (bf_.count(function_id)) return Bufferability::Bf;
    return Bufferability::Unannotated;
}

// ---------------------------------------------------------------------------
// CpuHierarchy
// ---------------------------------------------------------------------------

CpuHierarchy::CpuHierarchy(EventQueue& eq, const HostConfig& cfg, DownstreamFn downstream,
                           StatsReport* stats)
    : eq_(eq), cfg_(cfg), downstream_(std::move(downstream)), stats_(stats),
      l2_(geometry_of(cfg.l2, cfg.line_bytes)) {
    l1_.reserve(cfg.cores);
    for (std::uint32_t c = 0; c < cfg.cores; ++c) {
        l1_.emplace_back(geometry_of(cfg.l1d, cfg.line_bytes));
    }
}

bool CpuHierarchy::l1_can_hit(std::uint32_t core, std::uint64_t key) const {
    const L1& l1 = l1_[core];
    return l1.mshr.count(key) == 0 && l1.cache.probe(key);
}

std::optional<Tick> CpuHierarchy::try_l1_hit(std::uint32_t core, std::uint64_t key,
                                             bool is_store, const Annotation& ann,
                                             std::uint64_t token) {
    L1& l1 = l1_[core];
    if (l1.mshr.count(key)) return std::nullopt; // fill in flight, must wait
    if (!l1.cache.touch(key)) return std::nullopt;
    if (stats_) stats_->count_l1(true);
    if (is_store) {
        l1.cache.mark_dirty(key);
        l1.cache.set_token(key, token);
        if (ann.buf == Bufferability::Bf) l1.cache.set_bf(key, true);
    }
    return Tick{cfg_.l1d.hit_cycles * cfg_.cycle_ps()};
}

void CpuHierarchy::issue(std::uint32_t core, std::uint64_t key, bool is_store,
                         const Annotation& ann, std::uint64_t token,
                         std::uint32_t function_id, MemResponseFn done) {
    l1_access(PendingL1{core, key, is_store, ann, token, function_id, std::move(done)},
              /*first_attempt=*/true);
}

void CpuHierarchy::l1_access(const PendingL1& op, bool first_attempt) {
    L1& l1 = l1_[op.core];
    auto pending = l1.mshr.find(op.key);
    if (pending != l1.mshr.end()) {
        // Merge into the outstanding miss; no new request leaves the core.
        if (stats_) stats_->count_l1(true);
        pending->second.waiters.push_back(
            Waiter{op.is_store, op.token, op.ann.buf == Bufferability::Bf, op.done});
        return;
    }
    if (l1.cache.touch(op.key)) {
        if (stats_) stats_->count_l1(true);
        if (op.is_store) {
            l1.cache.mark_dirty(op.key);
            l1.cache.set_token(op.key, op.token);
            if (op.ann.buf == Bufferability::Bf) l1.cache.set_bf(op.key, true);
        }
        Tick t = eq_.now() + cfg_.l1d.hit_cycles * cfg_.cycle_ps();
        std::uint64_t tok = l1.cache.token_of(op.key);
        auto done = op.done;
        eq_.schedule(t, EventKind::RequestComplete,
                     [done, t, tok] { if (done) done(t, ServedBy::CpuL1, tok); });
        return;
    }
    if (first_attempt && stats_) stats_->count_l1(false);
    if (l1.mshr.size() >= cfg_.l1d.mshrs) {
        // MshrFull: structural stall, retried when an entry frees.
        l1.wait_q.push_back(op);
        return;
    }
    L1Entry entry;
    entry.waiters.push_back(
        Waiter{op.is_store, op.token, op.ann.buf == Bufferability::Bf, op.done});
    l1.mshr.emplace(op.key, std::move(entry));
    l1.mshr_peak = std::max<std::uint32_t>(l1.mshr_peak,
                                           static_cast<std::uint32_t>(l1.mshr.size()));
    Tick lookup_done = eq_.now() + cfg_.l1d.hit_cycles * cfg_.cycle_ps();
    std::uint32_t core = op.core;
    std::uint64_t key = op.key;
    Annotation ann = op.ann;
    std::uint32_t fid = op.function_id;
    eq_.schedule(lookup_done, EventKind::CacheFill,
                 [this, core, key, ann, fid] { l2_access(core, key, ann, fid, true); });
}

void CpuHierarchy::l2_access(std::uint32_t core, std::uint64_t key, const Annotation& ann,
                             std::uint32_t function_id, bool first_attempt) {
    auto pending = l2_mshr_.find(key);
    if (pending != l2_mshr_.end()) {
        if (first_attempt && stats_) stats_->count_l2(true);
        pending->second.cores.push_back(core);
        return;
    }
    if (l2_.touch(key)) {
        if (first_attempt && stats_) stats_->count_l2(true);
        Tick t = eq_.now() + cfg_.l2.hit_cycles * cfg_.cycle_ps();
        eq_.schedule(t, EventKind::CacheFill, [this, core, key, ann, function_id] {
            // The line can be gone by now if a racing fill evicted it.
            if (auto p = l2_mshr_.find(key); p != l2_mshr_.end()) {
                p->second.cores.push_back(core);
                return;
            }
            if (l2_.probe(key)) {
                l1_fill_complete(core, key, ServedBy::CpuL2, l2_.token_of(key));
            } else {
                l2_access(core, key, ann, function_id, false);
            }
        });
        return;
    }
    if (first_attempt && stats_) stats_->count_l2(false);
    if (l2_mshr_.size() >= cfg_.l2.mshrs) {
        l2_wait_q_.push_back(PendingL2{core, key, ann, function_id});
        return;
    }
    l2_mshr_.emplace(key, L2Entry{{core}});
    l2_mshr_peak_ = std::max<std::uint32_t>(l2_mshr_peak_,
                                            static_cast<std::uint32_t>(l2_mshr_.size()));
    Tick miss_known = eq_.now() + cfg_.l2.hit_cycles * cfg_.cycle_ps();
    eq_.schedule(miss_known, EventKind::CacheFill, [this, key, ann, function_id] {
        MemRequest req;
        req.line_addr = key * cfg_.line_bytes;
        req.is_write = false;
        req.annotation = ann;
        req.function_id = function_id;
        downstream_(req, [this, key](Tick t, ServedBy served, std::uint64_t token) {
            eq_.schedule(t, EventKind::CacheFill,
                         [this, key, served, token] { l2_complete(key, served, token); });
        });
    });
}

void CpuHierarchy::l2_complete(std::uint64_t key, ServedBy served, std::uint64_t token) {
    auto victim = l2_.insert(key, false, false);
    l2_.set_token(key, token);
    if (victim.valid) handle_l2_victim(victim);
    auto it = l2_mshr_.find(key);
    if (it == l2_mshr_.end()) throw SimError("L2 fill without MSHR entry");
    std::vector<std::uint32_t> cores = std::move(it->second.cores);
    l2_mshr_.erase(it);
    for (std::uint32_t core : cores) {
        l1_fill_complete(core, key, served, l2_.token_of(key));
    }
    wake_l2();
}

void CpuHierarchy::l1_fill_complete(std::uint32_t core, std::uint64_t key, ServedBy served,
                                    std::uint64_t token) {
    L1& l1 = l1_[core];
    auto it = l1.mshr.find(key);
    if (it == l1.mshr.end()) throw SimError("L1 fill without MSHR entry");
    std::vector<Waiter> waiters = std::move(it->second.waiters);
    l1.mshr.erase(it);

    auto victim = l1.cache.insert(key, false, false);
    if (victim.valid) writeback_l1_victim(victim);
    l1.cache.set_token(key, token);

    Tick t = eq_.now();
    std::uint64_t cur = token;
    bool dirty = false;
    bool bf = false;
    for (const Waiter& w : waiters) {
        if (w.is_store) {
            cur = w.token;
            dirty = true;
            bf = bf || w.bf;
        }
        if (w.done) w.done(t, served, cur);
    }
    if (dirty) {
        l1.cache.mark_dirty(key);
        l1.cache.set_token(key, cur);
        if (bf) l1.cache.set_bf(key, true);
    }
    wake_l1(core);
}

void CpuHierarchy::handle_l2_victim(const SetAssocCache::Victim& v) {
    bool dirty = v.dirty;
    std::uint64_t token = v.token;
    bool bf = v.bf;
    // Inclusive hierarchy: evicting from L2 back-invalidates every L1 copy.
    for (L1& l1 : l1_) {
        std::uint64_t l1tok = l1.cache.token_of(v.key);
        bool l1bf = l1.cache.bf_of(v.key);
        bool was_dirty = false;
        if (l1.cache.invalidate(v.key, &was_dirty) && was_dirty) {
            dirty = true;
            token = l1tok;
            bf = bf || l1bf;
        }
    }
    if (dirty) {
        MemRequest wb;
        wb.line_addr = v.key * cfg_.line_bytes;
        wb.is_write = true;
        wb.token = token;
        wb.annotation = Annotation{Determinism::Unannotated,
                                   bf ? Bufferability::Bf : Bufferability::Unannotated};
        wb.function_id = kWritebackFunction;
        downstream_(wb, MemResponseFn{});
    }
}

void CpuHierarchy::writeback_l1_victim(const SetAssocCache::Victim& v) {
    if (!v.dirty) return;
    if (!l2_.probe(v.key)) throw SimError("inclusion violated: L1 victim missing from L2");
    l2_.mark_dirty(v.key);
    l2_.set_token(v.key, v.token);
    if (v.bf) l2_.set_bf(v.key, true);
}

void CpuHierarchy::wake_l1(std::uint32_t core) {
    L1& l1 = l1_[core];
    while (!l1.wait_q.empty() && l1.mshr.size() < cfg_.l1d.mshrs) {
        PendingL1 op = std::move(l1.wait_q.front());
        l1.wait_q.pop_front();
        l1_access(op, false);
        if (!l1.wait_q.empty() && l1.mshr.size() >= cfg_.l1d.mshrs) break;
    }
}

void CpuHierarchy::wake_l2() {
    while (!l2_wait_q_.empty() && l2_mshr_.size() < cfg_.l2.mshrs) {
        PendingL2 op = std::move(l2_wait_q_.front());
        l2_wait_q_.pop_front();
        l2_access(op.core, op.key, op.ann, op.function_id, false);
    }
}

void CpuHierarchy::invalidate_line(std::uint64_t key) {
    for (L1& l1 : l1_) l1.cache.invalidate(key);
    l2_.invalidate(key);
}

void CpuHierarchy::flush_dirty() {
    // Fold dirty L1 lines into L2 first, then push dirty L2 lines downstream.
    for (L1& l1 : l1_) {
        std::vector<std::uint64_t> dirty_keys;
        l1.cache.for_each_valid([&](std::uint64_t key, bool dirty, bool, std::uint64_t) {
            if (dirty) dirty_keys.push_back(key);
        });
        for (std::uint64_t key : dirty_keys) {
            if (!l2_.probe(key)) throw SimError("inclusion violated during flush");
            l2_.mark_dirty(key);
            l2_.set_token(key, l1.cache.token_of(key));
            if (l1.cache.bf_of(key)) l2_.set_bf(key, true);
            l1.cache.clear_dirty(key);
        }
    }
    std::vector<std::uint64_t> dirty_keys;
    l2_.for_each_valid([&](std::uint64_t key, bool dirty, bool, std::uint64_t) {
        if (dirty) dirty_keys.push_back(key);
    });
    for (std::uint64_t key : dirty_keys) {
        MemRequest wb;
        wb.line_addr = key * cfg_.line_bytes;
        wb.is_write = true;
        wb.token = l2_.token_of(key);
        wb.annotation = Annotation{Determinism::Unannotated,
                                   l2_.bf_of(key) ? Bufferability::Bf
                                                  : Bufferability::Unannotated};
        wb.function_id = kWritebackFunction;
        downstream_(wb, MemResponseFn{});
        l2_.clear_dirty(key);
    }
}

bool CpuHierarchy::l1_has(std::uint32_t core, std::uint64_t key) const {
    return l1_[core].cache.probe(key);
}

bool CpuHierarchy::l2_has(std::uint64_t key) const { return l2_.probe(key); }

bool CpuHierarchy::inclusion_holds() const {
    bool ok = true;
    for (const L1& l1 : l1_) {
        l1.cache.for_each_valid([&](std::uint64_t key, bool, bool, std::uint64_t) {
            if (!l2_.probe(key)) ok = false;
        });
    }
    return ok;
}

std::uint32_t CpuHierarchy::l1_outstanding(std::uint32_t core) const {
    return static_cast<std::uint32_t>(l1_[core].mshr.size());
}

// ---------------------------------------------------------------------------
// Core
// ---------------------------------------------------------------------------

Core::Core(std::uint32_t id, Env env) : id_(id), env_(std::move(env)) {
    cycle_ = env_.cfg->cycle_ps();
}

void Core::start() {
    schedule_step(env_.eq->now());
}

void Core::schedule_step(Tick at) {
    if (step_scheduled_) return;
    step_scheduled_ = true;
    env_.eq->schedule(at, EventKind::CoreStep, [this] {
        step_scheduled_ = false;
        step();
    });
}

void Core::maybe_wake() {
    if (blocked_on_capacity_) {
        blocked_on_capacity_ = false;
        schedule_step(env_.eq->now());
    }
}

Annotation Core::annotate(const AccessRecord&, Bufferability buf) {
    Annotation a;
    if (env_.dt)
        a.det = env_.dt->decide(loads_in_flight_, loads_in_flight_ + stores_in_flight_);
    a.buf = buf;
    return a;
}

void Core::complete(const CoreOp& op, Tick issue, Tick complete, Annotation ann,
                    ServedBy served) {
    env_.stats->record_sample(LatencySample{op.req_id, op.rec.op, issue, complete, ann, served});
}

void Core::step() {
    while (pc_ < ops_.size()) {
        const CoreOp& op = ops_[pc_];
        Tick t = std::max(next_issue_, env_.eq->now());

        if (op.rec.op == OpType::Compute) {
            next_issue_ = t + cycle_;
            ++pc_;
            continue;
        }

        bool is_store = op.rec.op == OpType::Store;
        if (env_.cacheable(op.rec.address)) {
            if (!is_store && loads_in_flight_ >= env_.cfg->lsq_entries) {
                blocked_on_capacity_ = true;
                return;
            }
            if (is_store && stores_in_flight_ >= env_.cfg->store_queue_entries) {
                blocked_on_capacity_ = true;
                return;
            }
            // Bufferability is a pure function of the issuing code region;
            // the DT decision and the store token are drawn exactly once,
            // only when the op actually commits to issue.
            Bufferability buf = env_.bf ? env_.bf->decide(op.rec.function_id)
                                        : Bufferability::Unannotated;
            std::uint64_t key = op.rec.address / env_.cfg->line_bytes;
            bool nb_store = is_store && buf == Bufferability::Nb;

            if (!nb_store && env_.hierarchy->l1_can_hit(id_, key)) {
                Annotation ann = annotate(op.rec, buf);
                std::uint64_t token = is_store ? env_.next_store_token() : 0;
                auto lat = env_.hierarchy->try_l1_hit(id_, key, is_store, ann, token);
                if (!lat) throw SimError("L1 fast path diverged from its probe");
                env_.stats->record_issue();
                complete(op, t, t + *lat, ann, ServedBy::CpuL1);
                next_issue_ = t + cycle_;
                ++pc_;
                continue;
            }
            if (t > env_.eq->now()) {
                schedule_step(t);
                return;
            }
            Annotation ann = annotate(op.rec, buf);
            std::uint64_t token = is_store ? env_.next_store_token() : 0;
            env_.stats->record_issue();
            ++(is_store ? stores_in_flight_ : loads_in_flight_);
            CoreOp snapshot = op;
            auto on_done = [this, snapshot, t, ann, is_store](Tick ct, ServedBy served,
                                                              std::uint64_t) {
                complete(snapshot, t, ct, ann, served);
                --(is_store ? stores_in_flight_ : loads_in_flight_);
                maybe_wake();
            };
            if (nb_store) {
                env_.nb_issue(op.rec, token, ann, std::move(on_done));
            } else {
                env_.hierarchy->issue(id_, key, is_store, ann, token, op.rec.function_id,
                                      std::move(on_done));
            }
            next_issue_ = t + cycle_;
            ++pc_;
            continue;
        }

        // Non-cacheable (BAR) access: strictly one outstanding per core.
        if (t > env_.eq->now()) {
            schedule_step(t);
            return;
        }
        env_.stats->record_issue();
        bar_pending_ = true;
        std::uint64_t token = is_store ? env_.next_store_token() : 0;
        CoreOp snapshot = op;
        env_.bar_issue(op.rec, token,
                       [this, snapshot, t](Tick ct, ServedBy served, std::uint64_t) {
                           complete(snapshot, t, ct, Annotation{}, served);
                           bar_pending_ = false;
                           next_issue_ = ct + cycle_;
                           ++pc_;
                           schedule_step(env_.eq->now());
                       });
        return;
    }
    if (!done_) {
        done_ = true;
        // Marker so compute tails count toward total execution time.
        if (next_issue_ > env_.eq->now()) {
            env_.eq->schedule(next_issue_, EventKind::CoreStep, [] {});
        }
    }
}

} // namespace cxlsim
