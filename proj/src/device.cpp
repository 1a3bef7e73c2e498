#include "cxlsim/device.hpp"

#include <algorithm>

#include "cxlsim/errors.hpp"

namespace cxlsim {

// ---------------------------------------------------------------------------
// Config / helpers
// ---------------------------------------------------------------------------

void FlashConfig::validate() const {
    if (page_bytes == 0 || page_bytes % kLineBytes != 0)
        throw ConfigError("device.page_bytes must be a positive multiple of 64");
    if (pages_per_block == 0) throw ConfigError("device.pages_per_block must be positive");
    if (channels == 0) throw ConfigError("device.channels must be positive");
    if (capacity == 0 || capacity % page_bytes != 0)
        throw ConfigError("device.capacity must be a positive multiple of page_bytes");
    if (t_read == 0 || t_prog == 0 || t_erase == 0)
        throw ConfigError("device timings must be positive");
    if (over_provision <= 0.0 || over_provision >= 0.5)
        throw ConfigError("device.over_provision must be in (0, 0.5)");
    if (gc_low_watermark <= 0.0 || gc_high_watermark <= gc_low_watermark ||
        gc_high_watermark >= 1.0)
        throw ConfigError("device GC watermarks must satisfy 0 < low < high < 1");
}

std::optional<std::uint32_t> gc_select_victim(std::span<const std::uint32_t> valid_counts,
                                              std::span<const std::uint8_t> eligible) {
    std::optional<std::uint32_t> best;
    for (std::uint32_t b = 0; b < valid_counts.size(); ++b) {
        if (!eligible[b]) continue;
        if (!best || valid_counts[b] < valid_counts[*best]) best = b;
    }
    return best;
}

std::uint64_t FlashSsd::PageContent::get(std::uint16_t off) const {
    for (const auto& [o, tok] : slots) {
        if (o == off) return tok;
    }
    return 0;
}

void FlashSsd::PageContent::set(std::uint16_t off, std::uint64_t token) {
    for (auto& [o, tok] : slots) {
        if (o == off) {
            tok = token;
            return;
        }
    }
    slots.emplace_back(off, token);
}

// ---------------------------------------------------------------------------
// Construction: the device boots fully mapped (a memory expander is backed
// end to end), with the over-provisioned remainder on the free lists.
// ---------------------------------------------------------------------------

FlashSsd::FlashSsd(EventQueue& eq, const FlashConfig& cfg, DeviceDramConfig dram,
                   StatsReport* stats, std::vector<DeviceLogEntry>* log)
    : eq_(eq), cfg_(cfg), dram_(dram), stats_(stats), log_(log),
      cache_([&] {
          DeviceDramConfig d = dram;
          if (d.capacity == 0) d.capacity = cfg.capacity / 64;
          return SetAssocCache(CacheGeometry{d.capacity, d.ways, d.line_bytes});
      }()) {
    cfg_.validate();
    if (dram_.capacity == 0) dram_.capacity = cfg_.capacity / 64;
    if (dram_.line_bytes != cfg_.page_bytes)
        throw ConfigError("device.dram_cache.line_bytes must equal page_bytes");

    logical_pages_ = cfg_.capacity / cfg_.page_bytes;
    const std::uint32_t ppb = cfg_.pages_per_block;
    const std::uint32_t channels = cfg_.channels;

    // Logical pages stripe across channels so sequential spans read in
    // parallel: lpn -> (channel, index-within-channel).
    std::uint64_t per_channel_pages = (logical_pages_ + channels - 1) / channels;
    std::uint64_t mapped_blocks_per_channel = (per_channel_pages + ppb - 1) / ppb;
    std::uint64_t mapped_blocks = mapped_blocks_per_channel * channels;
    auto total_blocks = static_cast<std::uint64_t>(
        static_cast<double>(logical_pages_) / (1.0 - cfg_.over_provision) / ppb + 0.5);
    // Keep at least one spare block per channel plus the GC reserve.
    total_blocks = std::max(total_blocks, mapped_blocks + channels + 1);
    total_blocks = ((total_blocks + channels - 1) / channels) * channels;

    blocks_.assign(total_blocks, BlockMeta{});
    l2p_.assign(logical_pages_, kInvalid);
    rmap_.assign(total_blocks * ppb, kInvalid);
    free_lists_.assign(channels, {});
    active_block_.assign(channels, -1);
    channel_busy_.assign(channels, 0);

    for (std::uint64_t lpn = 0; lpn < logical_pages_; ++lpn) {
        std::uint32_t ch = static_cast<std::uint32_t>(lpn % channels);
        std::uint64_t idx = lpn / channels;
        std::uint64_t block_local = idx / ppb;
        std::uint32_t page_in_block = static_cast<std::uint32_t>(idx % ppb);
        std::uint64_t block_id = block_local * channels + ch;
        std::uint32_t ppn = static_cast<std::uint32_t>(block_id * ppb + page_in_block);
        l2p_[lpn] = ppn;
        rmap_[ppn] = static_cast<std::uint32_t>(lpn);
        BlockMeta& bm = blocks_[block_id];
        bm.valid_count += 1;
        bm.cursor = std::max(bm.cursor, page_in_block + 1);
    }
    for (std::uint64_t b = 0; b < total_blocks; ++b) {
        BlockMeta& bm = blocks_[b];
        if (bm.valid_count == 0 && bm.cursor == 0) {
            bm.is_free = true;
            free_lists_[channel_of_block(static_cast<std::uint32_t>(b))].push_back(
                static_cast<std::uint32_t>(b));
            ++free_blocks_total_;
        } else {
            bm.cursor = ppb; // partially mapped blocks are closed
        }
    }
    if (free_blocks_total_ == 0)
        throw ConfigError("device: over_provision leaves no free blocks");

    // The boot pool bounds how much GC can ever reclaim, and a pool-relative
    // floor keeps background GC ahead of demand instead of panicking at the
    // last block. Configured block fractions apply where they fall inside
    // that band.
    double pool_fraction = free_fraction();
    gc_high_eff_ = std::min(std::max(cfg_.gc_high_watermark, 0.50 * pool_fraction),
                            0.90 * pool_fraction);
    gc_low_eff_ = std::min(std::max(cfg_.gc_low_watermark, 0.25 * pool_fraction),
                           0.75 * gc_high_eff_);
}

Tick FlashSsd::channel_op(std::uint32_t ch, Tick at, Tick dur) {
    Tick start = std::max(at, channel_busy_[ch]);
    channel_busy_[ch] = start + dur;
    return start + dur;
}

void FlashSsd::log(const char* event, const std::string& detail) {
    if (log_) log_->push_back(DeviceLogEntry{eq_.now(), event, detail});
}

void FlashSsd::check_integrity(std::uint64_t lpn, std::uint16_t off,
                               std::uint64_t served) const {
    auto it = expected_.find(lpn * 64 + off);
    std::uint64_t want = it == expected_.end() ? 0 : it->second;
    if (served != want) {
        throw SimError("device integrity violation at lpn " + std::to_string(lpn) +
                       " off " + std::to_string(off) + ": served " + std::to_string(served) +
                       " expected " + std::to_string(want));
    }
}

// ---------------------------------------------------------------------------
// Request entry points
// ---------------------------------------------------------------------------

void FlashSsd::handle_request(const Flit& req, const Annotation& ann,
                              std::uint64_t store_token, Tick arrival, RespondFn respond) {
    if (req.opcode == FlitOpcode::Gpf) {
        persist_flush(arrival, [req, respond](Tick t) {
            respond(make_response(req), ResponseMeta{ServedBy::DeviceDram, 0}, t);
        });
        return;
    }
    if (req.address + kLineBytes > cfg_.capacity)
        throw SimError("OutOfRange: device address 0x" + std::to_string(req.address));
    ++counters_.requests;
    if (stats_) stats_->count_storage_access();
    if (ann.det == Determinism::Dt)
        dt_window_until_ = std::max(dt_window_until_, arrival + cfg_.dt_window);

    std::uint64_t lpn = req.address / cfg_.page_bytes;
    auto off = static_cast<std::uint16_t>((req.address % cfg_.page_bytes) / kLineBytes);
    if (req.opcode == FlitOpcode::MemRd) {
        do_load(lpn, off, req, ann, arrival, std::move(respond));
    } else if (req.opcode == FlitOpcode::MemWr && (++counters_.store_requests, true)) {
        if (ann.buf == Bufferability::Nb) {
            do_nb_store(lpn, off, req, store_token, ann, arrival, std::move(respond));
        } else {
            do_store(lpn, off, req, store_token, ann, arrival, std::move(respond));
        }
    } else {
        throw SimError("device: unexpected opcode");
    }
}

void FlashSsd::serve_bar_request(const Flit& req, std::uint64_t store_token, Tick arrival,
                                 RespondFn respond) {
    handle_request(req, Annotation{}, store_token, arrival, std::move(respond));
}

// ---------------------------------------------------------------------------
// Load path
// ---------------------------------------------------------------------------

void FlashSsd::do_load(std::uint64_t lpn, std::uint16_t off, const Flit& req,
                       const Annotation& ann, Tick arrival, RespondFn respond) {
    note_demand(lpn);
    bool bf = ann.buf == Bufferability::Bf;
    if (auto it = pending_fills_.find(lpn); it != pending_fills_.end()) {
        it->second.pin = it->second.pin || bf;
        it->second.waiters.push_back(Waiter{Waiter::Kind::Load, off, 0, bf, req, respond});
        return;
    }
    if (!cache_.probe(lpn)) resurrect_writeback(lpn);
    if (cache_.touch(lpn)) {
        ++counters_.dram_hits;
        if (stats_) stats_->count_device_dram_hit();
        if (bf) {
            cache_.set_pinned(lpn, true);
            maybe_prefetch(lpn + 1, arrival);
        }
        std::uint64_t token = 0;
        if (auto c = cache_content_.find(lpn); c != cache_content_.end())
            token = c->second.get(off);
        check_integrity(lpn, off, token);
        Tick t = arrival + dram_.access_latency();
        Flit resp = make_response(req);
        eq_.schedule(t, EventKind::RequestComplete, [respond, resp, token, t] {
            respond(resp, ResponseMeta{ServedBy::DeviceDram, token}, t);
        });
        return;
    }
    start_fill(lpn, arrival, bf, false);
    pending_fills_[lpn].waiters.push_back(Waiter{Waiter::Kind::Load, off, 0, bf, req, respond});
}

// ---------------------------------------------------------------------------
// Store paths
// ---------------------------------------------------------------------------

void FlashSsd::commit_volatile_store(std::uint64_t lpn, std::uint16_t off,
                                     std::uint64_t token) {
    cache_content_[lpn].set(off, token);
    expected_[lpn * 64 + off] = token;
    dirty_epoch_[lpn] += 1;
}

void FlashSsd::do_store(std::uint64_t lpn, std::uint16_t off, const Flit& req,
                        std::uint64_t token, const Annotation& ann, Tick arrival,
                        RespondFn respond) {
    note_demand(lpn);
    bool bf = ann.buf == Bufferability::Bf;
    if (auto it = pending_fills_.find(lpn); it != pending_fills_.end()) {
        it->second.pin = it->second.pin || bf;
        it->second.waiters.push_back(Waiter{Waiter::Kind::Store, off, token, bf, req, respond});
        return;
    }
    if (!cache_.probe(lpn)) resurrect_writeback(lpn);
    if (cache_.touch(lpn)) {
        ++counters_.dram_hits;
        if (stats_) stats_->count_device_dram_hit();
        commit_volatile_store(lpn, off, token);
        cache_.mark_dirty(lpn);
        if (bf) {
            cache_.set_pinned(lpn, true);
            maybe_prefetch(lpn + 1, arrival);
        }
        Tick t = arrival + dram_.access_latency();
        Flit resp = make_response(req);
        eq_.schedule(t, EventKind::RequestComplete, [respond, resp, token, t] {
            respond(resp, ResponseMeta{ServedBy::DeviceDram, token}, t);
        });
        return;
    }
    // Write-allocate: fetch the page, then merge the 64 B store.
    start_fill(lpn, arrival, bf, false);
    pending_fills_[lpn].waiters.push_back(Waiter{Waiter::Kind::Store, off, token, bf, req, respond});
}

void FlashSsd::do_nb_store(std::uint64_t lpn, std::uint16_t off, const Flit& req,
                           std::uint64_t token, const Annotation& ann, Tick arrival,
                           RespondFn respond) {
    note_demand(lpn);
    if (auto it = pending_fills_.find(lpn); it != pending_fills_.end()) {
        it->second.waiters.push_back(
            Waiter{Waiter::Kind::NbStore, off, token, false, req, respond});
        return;
    }
    if (!cache_.probe(lpn)) resurrect_writeback(lpn);
    if (cache_.touch(lpn)) {
        nb_commit(lpn, off, token, arrival, req, std::move(respond));
        return;
    }
    // Page read-modify-write: tR to pull the page, tPROG to persist it.
    start_fill(lpn, arrival, false, false);
    pending_fills_[lpn].waiters.push_back(
        Waiter{Waiter::Kind::NbStore, off, token, false, req, respond});
    (void)ann;
}

void FlashSsd::nb_commit(std::uint64_t lpn, std::uint16_t off, std::uint64_t token, Tick at,
                         const Flit& req, RespondFn respond) {
    // The store becomes visible now; completion waits for durability.
    commit_volatile_store(lpn, off, token);
    cache_.mark_dirty(lpn);
    PageContent snapshot = cache_content_[lpn];
    std::uint64_t epoch = dirty_epoch_[lpn];
    ++counters_.nb_programs;
    log("nb_program", "lpn=" + std::to_string(lpn));
    program_page(lpn, std::move(snapshot), at, ++write_gen_,
                 [this, lpn, epoch, token, req, respond](Tick done) {
        if (cache_.probe(lpn) && dirty_epoch_[lpn] == epoch) cache_.clear_dirty(lpn);
        Flit resp = make_response(req);
        respond(resp, ResponseMeta{ServedBy::DeviceFlash, token}, done);
        pump_flush();
    });
}

// ---------------------------------------------------------------------------
// Fill / eviction machinery
// ---------------------------------------------------------------------------

void FlashSsd::start_fill(std::uint64_t lpn, Tick at, bool pin, bool prefetch) {
    PendingFill pf;
    pf.pin = pin;
    pf.prefetch = prefetch;
    pending_fills_.emplace(lpn, std::move(pf));
    std::uint32_t ppn = l2p_[lpn];
    if (ppn == kInvalid) throw SimError("device: unmapped lpn " + std::to_string(lpn));
    std::uint32_t ch = channel_of(ppn);
    ++counters_.flash_reads;
    if (stats_) stats_->count_flash_read();
    Tick done = channel_op(ch, at, cfg_.t_read);
    eq_.schedule(done, EventKind::FlashOpDone, [this, lpn, ppn] { finish_fill(lpn, ppn); });
}

void FlashSsd::finish_fill(std::uint64_t lpn, std::uint32_t ppn) {
    auto it = pending_fills_.find(lpn);
    if (it == pending_fills_.end()) throw SimError("fill completion without pending entry");
    PendingFill pf = std::move(it->second);
    pending_fills_.erase(it);

    auto victim = cache_.insert(lpn, false, pf.pin);
    if (victim.valid) evict_line(victim);

    // The ppn captured at fill start set the channel timing; the mapping
    // may have moved meanwhile (GC relocation, racing program), so the
    // content comes from wherever the page lives now.
    std::uint32_t cur = l2p_[lpn];
    PageContent content;
    if (auto w = wb_buffer_.find(lpn); w != wb_buffer_.end()) {
        content = w->second.content;
    } else if (auto f = flash_content_.find(cur); f != flash_content_.end()) {
        content = f->second;
    }
    (void)ppn;

    // Only demand BF traffic arms the prefetcher; a prefetch fill that
    // re-armed it would sweep the whole device.
    bool demand_bf = pf.pin && !pf.prefetch;
    bool dirty = false;
    Tick t = eq_.now() + dram_.access_latency();
    std::vector<Waiter> nb_waiters;
    for (Waiter& w : pf.waiters) {
        demand_bf = demand_bf || w.bf;
        switch (w.kind) {
        case Waiter::Kind::Load: {
            std::uint64_t token = content.get(w.off);
            check_integrity(lpn, w.off, token);
            Flit resp = make_response(w.req);
            auto respond = w.respond;
            eq_.schedule(t, EventKind::RequestComplete, [respond, resp, token, t] {
                respond(resp, ResponseMeta{ServedBy::DeviceFlash, token}, t);
            });
            break;
        }
        case Waiter::Kind::Store: {
            content.set(w.off, w.token);
            expected_[lpn * 64 + w.off] = w.token;
            dirty = true;
            Flit resp = make_response(w.req);
            auto respond = w.respond;
            std::uint64_t token = w.token;
            eq_.schedule(t, EventKind::RequestComplete, [respond, resp, token, t] {
                respond(resp, ResponseMeta{ServedBy::DeviceFlash, token}, t);
            });
            break;
        }
        case Waiter::Kind::NbStore:
            nb_waiters.push_back(std::move(w));
            break;
        }
    }
    cache_content_[lpn] = std::move(content);
    if (dirty) {
        cache_.mark_dirty(lpn);
        dirty_epoch_[lpn] += 1;
    }
    if (pf.pin || demand_bf) cache_.set_pinned(lpn, true);
    if (demand_bf) maybe_prefetch(lpn + 1, eq_.now());
    for (Waiter& w : nb_waiters) {
        nb_commit(lpn, w.off, w.token, eq_.now(), w.req, w.respond);
    }
    pump_flush();
}

void FlashSsd::note_demand(std::uint64_t lpn) {
    std::size_t last = (recent_idx_ + kRecentLpns - 1) % kRecentLpns;
    if (recent_lpns_[last] == lpn + 1) return; // collapse same-page runs
    recent_lpns_[recent_idx_] = lpn + 1;       // +1 so page 0 differs from "empty"
    recent_idx_ = (recent_idx_ + 1) % kRecentLpns;
}

// A request to `trigger` extends a forward run when trigger-1 was seen
// recently; only then is prefetching trigger+1 worth flash time.
bool FlashSsd::sequential_run(std::uint64_t trigger) const {
    if (trigger == 0) return false;
    for (std::uint64_t r : recent_lpns_) {
        if (r != 0 && r - 1 == trigger - 1) return true;
    }
    return false;
}

void FlashSsd::maybe_prefetch(std::uint64_t lpn, Tick at) {
    if (lpn == 0 || lpn >= logical_pages_) return;
    if (!sequential_run(lpn - 1)) return; // the triggering page must extend a run
    if (cache_.probe(lpn) || pending_fills_.count(lpn) || wb_buffer_.count(lpn)) return;
    std::uint32_t ppn = l2p_[lpn];
    std::uint32_t ch = channel_of(ppn);
    if (channel_busy_[ch] > at) return; // demand traffic keeps priority
    ++counters_.prefetches;
    start_fill(lpn, at, /*pin=*/true, /*prefetch=*/true);
}

void FlashSsd::resurrect_writeback(std::uint64_t lpn) {
    if (cache_.probe(lpn)) return; // the cached copy is always the newest
    auto it = wb_buffer_.find(lpn);
    if (it == wb_buffer_.end()) return;
    // Copy rather than consume: until the background program lands, the
    // buffer entry is the only volatile holder of this data (the line could
    // be clean-evicted again before then).
    PageContent content = it->second.content;
    auto victim = cache_.insert(lpn, false, false);
    if (victim.valid) evict_line(victim);
    cache_content_[lpn] = std::move(content);
}

void FlashSsd::evict_line(const SetAssocCache::Victim& v) {
    std::uint64_t vlpn = v.key;
    if (v.pinned_demoted) ++counters_.pinned_demotions;
    PageContent content;
    if (auto c = cache_content_.find(vlpn); c != cache_content_.end()) {
        content = std::move(c->second);
        cache_content_.erase(c);
    }
    dirty_epoch_.erase(vlpn);
    if (!v.dirty) {
        ++counters_.clean_evictions;
        return;
    }
    ++counters_.dirty_evictions;
    std::uint64_t gen = ++write_gen_;
    wb_buffer_[vlpn] = WbEntry{content, gen};
    program_page(vlpn, std::move(content), eq_.now(), gen, [this, vlpn, gen](Tick) {
        // The entry may be gone (resurrected) or replaced by a newer
        // eviction of the same page; erase only our own generation.
        auto it = wb_buffer_.find(vlpn);
        if (it != wb_buffer_.end() && it->second.gen == gen) wb_buffer_.erase(it);
        pump_flush();
    });
}

// ---------------------------------------------------------------------------
// Allocation and programming
// ---------------------------------------------------------------------------

std::uint32_t FlashSsd::try_alloc(bool for_gc) {
    if (for_gc) {
        // GC migrates into its own block so demand can never starve it.
        if (gc_active_ >= 0) {
            BlockMeta& bm = blocks_[static_cast<std::size_t>(gc_active_)];
            if (bm.cursor < cfg_.pages_per_block) {
                std::uint32_t ppn =
                    static_cast<std::uint32_t>(gc_active_) * cfg_.pages_per_block + bm.cursor;
                bm.cursor += 1;
                bm.inflight += 1;
                if (bm.cursor == cfg_.pages_per_block) {
                    bm.is_active = false;
                    gc_active_ = -1;
                }
                return ppn;
            }
            bm.is_active = false;
            gc_active_ = -1;
        }
        for (std::uint32_t ch = 0; ch < cfg_.channels; ++ch) {
            if (free_lists_[ch].empty()) continue;
            std::uint32_t blk = free_lists_[ch].back();
            free_lists_[ch].pop_back();
            --free_blocks_total_;
            BlockMeta& bm = blocks_[blk];
            bm.is_free = false;
            bm.is_active = true;
            bm.cursor = 1;
            bm.inflight = 1;
            gc_active_ = blk;
            return blk * cfg_.pages_per_block;
        }
        return kInvalid;
    }
    const std::uint32_t channels = cfg_.channels;
    for (std::uint32_t i = 0; i < channels; ++i) {
        std::uint32_t ch = (alloc_rr_ + i) % channels;
        std::int64_t active = active_block_[ch];
        if (active >= 0) {
            BlockMeta& bm = blocks_[static_cast<std::size_t>(active)];
            if (bm.cursor < cfg_.pages_per_block) {
                std::uint32_t ppn =
                    static_cast<std::uint32_t>(active) * cfg_.pages_per_block + bm.cursor;
                bm.cursor += 1;
                bm.inflight += 1;
                if (bm.cursor == cfg_.pages_per_block) {
                    bm.is_active = false;
                    active_block_[ch] = -1;
                }
                alloc_rr_ = ch + 1;
                return ppn;
            }
            bm.is_active = false;
            active_block_[ch] = -1;
        }
        // Demand traffic leaves one free block for GC to open.
        if (free_blocks_total_ > 1 && !free_lists_[ch].empty()) {
            std::uint32_t blk = free_lists_[ch].back();
            free_lists_[ch].pop_back();
            --free_blocks_total_;
            BlockMeta& bm = blocks_[blk];
            bm.is_free = false;
            bm.is_active = true;
            bm.cursor = 1;
            bm.inflight = 1;
            active_block_[ch] = blk;
            alloc_rr_ = ch + 1;
            maybe_start_gc();
            return blk * cfg_.pages_per_block;
        }
    }
    return kInvalid;
}

void FlashSsd::request_allocation(Tick at, bool for_gc,
                                  std::function<void(std::uint32_t, Tick)> cb) {
    std::uint32_t ppn = try_alloc(for_gc);
    if (ppn != kInvalid) {
        cb(ppn, at);
        return;
    }
    if (for_gc) throw SimError("GC allocation starved: reserve accounting broken");
    alloc_waiters_.push_back(AllocWaiter{for_gc, std::move(cb)});
    maybe_start_gc();
    if (gc_phase_ != GcPhase::Idle) schedule_gc_step(eq_.now());
}

void FlashSsd::wake_alloc_waiters() {
    while (!alloc_waiters_.empty()) {
        std::uint32_t ppn = try_alloc(alloc_waiters_.front().for_gc);
        if (ppn == kInvalid) break;
        auto cb = std::move(alloc_waiters_.front().cb);
        alloc_waiters_.pop_front();
        cb(ppn, eq_.now());
    }
}

void FlashSsd::program_page(std::uint64_t lpn, PageContent content, Tick at,
                            std::uint64_t gen, std::function<void(Tick)> then) {
    ++outstanding_programs_;
    request_allocation(at, /*for_gc=*/false,
                       [this, lpn, gen, content = std::move(content), then = std::move(then)](
                           std::uint32_t ppn, Tick alloc_at) mutable {
                           std::uint32_t ch = channel_of(ppn);
                           ++counters_.flash_programs;
                           if (stats_) stats_->count_flash_program();
                           Tick done = channel_op(ch, alloc_at, cfg_.t_prog);
                           eq_.schedule(done, EventKind::FlashOpDone,
                                        [this, lpn, gen, ppn, content = std::move(content),
                                         then = std::move(then), done]() mutable {
                                            if (committed_gen_[lpn] < gen) {
                                                committed_gen_[lpn] = gen;
                                                commit_program(lpn, ppn, std::move(content));
                                            } else {
                                                // A newer program for this page landed
                                                // first; this copy is dead on arrival.
                                                blocks_[block_of(ppn)].inflight -= 1;
                                            }
                                            --outstanding_programs_;
                                            then(done);
                                            maybe_start_gc();
                                        });
                       });
}

void FlashSsd::commit_program(std::uint64_t lpn, std::uint32_t ppn, PageContent content) {
    std::uint32_t old = l2p_[lpn];
    if (old != kInvalid) {
        BlockMeta& ob = blocks_[block_of(old)];
        if (ob.valid_count == 0) throw SimError("FTL: negative valid count");
        ob.valid_count -= 1;
        rmap_[old] = kInvalid;
        flash_content_.erase(old);
    }
    l2p_[lpn] = ppn;
    rmap_[ppn] = static_cast<std::uint32_t>(lpn);
    BlockMeta& nb = blocks_[block_of(ppn)];
    nb.valid_count += 1;
    if (nb.inflight == 0) throw SimError("FTL: commit without allocation");
    nb.inflight -= 1;
    if (!content.empty()) flash_content_[ppn] = std::move(content);
    else flash_content_.erase(ppn);
}

// ---------------------------------------------------------------------------
// Garbage collection
// ---------------------------------------------------------------------------

// DT deference yields only when writes are genuinely out of space: a demand
// allocation is already stalled, or the pool is gone outright.
bool FlashSsd::gc_emergency() const {
    return !alloc_waiters_.empty() || free_blocks_total_ == 0;
}

std::optional<std::uint32_t> FlashSsd::select_gc_victim_now() const {
    std::vector<std::uint32_t> valid(blocks_.size());
    std::vector<std::uint8_t> eligible(blocks_.size());
    bool any_nonfree = false;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        valid[b] = blocks_[b].valid_count;
        bool nonfree = !blocks_[b].is_free;
        any_nonfree = any_nonfree || nonfree;
        eligible[b] = nonfree && !blocks_[b].is_active && blocks_[b].inflight == 0 &&
                      b != gc_victim_;
    }
    if (!any_nonfree) return std::nullopt; // NoCandidate: every block free
    return gc_select_victim(valid, eligible);
}

void FlashSsd::force_gc() {
    if (gc_phase_ != GcPhase::Idle) return;
    auto victim = select_gc_victim_now();
    if (!victim || blocks_[*victim].valid_count >= cfg_.pages_per_block) return;
    gc_victim_ = *victim;
    gc_scan_ = 0;
    gc_pages_moved_ = 0;
    gc_block_started_ = eq_.now();
    gc_phase_ = GcPhase::Migrating;
    log("gc_start", "victim=" + std::to_string(gc_victim_) +
                        " valid=" + std::to_string(blocks_[gc_victim_].valid_count));
    schedule_gc_step(eq_.now());
}

void FlashSsd::maybe_start_gc() {
    if (gc_phase_ != GcPhase::Idle) return;
    if (free_fraction() >= gc_low_eff_ && !gc_emergency()) return;
    auto victim = select_gc_victim_now();
    if (!victim) return;
    if (blocks_[*victim].valid_count >= cfg_.pages_per_block) {
        // Every eligible block is fully valid: nothing to reclaim.
        if (gc_emergency() && free_blocks_total_ == 0)
            throw SimError("flash space exhausted: no garbage to collect");
        return;
    }
    gc_victim_ = *victim;
    gc_scan_ = 0;
    gc_pages_moved_ = 0;
    gc_block_started_ = eq_.now();
    gc_phase_ = GcPhase::Migrating;
    log("gc_start", "victim=" + std::to_string(gc_victim_) +
                        " valid=" + std::to_string(blocks_[gc_victim_].valid_count));
    schedule_gc_step(eq_.now());
}

void FlashSsd::schedule_gc_step(Tick at) {
    // Redundant wakeups are cheap and guarded in gc_step; an emergency must
    // be able to schedule an earlier step than a DT-deferred one.
    eq_.schedule(std::max(at, eq_.now()), EventKind::GcStep, [this] { gc_step(); });
}

void FlashSsd::gc_step() {
    if (gc_phase_ != GcPhase::Migrating || gc_op_in_flight_) return;
    if (eq_.now() < dt_window_until_) {
        if (!gc_emergency()) {
            ++counters_.dt_deferrals;
            log("dt_defer", "until=" + std::to_string(dt_window_until_));
            schedule_gc_step(dt_window_until_);
            return;
        }
        ++counters_.emergency_gc;
        log("emergency_gc", "free_blocks=" + std::to_string(free_blocks_total_));
    }

    const std::uint32_t ppb = cfg_.pages_per_block;
    std::uint32_t base = gc_victim_ * ppb;
    while (gc_scan_ < ppb && rmap_[base + gc_scan_] == kInvalid) ++gc_scan_;

    if (gc_scan_ >= ppb) {
        // All valid pages migrated; reclaim the block.
        gc_phase_ = GcPhase::Erasing;
        gc_op_in_flight_ = true;
        std::uint32_t ch = channel_of_block(gc_victim_);
        ++counters_.gc_erases;
        if (stats_) stats_->count_flash_erase();
        log("gc_erase", "block=" + std::to_string(gc_victim_));
        Tick done = channel_op(ch, eq_.now(), cfg_.t_erase);
        eq_.schedule(done, EventKind::FlashOpDone, [this] { gc_finish_block(); });
        return;
    }

    std::uint32_t ppn = base + gc_scan_;
    std::uint32_t lpn = rmap_[ppn];
    gc_op_in_flight_ = true;
    std::uint32_t ch = channel_of(ppn);
    ++counters_.gc_reads;
    log("gc_migrate", "lpn=" + std::to_string(lpn) + " ppn=" + std::to_string(ppn));
    Tick rd_done = channel_op(ch, eq_.now(), cfg_.t_read);
    eq_.schedule(rd_done, EventKind::FlashOpDone, [this, ppn, lpn] {
        if (rmap_[ppn] != lpn) {
            // Overwritten while the read was in flight; nothing to move.
            gc_op_in_flight_ = false;
            ++gc_scan_;
            schedule_gc_step(eq_.now());
            return;
        }
        PageContent content;
        if (auto f = flash_content_.find(ppn); f != flash_content_.end()) content = f->second;
        request_allocation(eq_.now(), /*for_gc=*/true,
                           [this, lpn, ppn, content = std::move(content)](std::uint32_t dst,
                                                                          Tick at) mutable {
                               std::uint32_t ch2 = channel_of(dst);
                               ++counters_.gc_programs;
                               Tick pg_done = channel_op(ch2, at, cfg_.t_prog);
                               eq_.schedule(pg_done, EventKind::FlashOpDone,
                                            [this, lpn, ppn, dst,
                                             content = std::move(content)]() mutable {
                                                if (rmap_[ppn] == lpn) {
                                                    commit_program(lpn, dst, std::move(content));
                                                } else {
                                                    // Invalidated mid-flight; the fresh page
                                                    // stays unreferenced until its block is
                                                    // erased.
                                                    BlockMeta& bm = blocks_[block_of(dst)];
                                                    bm.inflight -= 1;
                                                }
                                                ++gc_pages_moved_;
                                                gc_op_in_flight_ = false;
                                                ++gc_scan_;
                                                schedule_gc_step(eq_.now());
                                            });
                           });
    });
}

void FlashSsd::gc_finish_block() {
    BlockMeta& bm = blocks_[gc_victim_];
    if (bm.valid_count != 0) throw SimError("GC erased a block holding valid pages");
    bm.is_free = true;
    bm.cursor = 0;
    bm.erase_count += 1;
    std::uint32_t ch = channel_of_block(gc_victim_);
    free_lists_[ch].push_back(gc_victim_);
    ++free_blocks_total_;
    GcEvent ev{gc_block_started_, eq_.now(), gc_pages_moved_};
    gc_history_.push_back(ev);
    if (stats_) stats_->add_gc_event(ev);
    log("gc_block_freed", "block=" + std::to_string(gc_victim_));
    gc_victim_ = kInvalid;
    gc_op_in_flight_ = false;
    wake_alloc_waiters();

    if (free_fraction() < gc_high_eff_ || gc_emergency()) {
        auto victim = select_gc_victim_now();
        if (victim && blocks_[*victim].valid_count < cfg_.pages_per_block) {
            gc_victim_ = *victim;
            gc_scan_ = 0;
            gc_pages_moved_ = 0;
            gc_block_started_ = eq_.now();
            gc_phase_ = GcPhase::Migrating;
            log("gc_start", "victim=" + std::to_string(gc_victim_) +
                                " valid=" + std::to_string(blocks_[gc_victim_].valid_count));
            schedule_gc_step(eq_.now());
            return;
        }
    }
    gc_phase_ = GcPhase::Idle;
    log("gc_stop", "free_blocks=" + std::to_string(free_blocks_total_));
}

// ---------------------------------------------------------------------------
// GPF / crash
// ---------------------------------------------------------------------------

void FlashSsd::persist_flush(Tick at, std::function<void(Tick)> done) {
    flush_done_.push_back(std::move(done));
    flush_active_ = true;
    // Kick from an event so `at` ordering is respected.
    eq_.schedule(std::max(at, eq_.now()), EventKind::GpfDone, [this] { pump_flush(); });
}

void FlashSsd::pump_flush() {
    if (!flush_active_) return;
    std::vector<std::uint64_t> dirty;
    cache_.for_each_valid([&](std::uint64_t lpn, bool is_dirty, bool, std::uint64_t) {
        if (is_dirty && !flushing_.count(lpn)) dirty.push_back(lpn);
    });
    std::sort(dirty.begin(), dirty.end());
    if (!dirty.empty()) log("flush_wave", "pages=" + std::to_string(dirty.size()));
    for (std::uint64_t lpn : dirty) {
        flushing_.insert(lpn);
        PageContent snapshot;
        if (auto c = cache_content_.find(lpn); c != cache_content_.end()) snapshot = c->second;
        std::uint64_t epoch = dirty_epoch_[lpn];
        program_page(lpn, std::move(snapshot), eq_.now(), ++write_gen_, [this, lpn, epoch](Tick) {
            flushing_.erase(lpn);
            if (cache_.probe(lpn) && dirty_epoch_[lpn] == epoch) cache_.clear_dirty(lpn);
            pump_flush();
        });
    }
    if (dirty.empty() && flushing_.empty() && wb_buffer_.empty() && pending_fills_.empty() &&
        outstanding_programs_ == 0) {
        flush_active_ = false;
        auto cbs = std::move(flush_done_);
        flush_done_.clear();
        for (auto& cb : cbs) cb(eq_.now());
    }
}

void FlashSsd::crash_drop_volatile() {
    DeviceDramConfig d = dram_;
    cache_ = SetAssocCache(CacheGeometry{d.capacity, d.ways, d.line_bytes});
    cache_content_.clear();
    wb_buffer_.clear();
    dirty_epoch_.clear();
    pending_fills_.clear();
    flushing_.clear();
    flush_active_ = false;
    flush_done_.clear();
    // The oracle now reflects flash contents only.
    expected_.clear();
    for (const auto& [ppn, content] : flash_content_) {
        std::uint32_t lpn = rmap_[ppn];
        if (lpn == kInvalid) continue;
        for (const auto& [off, token] : content.slots) {
            expected_[static_cast<std::uint64_t>(lpn) * 64 + off] = token;
        }
    }
    log("crash_drop_volatile", "");
}

// ---------------------------------------------------------------------------
// Introspection
// ---------------------------------------------------------------------------

std::uint64_t FlashSsd::peek(std::uint64_t addr) const {
    std::uint64_t lpn = addr / cfg_.page_bytes;
    auto off = static_cast<std::uint16_t>((addr % cfg_.page_bytes) / kLineBytes);
    if (auto c = cache_content_.find(lpn); c != cache_content_.end()) return c->second.get(off);
    if (auto w = wb_buffer_.find(lpn); w != wb_buffer_.end()) return w->second.content.get(off);
    return peek_durable(addr);
}

std::uint64_t FlashSsd::peek_durable(std::uint64_t addr) const {
    std::uint64_t lpn = addr / cfg_.page_bytes;
    auto off = static_cast<std::uint16_t>((addr % cfg_.page_bytes) / kLineBytes);
    std::uint32_t ppn = l2p_[lpn];
    if (ppn == kInvalid) return 0;
    if (auto f = flash_content_.find(ppn); f != flash_content_.end()) return f->second.get(off);
    return 0;
}

bool FlashSsd::ftl_consistent() const {
    std::vector<std::uint32_t> counted(blocks_.size(), 0);
    for (std::uint64_t lpn = 0; lpn < logical_pages_; ++lpn) {
        std::uint32_t ppn = l2p_[lpn];
        if (ppn == kInvalid) continue;
        if (rmap_[ppn] != lpn) return false;
        counted[block_of(ppn)] += 1;
    }
    for (std::size_t p = 0; p < rmap_.size(); ++p) {
        if (rmap_[p] != kInvalid && l2p_[rmap_[p]] != p) return false;
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (counted[b] != blocks_[b].valid_count) return false;
        if (blocks_[b].is_free && blocks_[b].valid_count != 0) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// DramEndpoint
// ---------------------------------------------------------------------------

DramEndpoint::DramEndpoint(EventQueue& eq, std::uint64_t capacity, DeviceDramConfig timing,
                           StatsReport* stats)
    : eq_(eq), capacity_(capacity), timing_(timing), stats_(stats) {}

void DramEndpoint::handle_request(const Flit& req, const Annotation&, std::uint64_t store_token,
                                  Tick arrival, FlashSsd::RespondFn respond) {
    if (req.opcode == FlitOpcode::Gpf) {
        // Nothing volatile in front of the media; acknowledge straight away.
        Flit resp = make_response(req);
        eq_.schedule(arrival, EventKind::GpfDone, [respond, resp, arrival] {
            respond(resp, ResponseMeta{ServedBy::DeviceDram, 0}, arrival);
        });
        return;
    }
    if (req.address + kLineBytes > capacity_)
        throw SimError("OutOfRange: device address 0x" + std::to_string(req.address));
    ++requests_;
    if (stats_) stats_->count_storage_access();
    if (stats_) stats_->count_device_dram_hit();
    Tick t = arrival + timing_.access_latency();
    std::uint64_t line = req.address / kLineBytes;
    std::uint64_t token = 0;
    if (req.opcode == FlitOpcode::MemWr) {
        content_[line] = store_token;
        token = store_token;
    } else {
        if (auto it = content_.find(line); it != content_.end()) token = it->second;
    }
    Flit resp = make_response(req);
    eq_.schedule(t, EventKind::RequestComplete, [respond, resp, token, t] {
        respond(resp, ResponseMeta{ServedBy::DeviceDram, token}, t);
    });
}

std::uint64_t DramEndpoint::peek(std::uint64_t addr) const {
    auto it = content_.find(addr / kLineBytes);
    return it == content_.end() ? 0 : it->second;
}

} // namespace cxlsim
