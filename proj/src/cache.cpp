#include "cxlsim/cache.hpp"

namespace cxlsim {

SetAssocCache::SetAssocCache(const CacheGeometry& g)
    : set_count_(g.sets()), ways_(g.ways), line_bytes_(g.line_bytes) {
    if (g.line_bytes == 0 || g.ways == 0)
        throw ConfigError("cache geometry: ways and line_bytes must be nonzero");
    if (set_count_ == 0)
        throw ConfigError("cache geometry: capacity below one set");
    lines_.assign(set_count_ * ways_, Line{});
}

SetAssocCache::Line* SetAssocCache::find(std::uint64_t key) {
    Line* base = &lines_[set_index(key) * ways_];
    for (std::uint32_t w = 0; w < ways_; ++w) {
        if (base[w].valid && base[w].tag == key) return &base[w];
    }
    return nullptr;
}

const SetAssocCache::Line* SetAssocCache::find(std::uint64_t key) const {
    const Line* base = &lines_[set_index(key) * ways_];
    for (std::uint32_t w = 0; w < ways_; ++w) {
        if (base[w].valid && base[w].tag == key) return &base[w];
    }
    return nullptr;
}

bool SetAssocCache::probe(std::uint64_t key) const { return find(key) != nullptr; }

bool SetAssocCache::touch(std::uint64_t key) {
    Line* l = find(key);
    if (!l) return false;
    l->stamp = next_stamp_++;
    return true;
}

SetAssocCache::Outcome SetAssocCache::access(std::uint64_t key, bool write) {
    Outcome out;
    Line* l = find(key);
    if (l) {
        out.hit = true;
        l->stamp = next_stamp_++;
        if (write) l->dirty = true;
        return out;
    }
    out.victim = insert(key, write, false);
    return out;
}

SetAssocCache::Victim SetAssocCache::insert(std::uint64_t key, bool dirty, bool pinned) {
    Victim v;
    Line* base = &lines_[set_index(key) * ways_];
    Line* slot = nullptr;
    for (std::uint32_t w = 0; w < ways_; ++w) {
        if (base[w].valid && base[w].tag == key) { // refresh in place
            base[w].stamp = next_stamp_++;
            base[w].dirty = base[w].dirty || dirty;
            base[w].pinned = base[w].pinned || pinned;
            return v;
        }
        if (!base[w].valid && !slot) slot = &base[w];
    }
    if (!slot) {
        // LRU among unpinned lines first; fall back to the LRU pinned line.
        Line* lru_unpinned = nullptr;
        Line* lru_pinned = nullptr;
        for (std::uint32_t w = 0; w < ways_; ++w) {
            Line& c = base[w];
            if (c.pinned) {
                if (!lru_pinned || c.stamp < lru_pinned->stamp) lru_pinned = &c;
            } else {
                if (!lru_unpinned || c.stamp < lru_unpinned->stamp) lru_unpinned = &c;
            }
        }
        slot = lru_unpinned ? lru_unpinned : lru_pinned;
        if (!lru_unpinned) {
            ++pinned_demotions_;
            v.pinned_demoted = true;
        }
        v.valid = true;
        v.key = slot->tag;
        v.dirty = slot->dirty;
        v.token = slot->token;
        v.bf = slot->bf;
    }
    slot->tag = key;
    slot->valid = true;
    slot->dirty = dirty;
    slot->pinned = pinned;
    slot->bf = false;
    slot->token = 0;
    slot->stamp = next_stamp_++;
    return v;
}

bool SetAssocCache::invalidate(std::uint64_t key, bool* was_dirty) {
    Line* l = find(key);
    if (!l) return false;
    if (was_dirty) *was_dirty = l->dirty;
    *l = Line{};
    return true;
}

bool SetAssocCache::mark_dirty(std::uint64_t key) {
    Line* l = find(key);
    if (!l) return false;
    l->dirty = true;
    return true;
}

bool SetAssocCache::set_pinned(std::uint64_t key, bool pinned) {
    Line* l = find(key);
    if (!l) return false;
    l->pinned = pinned;
    return true;
}

bool SetAssocCache::is_dirty(std::uint64_t key) const {
    const Line* l = find(key);
    return l && l->dirty;
}

bool SetAssocCache::set_token(std::uint64_t key, std::uint64_t token) {
    Line* l = find(key);
    if (!l) return false;
    l->token = token;
    return true;
}

std::uint64_t SetAssocCache::token_of(std::uint64_t key) const {
    const Line* l = find(key);
    return l ? l->token : 0;
}

bool SetAssocCache::set_bf(std::uint64_t key, bool bf) {
    Line* l = find(key);
    if (!l) return false;
    l->bf = bf;
    return true;
}

bool SetAssocCache::bf_of(std::uint64_t key) const {
    const Line* l = find(key);
    return l && l->bf;
}

void SetAssocCache::clear_dirty(std::uint64_t key) {
    Line* l = find(key);
    if (l) l->dirty = false;
}

std::uint64_t SetAssocCache::valid_count() const {
    std::uint64_t n = 0;
    for (const Line& l : lines_) n += l.valid;
    return n;
}

std::uint64_t SetAssocCache::dirty_count() const {
    std::uint64_t n = 0;
    for (const Line& l : lines_) n += l.valid && l.dirty;
    return n;
}

void SetAssocCache::for_each_valid(
    const std::function<void(std::uint64_t, bool, bool, std::uint64_t)>& fn) const {
    for (const Line& l : lines_) {
        if (l.valid) fn(l.tag, l.dirty, l.pinned, l.token);
    }
}

} // namespace cxlsim
