#ifndef CXLSIM_CACHE_HPP
#define CXLSIM_CACHE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "cxlsim/errors.hpp"

namespace cxlsim {

struct CacheGeometry {
    std::uint64_t capacity_bytes = 0;
    std::uint32_t ways = 1;
    std::uint32_t line_bytes = 64;

    std::uint64_t sets() const {
        std::uint64_t lines = capacity_bytes / line_bytes;
        return lines / ways;
    }
};

// Set-associative write-back LRU array. Keys are line-granular addresses
// (already divided by line size is fine too; the caller picks the space).
// Pinned lines are skipped by victim selection while an unpinned candidate
// exists; when a set is fully pinned the LRU pinned line is demoted.
class SetAssocCache {
public:
    struct Victim {
        bool valid = false;
        std::uint64_t key = 0;
        bool dirty = false;
        std::uint64_t token = 0;
        bool bf = false;
        bool pinned_demoted = false; // insertion had to demote a pinned line
    };
    struct Outcome {
        bool hit = false;
        Victim victim;
    };

    explicit SetAssocCache(const CacheGeometry& g);

    std::uint64_t sets() const { return set_count_; }
    std::uint32_t ways() const { return ways_; }
    std::uint64_t key_of(std::uint64_t addr) const { return addr / line_bytes_; }

    // Tag-array probe without LRU movement.
    bool probe(std::uint64_t key) const;
    // Probe + LRU touch on hit.
    bool touch(std::uint64_t key);

    // Reference access: probe, touch, and fill on miss (write-allocate).
    // This is the sequence the brute-force LRU oracle mirrors.
    Outcome access(std::uint64_t key, bool write);

    // Explicit fill; returns the evicted line if any.
    Victim insert(std::uint64_t key, bool dirty, bool pinned);

    bool invalidate(std::uint64_t key, bool* was_dirty = nullptr);
    bool mark_dirty(std::uint64_t key);
    bool set_pinned(std::uint64_t key, bool pinned);
    bool is_dirty(std::uint64_t key) const;
    bool set_token(std::uint64_t key, std::uint64_t token);
    std::uint64_t token_of(std::uint64_t key) const;
    bool set_bf(std::uint64_t key, bool bf);
    bool bf_of(std::uint64_t key) const;
    void clear_dirty(std::uint64_t key);

    std::uint64_t valid_count() const;
    std::uint64_t dirty_count() const;
    std::uint64_t pinned_demotions() const { return pinned_demotions_; }

    // Deterministic set-major scan over valid lines.
    void for_each_valid(const std::function<void(std::uint64_t key, bool dirty,
                                                 bool pinned, std::uint64_t token)>& fn) const;

private:
    struct Line {
        std::uint64_t tag = 0;
        std::uint64_t stamp = 0;
        std::uint64_t token = 0;
        bool valid = false;
        bool dirty = false;
        bool pinned = false;
        bool bf = false;
    };

    Line* find(std::uint64_t key);
    const Line* find(std::uint64_t key) const;
    std::uint64_t set_index(std::uint64_t key) const { return key % set_count_; }

    std::vector<Line> lines_;
    std::uint64_t set_count_;
    std::uint32_t ways_;
    std::uint32_t line_bytes_;
    std::uint64_t next_stamp_ = 1;
    std::uint64_t pinned_demotions_ = 0;
};

} // namespace cxlsim

#endif
