#ifndef CXLSIM_EVENT_QUEUE_HPP
#define CXLSIM_EVENT_QUEUE_HPP

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "cxlsim/time.hpp"

namespace cxlsim {

enum class EventKind : std::uint8_t {
    CoreStep,
    FlitArrival,
    CacheFill,
    FlashOpDone,
    GcStep,
    GpfDone,
    RequestComplete,
};

// Deterministic single-threaded event core. Dispatch order is
// (due ascending, insertion sequence ascending), so equal-time events run
// in the order they were scheduled.
class EventQueue {
public:
    using Action = std::function<void()>;

    Tick now() const { return now_; }
    std::uint64_t dispatched() const { return dispatched_; }
    bool empty() const { return heap_.empty(); }
    std::size_t pending() const { return heap_.size(); }

    // Throws SimError if due < now().
    void schedule(Tick due, EventKind kind, Action fn);
    void schedule_in(Tick delay, EventKind kind, Action fn) {
        schedule(now_ + delay, kind, std::move(fn));
    }

    // Dispatches every event with due <= limit; the clock ends at limit.
    Tick run_until(Tick limit);
    // Drains the queue; the clock ends at the last dispatched due time.
    Tick run_all();

private:
    struct Entry {
        Tick due;
        std::uint64_t seq;
        EventKind kind;
        Action fn;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.due != b.due) return a.due > b.due;
            return a.seq > b.seq;
        }
    };

    void dispatch_one();

    std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
    Tick now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t dispatched_ = 0;
};

} // namespace cxlsim

#endif
