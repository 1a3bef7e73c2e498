#include "cxlsim/event_queue.hpp"

#include <string>
#include <utility>

#include "cxlsim/errors.hpp"

namespace cxlsim {

void EventQueue::schedule(Tick due, EventKind kind, Action fn) {
    if (due < now_) {
        throw SimError("SchedulingInPast: due=" + std::to_string(due) +
                       " < now=" + std::to_string(now_));
    }
    heap_.push(Entry{due, next_seq_++, kind, std::move(fn)});
}

void EventQueue::dispatch_one() {
    // priority_queue::top is const; move out via const_cast, pop, then run.
    Entry e = std::move(const_cast<Entry&>(heap_.top()));
    heap_.pop();
    now_ = e.due;
    ++dispatched_;
    e.fn();
}

Tick EventQueue::run_until(Tick limit) {
    while (!heap_.empty() && heap_.top().due <= limit) {
        dispatch_one();
    }
    if (limit > now_) now_ = limit;
    return now_;
}

Tick EventQueue::run_all() {
    while (!heap_.empty()) {
        dispatch_one();
    }
    return now_;
}

} // namespace cxlsim
