#include "vp/kernel.hpp"

#include <limits>

namespace vp {

namespace {

struct RunningGuard {
    bool& flag;
    explicit RunningGuard(bool& f) : flag(f) {
        if (flag)
            throw KernelUsageError("kernel run is not reentrant");
        flag = true;
    }
    ~RunningGuard() { flag = false; }
};

RunOutcome consume_stop(std::optional<std::uint8_t>& code) {
    auto c = *code;
    code.reset();
    return RunOutcome::finished(c);
}

} // namespace

EventId Kernel::schedule(Action action, SimTime delay) {
    if (delay.ps > std::numeric_limits<std::uint64_t>::max() - now_.ps)
        throw SchedulingError("event time overflows the 64-bit picosecond range");
    EventId id{next_sequence_++};
    queue_.push(Entry{SimTime{now_.ps + delay.ps}, id, std::move(action)});
    live_.insert(id.sequence);
    return id;
}

bool Kernel::cancel(EventId id) {
    // The queue entry stays behind as a tombstone and is skipped on pop.
    return live_.erase(id.sequence) > 0;
}

void Kernel::drop_cancelled_top() {
    while (!queue_.empty() && !live_.contains(queue_.top().id.sequence))
        queue_.pop();
}

std::optional<SimTime> Kernel::next_event_time() {
    drop_cancelled_top();
    if (queue_.empty())
        return std::nullopt;
    return queue_.top().time;
}

void Kernel::execute_top() {
    // priority_queue::top is const; move the action out before popping.
    auto& top = const_cast<Entry&>(queue_.top());
    Action action = std::move(top.action);
    now_ = top.time;
    live_.erase(top.id.sequence);
    queue_.pop();
    action();
}

RunOutcome Kernel::run(std::optional<SimTime> limit) {
    RunningGuard guard(running_);
    for (;;) {
        if (stop_code_)
            return consume_stop(stop_code_);
        auto next = next_event_time();
        if (!next)
            return RunOutcome::idle();
        if (limit && *next > *limit) {
            now_ = *limit;
            return RunOutcome::limit_reached();
        }
        execute_top();
    }
}

RunOutcome Kernel::run_until(SimTime t) {
    RunningGuard guard(running_);
    for (;;) {
        if (stop_code_)
            return consume_stop(stop_code_);
        auto next = next_event_time();
        if (!next || *next > t)
            break;
        execute_top();
    }
    if (t > now_)
        now_ = t;
    return RunOutcome::limit_reached();
}

void Kernel::request_stop(std::uint8_t exit_code) {
    if (!stop_code_)
        stop_code_ = exit_code;
}

} // namespace vp
