#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace vp {

/// Simulated time with a fixed 1 ps resolution.
struct SimTime {
    std::uint64_t ps = 0;

    static constexpr SimTime from_ns(std::uint64_t ns) { return SimTime{ns * 1000}; }
    auto operator<=>(const SimTime&) const = default;
};

struct EventId {
    std::uint64_t sequence = 0;
    auto operator<=>(const EventId&) const = default;
};

struct RunOutcome {
    enum class Kind { Finished, LimitReached, Idle };

    Kind kind = Kind::Idle;
    std::uint8_t exit_code = 0; // valid only for Finished

    static RunOutcome finished(std::uint8_t code) { return {Kind::Finished, code}; }
    static RunOutcome limit_reached() { return {Kind::LimitReached, 0}; }
    static RunOutcome idle() { return {Kind::Idle, 0}; }

    bool operator==(const RunOutcome&) const = default;
};

class SchedulingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KernelUsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Deterministic discrete-event kernel.
///
/// Events are ordered by (timestamp, issue sequence), so two kernels fed the
/// same schedule execute callbacks in the same order. The kernel is not
/// thread-safe; one agent drives it at a time.
class Kernel {
public:
    using Action = std::function<void()>;

    SimTime now() const noexcept { return now_; }

    EventId schedule(Action action, SimTime delay);
    bool cancel(EventId id);

    /// Runs until a stop is requested, the queue drains, or the next event
    /// lies beyond `limit`. An absent limit means unbounded.
    RunOutcome run(std::optional<SimTime> limit = std::nullopt);

    /// Executes every event due at or before `t`, then moves now() to `t`.
    /// Returns early (time not advanced past the last executed event) when a
    /// stop is requested. Used by clocked drivers that own their own time base.
    RunOutcome run_until(SimTime t);

    void request_stop(std::uint8_t exit_code);
    bool stop_requested() const noexcept { return stop_code_.has_value(); }
    std::optional<std::uint8_t> stop_code() const noexcept { return stop_code_; }

    std::size_t pending() const noexcept { return live_.size(); }
    std::optional<SimTime> next_event_time();

private:
    struct Entry {
        SimTime time;
        EventId id;
        Action action;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.time != b.time)
                return a.time > b.time;
            return a.id > b.id;
        }
    };

    void drop_cancelled_top();
    void execute_top();

    SimTime now_{};
    std::uint64_t next_sequence_ = 0;
    std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
    std::unordered_set<std::uint64_t> live_;
    std::optional<std::uint8_t> stop_code_;
    bool running_ = false;
};

} // namespace vp
