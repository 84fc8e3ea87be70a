#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vp/kernel.hpp"

namespace vp {

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SignalId {
    std::uint32_t index = 0;
    bool operator==(const SignalId&) const = default;
};

/// Value-change-dump writer with a fixed 1 ps timescale.
///
/// All signals must be declared before the first change is recorded; the
/// header and the time-zero initial dump are emitted at that point. Changes
/// are stamped with the kernel's current time.
class VcdWriter {
public:
    VcdWriter(std::ostream& out, const Kernel& kernel);
    ~VcdWriter();

    VcdWriter(const VcdWriter&) = delete;
    VcdWriter& operator=(const VcdWriter&) = delete;

    SignalId declare(const std::string& hierarchical_name, unsigned width, std::uint64_t initial = 0);
    void change(SignalId id, std::uint64_t value);

    /// Emits the header if nothing has been recorded yet and flushes.
    void finish();

    const std::string& identifier(SignalId id) const { return signals_.at(id.index).code; }

    /// Short identifier for the n-th declared signal, base-94 over '!'..'~'.
    static std::string identifier_code(std::uint32_t n);

private:
    struct Signal {
        std::string name;
        unsigned width;
        std::string code;
        std::uint64_t value;
    };

    void emit_header();
    void emit_value(const Signal& s);

    std::ostream& out_;
    const Kernel& kernel_;
    std::vector<Signal> signals_;
    std::map<std::string, std::uint32_t> by_name_;
    bool header_done_ = false;
    std::optional<std::uint64_t> last_time_;
};

/// Per-run name → file mapping. Paths are relative to the run directory.
class ArtifactRegistry {
public:
    explicit ArtifactRegistry(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }

    /// Registers `name` and returns the absolute path the producer writes to.
    std::filesystem::path register_artifact(const std::string& name, const std::string& relative_path);
    std::filesystem::path register_artifact(const std::string& name) { return register_artifact(name, name); }

    std::vector<std::string> list_artifacts() const;
    std::optional<std::filesystem::path> path_of(const std::string& name) const;

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

private:
    std::filesystem::path root_;
    std::map<std::string, std::string> entries_;
    bool frozen_ = false;
};

enum class Outcome { Finished, LimitReached, Killed };
const char* to_string(Outcome o);

struct RunCounters {
    std::uint64_t instructions = 0;
    std::uint64_t cycles = 0;
};

/// stats.json document. Wall-clock values are the only non-deterministic
/// fields and live under their own keys.
nlohmann::ordered_json finalize_stats(const RunCounters& counters, SimTime sim_time,
                                      std::uint64_t wall_time_ns, Outcome outcome,
                                      std::optional<std::uint8_t> exit_code);

/// The stats document with the wall-clock keys removed.
nlohmann::ordered_json deterministic_stats(nlohmann::ordered_json stats);

} // namespace vp
