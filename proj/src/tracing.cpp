#include "vp/tracing.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace vp {

namespace {

std::vector<std::string> split_dotted(const std::string& name) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        auto dot = name.find('.', start);
        parts.push_back(name.substr(start, dot - start));
        if (dot == std::string::npos)
            break;
        start = dot + 1;
    }
    return parts;
}

bool fits(std::uint64_t value, unsigned width) {
    return width >= 64 || (value >> width) == 0;
}

} // namespace

VcdWriter::VcdWriter(std::ostream& out, const Kernel& kernel) : out_(out), kernel_(kernel) {}

VcdWriter::~VcdWriter() {
    try {
        finish();
    } catch (...) {
    }
}

std::string VcdWriter::identifier_code(std::uint32_t n) {
    std::string code;
    do {
        code.push_back(char('!' + n % 94));
        n /= 94;
    } while (n > 0);
    return code;
}

SignalId VcdWriter::declare(const std::string& name, unsigned width, std::uint64_t initial) {
    if (header_done_)
        throw TraceError(fmt::format("signal '{}' declared after tracing started", name));
    if (width == 0 || width > 64)
        throw TraceError(fmt::format("signal '{}' has unsupported width {}", name, width));
    if (name.empty() || name.front() == '.' || name.back() == '.' || name.find("..") != std::string::npos
        || std::ranges::any_of(name, [](unsigned char c) { return c <= ' ' || c >= 0x7f; }))
        throw TraceError(fmt::format("bad signal name '{}'", name));
    if (by_name_.contains(name))
        throw TraceError(fmt::format("signal '{}' declared twice", name));
    if (!fits(initial, width))
        throw TraceError(fmt::format("initial value of '{}' exceeds {} bits", name, width));
    const auto index = std::uint32_t(signals_.size());
    signals_.push_back(Signal{name, width, identifier_code(index), initial});
    by_name_.emplace(name, index);
    return SignalId{index};
}

void VcdWriter::emit_value(const Signal& s) {
    if (s.width == 1) {
        out_ << (s.value ? '1' : '0') << s.code << '\n';
        return;
    }
    out_ << 'b';
    bool leading = true;
    for (int bit = int(s.width) - 1; bit >= 0; --bit) {
        const bool one = (s.value >> bit) & 1;
        if (leading && !one && bit != 0)
            continue;
        leading = false;
        out_ << (one ? '1' : '0');
    }
    out_ << ' ' << s.code << '\n';
}

void VcdWriter::emit_header() {
    header_done_ = true;
    out_ << "$date\n  (deterministic)\n$end\n";
    out_ << "$version\n  vp-sim\n$end\n";
    out_ << "$timescale 1ps $end\n";

    // Signals grouped into nested scopes by their dotted prefix. The scope
    // walk is sorted by name so output does not depend on declaration order.
    std::vector<std::uint32_t> order(signals_.size());
    for (std::uint32_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return signals_[a].name < signals_[b].name; });

    std::vector<std::string> open;
    out_ << "$scope module top $end\n";
    for (auto idx : order) {
        const auto& sig = signals_[idx];
        auto parts = split_dotted(sig.name);
        const std::string leaf = parts.back();
        parts.pop_back();
        std::size_t common = 0;
        while (common < open.size() && common < parts.size() && open[common] == parts[common])
            ++common;
        while (open.size() > common) {
            out_ << "$upscope $end\n";
            open.pop_back();
        }
        for (std::size_t i = common; i < parts.size(); ++i) {
            out_ << "$scope module " << parts[i] << " $end\n";
            open.push_back(parts[i]);
        }
        out_ << "$var wire " << sig.width << ' ' << sig.code << ' ' << leaf << " $end\n";
    }
    while (!open.empty()) {
        out_ << "$upscope $end\n";
        open.pop_back();
    }
    out_ << "$upscope $end\n";
    out_ << "$enddefinitions $end\n";
    out_ << "#0\n$dumpvars\n";
    for (const auto& s : signals_)
        emit_value(s);
    out_ << "$end\n";
    last_time_ = 0;
}

void VcdWriter::change(SignalId id, std::uint64_t value) {
    if (id.index >= signals_.size())
        throw TraceError("change on undeclared signal");
    auto& sig = signals_[id.index];
    if (!fits(value, sig.width))
        throw TraceError(fmt::format("value {:#x} wider than {} bits for '{}'", value, sig.width, sig.name));
    if (!header_done_)
        emit_header();
    if (sig.value == value)
        return;
    sig.value = value;
    const auto t = kernel_.now().ps;
    if (last_time_ != t) {
        out_ << '#' << t << '\n';
        last_time_ = t;
    }
    emit_value(sig);
}

void VcdWriter::finish() {
    if (!header_done_)
        emit_header();
    out_.flush();
}

std::filesystem::path ArtifactRegistry::register_artifact(const std::string& name,
                                                          const std::string& relative_path) {
    if (frozen_)
        throw TraceError(fmt::format("artifact '{}' registered after the run finished", name));
    if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..")
        throw TraceError(fmt::format("invalid artifact name '{}'", name));
    std::filesystem::path rel(relative_path);
    if (rel.is_absolute() || std::any_of(rel.begin(), rel.end(), [](const auto& p) { return p == ".."; }))
        throw TraceError(fmt::format("artifact '{}' must stay inside the run directory", name));
    if (!entries_.emplace(name, relative_path).second)
        throw TraceError(fmt::format("artifact '{}' already registered", name));
    return root_ / rel;
}

std::vector<std::string> ArtifactRegistry::list_artifacts() const {
    std::vector<std::string> names;
    for (const auto& [name, _] : entries_)
        names.push_back(name);
    return names;
}

std::optional<std::filesystem::path> ArtifactRegistry::path_of(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        return std::nullopt;
    return root_ / it->second;
}

const char* to_string(Outcome o) {
    switch (o) {
    case Outcome::Finished: return "finished";
    case Outcome::LimitReached: return "limit";
    case Outcome::Killed: return "killed";
    }
    return "?";
}

nlohmann::ordered_json finalize_stats(const RunCounters& counters, SimTime sim_time,
                                      std::uint64_t wall_time_ns, Outcome outcome,
                                      std::optional<std::uint8_t> exit_code) {
    nlohmann::ordered_json doc;
    doc["outcome"] = to_string(outcome);
    if (outcome == Outcome::Finished && exit_code)
        doc["exit_code"] = *exit_code;
    doc["instructions"] = counters.instructions;
    doc["cycles"] = counters.cycles;
    doc["sim_time_ps"] = sim_time.ps;
    // A run that finishes inside one clock tick of the host still gets a
    // finite factor.
    const double wall_s = double(std::max<std::uint64_t>(wall_time_ns, 1)) * 1e-9;
    doc["wall_time_ms"] = double(wall_time_ns) * 1e-6;
    doc["real_time_factor"] = double(sim_time.ps) * 1e-12 / wall_s;
    return doc;
}

nlohmann::ordered_json deterministic_stats(nlohmann::ordered_json stats) {
    stats.erase("wall_time_ms");
    stats.erase("real_time_factor");
    return stats;
}

} // namespace vp
