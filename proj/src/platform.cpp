#include "vp/platform.hpp"

#include <chrono>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace vp {

using config::PropertySpec;
using config::Type;

config::PropertySet make_property_catalog() {
    config::PropertySet set;
    auto def = [&](const char* name, Type type, config::Value value, const char* description,
                   bool file_parameter = false) {
        set.define(PropertySpec{name, type, std::move(value), description, file_parameter});
    };
    using I = std::int64_t;
    def("system.cpu.clock_hz", Type::Integer, I{100'000'000}, "CPU clock frequency in Hz");
    def("acc.clock_hz", Type::Integer, I{100'000'000}, "accelerator clock frequency in Hz");
    def("acc.base_cycles", Type::Integer, I{16}, "fixed accelerator job overhead in accelerator cycles");
    def("acc.cycles_per_mac", Type::Integer, I{1}, "accelerator cycles per multiply-accumulate");
    def("bus.access_cycles", Type::Integer, I{0}, "interconnect latency added to every bus access, in CPU cycles");
    def("mem.size", Type::Size, I{16} << 20, "RAM size in bytes (Ki/Mi/Gi suffixes accepted)");
    def("sw.image", Type::String, std::string{}, "flat binary firmware image to load", true);
    def("sw.load_addr", Type::Integer, I{0}, "RAM address the image is loaded at");
    def("sw.entry_pc", Type::Integer, I{0}, "CPU reset program counter");
    def("gdb.port", Type::Integer, I{0}, "GDB remote server TCP port (0 = disabled)");
    def("gdb.wait", Type::Boolean, false, "hold the CPU at reset until a debugger attaches");
    def("uart.port", Type::Integer, I{0}, "TCP port serving the console stream (0 = disabled)");
    def("trace.enable", Type::Boolean, false, "write trace.vcd");
    def("limit.sim_time_ps", Type::Integer, I{0}, "simulated time limit in ps (0 = unbounded)");
    return set;
}

namespace {

std::uint64_t checked_range(const config::PropertySet& props, const char* name, std::int64_t lo,
                            std::int64_t hi) {
    const auto v = props.get_int(name);
    if (v < lo || v > hi)
        throw ConfigurationError(fmt::format("{} = {} is outside [{}, {}]", name, v, lo, hi));
    return std::uint64_t(v);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigurationError(fmt::format("sw.image: cannot open '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), std::streamsize(text.size()));
    if (!out)
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

constexpr std::int64_t kMax32 = 0xffff'ffffll;
constexpr std::int64_t kMaxI64 = std::numeric_limits<std::int64_t>::max();

} // namespace

std::unique_ptr<Platform> Platform::build(const config::PropertySet& props, PlatformOptions options) {
    return std::unique_ptr<Platform>(new Platform(props, std::move(options)));
}

Platform::Platform(const config::PropertySet& props, PlatformOptions options)
    : props_(props), options_(std::move(options)), registry_(options_.run_dir),
      cpu_clock_(checked_range(props, "system.cpu.clock_hz", 1, kMaxI64)) {
    props_.freeze();

    const auto acc_clock = checked_range(props_, "acc.clock_hz", 1, kMaxI64);
    const auto base_cycles = checked_range(props_, "acc.base_cycles", 0, kMaxI64);
    const auto cycles_per_mac = checked_range(props_, "acc.cycles_per_mac", 0, kMaxI64);
    bus_.set_access_cycles(checked_range(props_, "bus.access_cycles", 0, kMax32));
    const auto mem_size = checked_range(props_, "mem.size", 1, std::int64_t(memmap::ram_max));
    const auto load_addr = checked_range(props_, "sw.load_addr", 0, kMax32);
    const auto entry_pc = checked_range(props_, "sw.entry_pc", 0, kMax32);
    if (entry_pc % 4 != 0)
        throw ConfigurationError(fmt::format("sw.entry_pc = {:#x} is not 4-byte aligned", entry_pc));
    const auto gdb_port = checked_range(props_, "gdb.port", 0, 65535);
    gdb_wait_ = props_.get_bool("gdb.wait");
    if (gdb_wait_ && gdb_port == 0)
        throw ConfigurationError("gdb.wait = true requires a non-zero gdb.port");
    const auto uart_port = checked_range(props_, "uart.port", 0, 65535);
    limit_ps_ = checked_range(props_, "limit.sim_time_ps", 0, kMaxI64);

    if (!std::filesystem::is_directory(options_.run_dir))
        throw ConfigurationError(fmt::format("run directory '{}' does not exist", options_.run_dir.string()));

    // Image first: a bad image must fail before any socket is opened.
    std::vector<std::uint8_t> image;
    if (options_.image) {
        image = *options_.image;
    } else if (auto path = props_.get_string("sw.image"); !path.empty()) {
        std::filesystem::path p(path);
        if (p.is_relative())
            p = options_.base_dir / p;
        image = read_file(p);
    }

    ram_ = std::make_unique<Memory>(memmap::ram_base, mem_size);
    try {
        ram_->load_image(image, load_addr);
    } catch (const ConfigurationError& e) {
        throw ConfigurationError(fmt::format("sw.image: {} (mem.size = {:#x}, sw.load_addr = {:#x})", e.what(),
                                             mem_size, load_addr));
    }
    uart_ = std::make_unique<Uart>();
    simctrl_ = std::make_unique<SimCtrl>(kernel_);
    acc_ = std::make_unique<Accelerator>(kernel_, *ram_,
                                         AcceleratorTiming{acc_clock, base_cycles, cycles_per_mac});

    bus_.map(memmap::ram_base, mem_size, *ram_);
    bus_.map(memmap::uart_base, memmap::device_size, *uart_);
    bus_.map(memmap::accelerator_base, memmap::device_size, *acc_);
    bus_.map(memmap::simctrl_base, memmap::device_size, *simctrl_);

    acc_->connect_irq([this](bool level) { cpu_.set_irq(level); });
    cpu_.reset(std::uint32_t(entry_pc));

    registry_.register_artifact("console.log");
    registry_.register_artifact("stats.json");
    auto resolved = registry_.register_artifact("config.resolved");
    write_text(resolved, props_.snapshot_json().dump(2) + "\n");

    if (props_.get_bool("trace.enable")) {
        vcd_file_.open(registry_.register_artifact("trace.vcd"), std::ios::binary | std::ios::trunc);
        if (!vcd_file_)
            throw ConfigurationError("cannot create trace.vcd");
        vcd_ = std::make_unique<VcdWriter>(vcd_file_, kernel_);
        acc_->attach_tracer(*vcd_);
        sig_traps_ = vcd_->declare("cpu.traps", 32);
        cpu_.on_trap([this](std::uint32_t) { vcd_->change(sig_traps_, ++trap_count_); });
    }

    if (uart_port != 0) {
        console_ = std::make_unique<ConsoleServer>(std::uint16_t(uart_port));
        uart_->attach_console(console_.get());
    }
    if (gdb_port != 0) {
        gdb::DebugTarget& target = *this;
        gdb_ = std::make_unique<gdb::Server>(std::uint16_t(gdb_port), target);
    }
}

Platform::~Platform() = default;

std::optional<std::uint16_t> Platform::gdb_port() const {
    if (!gdb_)
        return std::nullopt;
    return gdb_->port();
}

std::optional<std::uint16_t> Platform::console_port() const {
    if (!console_)
        return std::nullopt;
    return console_->port();
}

ExitReport Platform::run() {
    if (ran_)
        throw KernelUsageError("a platform runs once");
    ran_ = true;

    constexpr std::uint64_t kPollInterval = 4096;
    const auto wall_start = std::chrono::steady_clock::now();
    ExitReport report;

    bool paused = false;
    bool stepping = false;
    if (gdb_ && gdb_wait_) {
        if (!gdb_->wait_for_client(abort_)) {
            report.outcome = Outcome::Killed;
            report.sim_time = SimTime{0};
            report.wall_time_ns = std::uint64_t(
                std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - wall_start)
                    .count());
            finalize(report);
            return report;
        }
        paused = true;
    }

    SimTime now = cpu_clock_.time_of(cpu_.state().cycle);
    std::uint64_t countdown = kPollInterval;

    for (;;) {
        // Device events due before the next instruction starts. A stop
        // raised by one of them ends the run at that event's time.
        const bool at_limit = limit_ps_ != 0 && now.ps >= limit_ps_;
        const auto events = kernel_.run_until(at_limit ? SimTime{limit_ps_} : now);
        if (events.kind == RunOutcome::Kind::Finished) {
            report.outcome = Outcome::Finished;
            report.exit_code = events.exit_code;
            now = kernel_.now();
            break;
        }
        if (at_limit) {
            report.outcome = Outcome::LimitReached;
            now = SimTime{limit_ps_};
            break;
        }

        if (--countdown == 0) {
            countdown = kPollInterval;
            progress_ps_.store(now.ps, std::memory_order_relaxed);
            if (abort_) {
                report.outcome = Outcome::Killed;
                break;
            }
            if (gdb_ && !paused) {
                switch (gdb_->poll_running()) {
                case gdb::Server::Poll::Interrupted:
                    gdb_->report_stop("S02");
                    paused = true;
                    break;
                case gdb::Server::Poll::Attached:
                    paused = true;
                    break;
                case gdb::Server::Poll::Nothing:
                    break;
                }
            }
        }

        if (paused) {
            progress_ps_.store(now.ps, std::memory_order_relaxed);
            const auto action = gdb_->serve_paused(abort_);
            paused = false;
            if (action == gdb::Resume::Kill) {
                report.outcome = Outcome::Killed;
                break;
            }
            if (action == gdb::Resume::Detach) {
                cpu_.clear_breakpoints();
            } else {
                stepping = action == gdb::Resume::Step;
                cpu_.skip_breakpoint_once();
            }
        }

        const auto result = cpu_.step(bus_);
        if (result.kind == StepResult::Kind::Breakpoint) {
            if (gdb_ && gdb_->connected()) {
                gdb_->report_stop("S05");
                paused = true;
            } else {
                cpu_.clear_breakpoints();
            }
            continue;
        }
        now = cpu_clock_.time_of(cpu_.state().cycle);

        if (kernel_.stop_requested()) {
            report.outcome = Outcome::Finished;
            report.exit_code = kernel_.stop_code();
            break;
        }
        if (stepping) {
            stepping = false;
            if (gdb_->connected()) {
                gdb_->report_stop("S05");
                paused = true;
            }
        }
    }

    report.sim_time = now;
    report.wall_time_ns = std::uint64_t(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - wall_start).count());

    if (gdb_ && gdb_->connected()) {
        if (report.outcome == Outcome::Finished)
            gdb_->report_exit(fmt::format("W{:02x}", *report.exit_code));
        else if (report.outcome == Outcome::LimitReached)
            gdb_->report_exit("X09");
    }
    finalize(report);
    return report;
}

void Platform::finalize(ExitReport& report) {
    progress_ps_.store(report.sim_time.ps, std::memory_order_relaxed);
    report.counters = RunCounters{cpu_.state().instret, cpu_.state().cycle};
    report.stats = finalize_stats(report.counters, report.sim_time, report.wall_time_ns, report.outcome,
                                  report.exit_code);

    write_text(*registry_.path_of("console.log"), uart_->capture());
    write_text(*registry_.path_of("stats.json"), report.stats.dump(2) + "\n");
    if (vcd_) {
        vcd_->finish();
        vcd_.reset();
        vcd_file_.close();
    }
    registry_.freeze();
    report.artifacts = registry_.list_artifacts();
}

} // namespace vp
