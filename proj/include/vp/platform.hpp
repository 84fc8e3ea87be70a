#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vp/config.hpp"
#include "vp/cpu.hpp"
#include "vp/gdb.hpp"
#include "vp/kernel.hpp"
#include "vp/peripherals.hpp"
#include "vp/tlm.hpp"
#include "vp/tracing.hpp"

namespace vp {

/// Fixed memory map. Firmware, tests and API clients share it.
namespace memmap {
inline constexpr std::uint64_t ram_base = 0x0000'0000;
inline constexpr std::uint64_t uart_base = 0x1000'0000;
inline constexpr std::uint64_t accelerator_base = 0x1001'0000;
inline constexpr std::uint64_t simctrl_base = 0x1003'0000;
inline constexpr std::uint64_t device_size = 0x100;
/// RAM may grow up to the first device.
inline constexpr std::uint64_t ram_max = uart_base;
} // namespace memmap

/// Every property the platform understands, with defaults.
config::PropertySet make_property_catalog();

struct PlatformOptions {
    /// Artifacts are written here. Must exist.
    std::filesystem::path run_dir;
    /// Relative sw.image paths resolve against this directory.
    std::filesystem::path base_dir = std::filesystem::current_path();
    /// When set, used instead of reading sw.image from disk.
    std::optional<std::vector<std::uint8_t>> image;
};

struct ExitReport {
    Outcome outcome = Outcome::Finished;
    std::optional<std::uint8_t> exit_code;
    RunCounters counters;
    SimTime sim_time;
    std::uint64_t wall_time_ns = 0;
    nlohmann::ordered_json stats;
    std::vector<std::string> artifacts;
};

/// The assembled virtual platform: CPU, bus, RAM, UART, SIMCTRL and the
/// accelerator, with the accelerator interrupt wired to the CPU's external
/// line. Built from a frozen property set; never runs if construction fails.
class Platform : private gdb::DebugTarget {
public:
    static std::unique_ptr<Platform> build(const config::PropertySet& props, PlatformOptions options);
    ~Platform() override;

    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    ExitReport run();

    /// Asks a running simulation to stop at the next check point. Safe from
    /// any thread.
    void abort() { abort_ = true; }
    /// Simulated time reached so far; safe from any thread.
    SimTime progress() const { return SimTime{progress_ps_.load(std::memory_order_relaxed)}; }

    std::optional<std::uint16_t> gdb_port() const;
    std::optional<std::uint16_t> console_port() const;

    Kernel& kernel() { return kernel_; }
    Bus& bus() { return bus_; }
    Cpu& cpu() { return cpu_; }
    Memory& memory() { return *ram_; }
    Uart& uart() { return *uart_; }
    Accelerator& accelerator() { return *acc_; }
    ArtifactRegistry& artifacts() { return registry_; }
    const config::PropertySet& properties() const { return props_; }

    /// Time of the end of the instruction stream for a given cycle count.
    SimTime cpu_time(std::uint64_t cycles) const { return cpu_clock_.time_of(cycles); }

private:
    Platform(const config::PropertySet& props, PlatformOptions options);

    // gdb::DebugTarget
    std::array<std::uint32_t, 33> read_registers() override { return cpu_.debug_read_registers(); }
    bool write_register(unsigned index, std::uint32_t value) override {
        return cpu_.debug_write_register(index, value);
    }
    bool read_memory(std::uint64_t addr, std::span<std::uint8_t> out) override {
        return cpu_.debug_read_memory(bus_, addr, out);
    }
    bool write_memory(std::uint64_t addr, std::span<const std::uint8_t> bytes) override {
        return cpu_.debug_write_memory(bus_, addr, bytes);
    }
    void add_breakpoint(std::uint32_t addr) override { cpu_.add_breakpoint(addr); }
    void remove_breakpoint(std::uint32_t addr) override { cpu_.remove_breakpoint(addr); }

    void finalize(ExitReport& report);

    config::PropertySet props_;
    PlatformOptions options_;
    ArtifactRegistry registry_;
    ClockDomain cpu_clock_;
    std::uint64_t limit_ps_ = 0;
    bool gdb_wait_ = false;

    Kernel kernel_;
    Bus bus_;
    Cpu cpu_;
    std::unique_ptr<Memory> ram_;
    std::unique_ptr<Uart> uart_;
    std::unique_ptr<SimCtrl> simctrl_;
    std::unique_ptr<Accelerator> acc_;
    std::unique_ptr<ConsoleServer> console_;
    std::unique_ptr<gdb::Server> gdb_;

    std::ofstream vcd_file_;
    std::unique_ptr<VcdWriter> vcd_;
    SignalId sig_traps_;
    std::uint32_t trap_count_ = 0;

    std::atomic<bool> abort_{false};
    std::atomic<std::uint64_t> progress_ps_{0};
    bool ran_ = false;
};

} // namespace vp
