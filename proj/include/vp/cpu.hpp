#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "vp/isa.hpp"
#include "vp/tlm.hpp"

namespace vp {

/// Synchronous exception and interrupt codes written to mcause.
namespace cause {
inline constexpr std::uint32_t misaligned_fetch = 0;
inline constexpr std::uint32_t fetch_fault = 1;
inline constexpr std::uint32_t illegal_instruction = 2;
inline constexpr std::uint32_t breakpoint = 3;
inline constexpr std::uint32_t misaligned_load = 4;
inline constexpr std::uint32_t load_fault = 5;
inline constexpr std::uint32_t misaligned_store = 6;
inline constexpr std::uint32_t store_fault = 7;
inline constexpr std::uint32_t ecall_m = 11;
inline constexpr std::uint32_t interrupt_bit = 0x80000000u;
inline constexpr std::uint32_t machine_external = interrupt_bit | 11;
} // namespace cause

struct CpuState {
    std::array<std::uint32_t, 32> x{};
    std::uint32_t pc = 0;
    std::uint32_t mstatus = 0;
    std::uint32_t mie = 0;
    std::uint32_t mtvec = 0;
    std::uint32_t mepc = 0;
    std::uint32_t mcause = 0;
    std::uint64_t instret = 0;
    std::uint64_t cycle = 0;
    bool irq_pending = false;

    bool operator==(const CpuState&) const = default;
};

struct StepResult {
    enum class Kind { Retired, TrapTaken, Breakpoint, Stopped };
    Kind kind = Kind::Retired;
    std::uint32_t cause = 0; // TrapTaken only
    std::uint64_t cycles = 0; // cycles this step consumed

    bool operator==(const StepResult&) const = default;
};

/// Interpreter for the 32-bit base integer ISA in machine mode.
///
/// Every step that fetches costs one base cycle plus the bus latency of its
/// fetch and data accesses. Taking an interrupt costs one cycle. A breakpoint
/// hit costs nothing and leaves all state untouched.
class Cpu {
public:
    using TrapObserver = std::function<void(std::uint32_t cause)>;

    void reset(std::uint32_t entry_pc);
    StepResult step(Bus& bus);

    void set_irq(bool level) { state_.irq_pending = level; }

    const CpuState& state() const { return state_; }
    CpuState& state() { return state_; }

    std::uint32_t reg(unsigned i) const { return i == 0 ? 0 : state_.x[i]; }
    void set_reg(unsigned i, std::uint32_t v) {
        if (i != 0)
            state_.x[i] = v;
    }

    void on_trap(TrapObserver obs) { trap_observer_ = std::move(obs); }

    // Debug access; only valid between steps.
    std::array<std::uint32_t, 33> debug_read_registers() const;
    /// Register index 0..31 are x0..x31, 32 is pc.
    bool debug_write_register(unsigned index, std::uint32_t value);
    bool debug_read_memory(Bus& bus, std::uint64_t addr, std::span<std::uint8_t> out) const;
    bool debug_write_memory(Bus& bus, std::uint64_t addr, std::span<const std::uint8_t> bytes);

    void add_breakpoint(std::uint32_t addr) { breakpoints_.insert(addr); }
    bool remove_breakpoint(std::uint32_t addr) { return breakpoints_.erase(addr) > 0; }
    void clear_breakpoints() { breakpoints_.clear(); }
    bool has_breakpoint(std::uint32_t addr) const { return breakpoints_.contains(addr); }

    /// Suppresses the breakpoint check for the next step so a debugger can
    /// resume from a breakpoint address.
    void skip_breakpoint_once() { skip_breakpoint_ = true; }

private:
    StepResult trap(std::uint32_t cause, std::uint32_t epc, std::uint64_t cycles);
    std::optional<std::uint32_t> read_csr(std::uint16_t number) const;
    void write_csr(std::uint16_t number, std::uint32_t value);

    CpuState state_;
    std::unordered_set<std::uint32_t> breakpoints_;
    bool skip_breakpoint_ = false;
    bool reset_done_ = false;
    TrapObserver trap_observer_;
};

} // namespace vp
