#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "vp/kernel.hpp"
#include "vp/net.hpp"
#include "vp/tlm.hpp"
#include "vp/tracing.hpp"

namespace vp {

class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Converts a cycle count in a clock domain to simulated time (floor).
SimTime cycles_to_time(std::uint64_t cycles, std::uint64_t clock_hz);

/// A clock frequency with a fast path for periods that are whole picoseconds.
class ClockDomain {
public:
    explicit ClockDomain(std::uint64_t hz);
    std::uint64_t hz() const { return hz_; }
    SimTime time_of(std::uint64_t cycles) const {
        if (period_ps_ != 0 && cycles <= max_fast_cycles_)
            return SimTime{cycles * period_ps_};
        return cycles_to_time(cycles, hz_);
    }

private:
    std::uint64_t hz_;
    std::uint64_t period_ps_ = 0;
    std::uint64_t max_fast_cycles_ = 0;
};

/// Zero-initialized RAM.
class Memory final : public Target {
public:
    Memory(std::uint64_t base, std::uint64_t size);

    std::string_view name() const override { return "ram"; }
    void access(Transaction& txn, std::uint64_t offset) override;

    std::uint64_t base() const { return base_; }
    std::uint64_t size() const { return storage_.size(); }

    void load_image(std::span<const std::uint8_t> bytes, std::uint64_t load_address);

    // Backdoor access by absolute address; false when out of bounds.
    bool contains(std::uint64_t address, std::uint64_t length) const;
    bool backdoor_read(std::uint64_t address, std::span<std::uint8_t> out) const;
    bool backdoor_write(std::uint64_t address, std::span<const std::uint8_t> bytes);

private:
    std::uint64_t base_;
    std::vector<std::uint8_t> storage_;
};

/// Fans console bytes out to any number of TCP clients. Raw, one-way.
class ConsoleServer {
public:
    explicit ConsoleServer(std::uint16_t port);
    ~ConsoleServer();

    std::uint16_t port() const { return listener_.port(); }
    void broadcast(std::uint8_t byte);
    std::size_t clients() const;

private:
    void accept_loop();

    net::Listener listener_;
    mutable std::mutex mutex_;
    std::vector<net::Socket> clients_;
    std::atomic<bool> stop_{false};
    std::thread acceptor_;
};

class Uart final : public Target {
public:
    static constexpr std::uint32_t kTxData = 0x00;
    static constexpr std::uint32_t kStatus = 0x04;

    Uart();

    std::string_view name() const override { return "uart"; }
    void access(Transaction& txn, std::uint64_t offset) override { regs_.access(txn, offset); }

    void write(std::uint8_t byte);
    const std::string& capture() const { return capture_; }

    void attach_console(ConsoleServer* server) { console_ = server; }

private:
    RegisterFile regs_;
    std::string capture_;
    ConsoleServer* console_ = nullptr;
};

/// Test-termination device: any write to EXIT stops the kernel.
class SimCtrl final : public Target {
public:
    static constexpr std::uint32_t kExit = 0x00;

    explicit SimCtrl(Kernel& kernel);

    std::string_view name() const override { return "simctrl"; }
    void access(Transaction& txn, std::uint64_t offset) override { regs_.access(txn, offset); }

    void exit(std::uint32_t code);

private:
    Kernel& kernel_;
    RegisterFile regs_;
};

struct AcceleratorTiming {
    std::uint64_t clock_hz = 100'000'000;
    std::uint64_t base_cycles = 16;
    std::uint64_t cycles_per_mac = 1;
};

/// Memory-mapped int32 matrix-multiply engine: C[MxN] = A[MxK] * B[KxN].
///
/// Operands are read and the result written through the RAM backdoor. The
/// job takes base_cycles + M*N*K*cycles_per_mac cycles of the accelerator
/// clock; BUSY covers exactly that interval.
class Accelerator final : public Target {
public:
    static constexpr std::uint32_t kCtrl = 0x00;
    static constexpr std::uint32_t kStatus = 0x04;
    static constexpr std::uint32_t kSrcA = 0x08;
    static constexpr std::uint32_t kSrcB = 0x0C;
    static constexpr std::uint32_t kDst = 0x10;
    static constexpr std::uint32_t kDimM = 0x14;
    static constexpr std::uint32_t kDimN = 0x18;
    static constexpr std::uint32_t kDimK = 0x1C;

    static constexpr std::uint32_t kCtrlStart = 1u << 0;
    static constexpr std::uint32_t kCtrlIrqEn = 1u << 1;
    static constexpr std::uint32_t kStatusBusy = 1u << 0;
    static constexpr std::uint32_t kStatusDone = 1u << 1;
    static constexpr std::uint32_t kStatusError = 1u << 2;

    Accelerator(Kernel& kernel, Memory& memory, AcceleratorTiming timing);

    std::string_view name() const override { return "accelerator"; }
    void access(Transaction& txn, std::uint64_t offset) override { regs_.access(txn, offset); }

    void connect_irq(std::function<void(bool)> line) { irq_out_ = std::move(line); }
    void attach_tracer(VcdWriter& vcd);

    std::uint32_t status() const;
    bool irq() const { return irq_level_; }
    bool busy() const { return busy_; }

    /// Cycle count a job of the given dimensions takes.
    std::uint64_t job_cycles(std::uint64_t m, std::uint64_t n, std::uint64_t k) const;

private:
    struct Params {
        std::uint32_t src_a = 0, src_b = 0, dst = 0;
        std::uint32_t m = 0, n = 0, k = 0;
    };

    void start();
    void complete();
    void fail();
    void update_signals();
    void add_param_register(const char* name, std::uint32_t offset, std::uint32_t Params::*field);

    Kernel& kernel_;
    Memory& memory_;
    AcceleratorTiming timing_;
    RegisterFile regs_;
    Params params_;
    bool irq_enable_ = false;
    bool busy_ = false;
    bool done_ = false;
    bool error_ = false;
    bool irq_level_ = false;
    std::vector<std::uint8_t> pending_result_;
    std::function<void(bool)> irq_out_;

    VcdWriter* vcd_ = nullptr;
    SignalId sig_busy_, sig_done_, sig_error_, sig_irq_;
};

} // namespace vp
