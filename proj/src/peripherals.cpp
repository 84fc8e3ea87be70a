#include "vp/peripherals.hpp"

#include <cstring>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace vp {

SimTime cycles_to_time(std::uint64_t cycles, std::uint64_t clock_hz) {
    if (clock_hz == 0)
        throw ConfigurationError("clock frequency must be non-zero");
    const unsigned __int128 ps = (unsigned __int128)cycles * 1'000'000'000'000ull / clock_hz;
    if (ps > UINT64_MAX)
        throw SchedulingError("cycle count exceeds the simulated time range");
    return SimTime{std::uint64_t(ps)};
}

ClockDomain::ClockDomain(std::uint64_t hz) : hz_(hz) {
    if (hz == 0)
        throw ConfigurationError("clock frequency must be non-zero");
    if (1'000'000'000'000ull % hz == 0) {
        period_ps_ = 1'000'000'000'000ull / hz;
        max_fast_cycles_ = UINT64_MAX / period_ps_;
    }
}

// ---------------------------------------------------------------------------

Memory::Memory(std::uint64_t base, std::uint64_t size) : base_(base), storage_(size, 0) {}

void Memory::access(Transaction& txn, std::uint64_t offset) {
    if (offset + txn.length > storage_.size()) {
        txn.response = Response::AddressError;
        return;
    }
    if (txn.command == Command::Read)
        std::memcpy(txn.data.data(), storage_.data() + offset, txn.length);
    else
        std::memcpy(storage_.data() + offset, txn.data.data(), txn.length);
    txn.response = Response::Ok;
}

bool Memory::contains(std::uint64_t address, std::uint64_t length) const {
    if (address < base_)
        return false;
    const auto off = address - base_;
    return off <= storage_.size() && length <= storage_.size() - off;
}

void Memory::load_image(std::span<const std::uint8_t> bytes, std::uint64_t load_address) {
    if (!contains(load_address, bytes.size()))
        throw ConfigurationError(fmt::format(
            "image of {} bytes at {:#x} does not fit RAM [{:#x}, {:#x})", bytes.size(), load_address,
            base_, base_ + storage_.size()));
    if (!bytes.empty())
        std::memcpy(storage_.data() + (load_address - base_), bytes.data(), bytes.size());
}

bool Memory::backdoor_read(std::uint64_t address, std::span<std::uint8_t> out) const {
    if (!contains(address, out.size()))
        return false;
    if (!out.empty())
        std::memcpy(out.data(), storage_.data() + (address - base_), out.size());
    return true;
}

bool Memory::backdoor_write(std::uint64_t address, std::span<const std::uint8_t> bytes) {
    if (!contains(address, bytes.size()))
        return false;
    if (!bytes.empty())
        std::memcpy(storage_.data() + (address - base_), bytes.data(), bytes.size());
    return true;
}

// ---------------------------------------------------------------------------

ConsoleServer::ConsoleServer(std::uint16_t port) : listener_(port) {
    acceptor_ = std::thread([this] { accept_loop(); });
}

ConsoleServer::~ConsoleServer() {
    stop_ = true;
    if (acceptor_.joinable())
        acceptor_.join();
}

void ConsoleServer::accept_loop() {
    using namespace std::chrono_literals;
    while (!stop_) {
        if (auto s = listener_.accept(50ms)) {
            std::lock_guard lock(mutex_);
            clients_.push_back(std::move(*s));
        }
    }
}

void ConsoleServer::broadcast(std::uint8_t byte) {
    std::lock_guard lock(mutex_);
    for (auto it = clients_.begin(); it != clients_.end();) {
        if (it->send_all(std::span<const std::uint8_t>(&byte, 1))) {
            ++it;
        } else {
            spdlog::warn("console client disconnected; dropping it");
            it = clients_.erase(it);
        }
    }
}

std::size_t ConsoleServer::clients() const {
    std::lock_guard lock(mutex_);
    return clients_.size();
}

// ---------------------------------------------------------------------------

Uart::Uart() {
    regs_.add({.name = "txdata",
               .offset = kTxData,
               .access = Access::WriteOnly,
               .write_hook = [this](std::uint32_t v) { write(std::uint8_t(v)); }});
    regs_.add({.name = "status", .offset = kStatus, .access = Access::ReadOnly, .reset_value = 1});
}

void Uart::write(std::uint8_t byte) {
    capture_.push_back(char(byte));
    if (console_)
        console_->broadcast(byte);
}

SimCtrl::SimCtrl(Kernel& kernel) : kernel_(kernel) {
    regs_.add({.name = "exit",
               .offset = kExit,
               .access = Access::WriteOnly,
               .write_hook = [this](std::uint32_t v) { exit(v); }});
}

void SimCtrl::exit(std::uint32_t code) {
    kernel_.request_stop(std::uint8_t(code & 0xff));
}

// ---------------------------------------------------------------------------

Accelerator::Accelerator(Kernel& kernel, Memory& memory, AcceleratorTiming timing)
    : kernel_(kernel), memory_(memory), timing_(timing) {
    if (timing_.clock_hz == 0)
        throw ConfigurationError("acc.clock_hz must be non-zero");

    regs_.add({.name = "ctrl",
               .offset = kCtrl,
               .read_hook = [this](std::uint32_t) { return irq_enable_ ? kCtrlIrqEn : 0u; },
               .write_hook =
                   [this](std::uint32_t v) {
                       irq_enable_ = v & kCtrlIrqEn;
                       if (v & kCtrlStart)
                           start();
                       update_signals();
                   }});
    regs_.add({.name = "status",
               .offset = kStatus,
               .read_hook = [this](std::uint32_t) { return status(); },
               .write_hook =
                   [this](std::uint32_t v) {
                       if (v & kStatusDone)
                           done_ = false;
                       if (v & kStatusError)
                           error_ = false;
                       update_signals();
                   }});
    add_param_register("src_a", kSrcA, &Params::src_a);
    add_param_register("src_b", kSrcB, &Params::src_b);
    add_param_register("dst", kDst, &Params::dst);
    add_param_register("dim_m", kDimM, &Params::m);
    add_param_register("dim_n", kDimN, &Params::n);
    add_param_register("dim_k", kDimK, &Params::k);
}

void Accelerator::add_param_register(const char* name, std::uint32_t offset,
                                     std::uint32_t Params::*field) {
    regs_.add({.name = name,
               .offset = offset,
               .read_hook = [this, field](std::uint32_t) { return params_.*field; },
               .write_hook =
                   [this, field](std::uint32_t v) {
                       if (busy_) {
                           error_ = true;
                           update_signals();
                           return;
                       }
                       params_.*field = v;
                   }});
}

void Accelerator::attach_tracer(VcdWriter& vcd) {
    vcd_ = &vcd;
    sig_busy_ = vcd.declare("acc.busy", 1);
    sig_done_ = vcd.declare("acc.done", 1);
    sig_error_ = vcd.declare("acc.error", 1);
    sig_irq_ = vcd.declare("acc.irq", 1);
}

std::uint32_t Accelerator::status() const {
    return (busy_ ? kStatusBusy : 0u) | (done_ ? kStatusDone : 0u) | (error_ ? kStatusError : 0u);
}

std::uint64_t Accelerator::job_cycles(std::uint64_t m, std::uint64_t n, std::uint64_t k) const {
    const unsigned __int128 c = (unsigned __int128)m * n * k * timing_.cycles_per_mac + timing_.base_cycles;
    if (c > UINT64_MAX)
        throw SchedulingError("accelerator job length overflows");
    return std::uint64_t(c);
}

void Accelerator::fail() {
    error_ = true;
}

void Accelerator::start() {
    if (busy_) {
        fail();
        return;
    }
    const std::uint64_t m = params_.m, n = params_.n, k = params_.k;
    if (m == 0 || n == 0 || k == 0) {
        fail();
        return;
    }
    const unsigned __int128 macs = (unsigned __int128)m * n * k;
    if (macs > UINT32_MAX) {
        fail();
        return;
    }
    const std::uint64_t bytes_a = 4 * m * k, bytes_b = 4 * k * n, bytes_c = 4 * m * n;
    if (!memory_.contains(params_.src_a, bytes_a) || !memory_.contains(params_.src_b, bytes_b)
        || !memory_.contains(params_.dst, bytes_c)) {
        fail();
        return;
    }

    SimTime delay;
    try {
        delay = cycles_to_time(job_cycles(m, n, k), timing_.clock_hz);
    } catch (const SchedulingError&) {
        fail();
        return;
    }

    std::vector<std::uint8_t> a(bytes_a), b(bytes_b);
    memory_.backdoor_read(params_.src_a, a);
    memory_.backdoor_read(params_.src_b, b);
    auto load = [](const std::vector<std::uint8_t>& buf, std::uint64_t idx) {
        std::uint32_t v;
        std::memcpy(&v, buf.data() + 4 * idx, 4);
        return v;
    };

    pending_result_.assign(bytes_c, 0);
    for (std::uint64_t i = 0; i < m; ++i) {
        for (std::uint64_t j = 0; j < n; ++j) {
            std::uint32_t acc = 0; // modular arithmetic
            for (std::uint64_t p = 0; p < k; ++p)
                acc += load(a, i * k + p) * load(b, p * n + j);
            std::memcpy(pending_result_.data() + 4 * (i * n + j), &acc, 4);
        }
    }

    done_ = false;
    busy_ = true;
    kernel_.schedule([this] { complete(); }, delay);
}

void Accelerator::complete() {
    memory_.backdoor_write(params_.dst, pending_result_);
    pending_result_.clear();
    busy_ = false;
    done_ = true;
    update_signals();
}

void Accelerator::update_signals() {
    const bool level = done_ && irq_enable_;
    if (level != irq_level_) {
        irq_level_ = level;
        if (irq_out_)
            irq_out_(level);
    }
    if (vcd_) {
        vcd_->change(sig_busy_, busy_);
        vcd_->change(sig_done_, done_);
        vcd_->change(sig_error_, error_);
        vcd_->change(sig_irq_, irq_level_);
    }
}

} // namespace vp
