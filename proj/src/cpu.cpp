#include "vp/cpu.hpp"

namespace vp {

using isa::Op;

void Cpu::reset(std::uint32_t entry_pc) {
    const bool irq = state_.irq_pending;
    state_ = CpuState{};
    state_.pc = entry_pc;
    // The interrupt line belongs to the device that drives it, not the core.
    state_.irq_pending = irq;
    skip_breakpoint_ = false;
    reset_done_ = true;
}

StepResult Cpu::trap(std::uint32_t cause_code, std::uint32_t epc, std::uint64_t cycles) {
    auto& s = state_;
    s.mepc = epc;
    s.mcause = cause_code;
    const bool mie = s.mstatus & isa::csr::mstatus_mie;
    s.mstatus &= ~(isa::csr::mstatus_mie | isa::csr::mstatus_mpie);
    if (mie)
        s.mstatus |= isa::csr::mstatus_mpie;
    s.pc = s.mtvec;
    s.cycle += cycles;
    if (trap_observer_)
        trap_observer_(cause_code);
    return {StepResult::Kind::TrapTaken, cause_code, cycles};
}

std::optional<std::uint32_t> Cpu::read_csr(std::uint16_t number) const {
    switch (number) {
    case isa::csr::mstatus: return state_.mstatus;
    case isa::csr::mie: return state_.mie;
    case isa::csr::mtvec: return state_.mtvec;
    case isa::csr::mepc: return state_.mepc;
    case isa::csr::mcause: return state_.mcause;
    default: return std::nullopt;
    }
}

void Cpu::write_csr(std::uint16_t number, std::uint32_t v) {
    switch (number) {
    case isa::csr::mstatus:
        state_.mstatus = v & (isa::csr::mstatus_mie | isa::csr::mstatus_mpie);
        break;
    case isa::csr::mie: state_.mie = v & isa::csr::mie_meie; break;
    case isa::csr::mtvec: state_.mtvec = v & ~3u; break; // direct mode only
    case isa::csr::mepc: state_.mepc = v & ~3u; break;
    case isa::csr::mcause: state_.mcause = v; break;
    default: break;
    }
}

StepResult Cpu::step(Bus& bus) {
    if (!reset_done_)
        return {StepResult::Kind::Stopped, 0, 0};

    auto& s = state_;
    const bool skip_breakpoint = skip_breakpoint_;
    skip_breakpoint_ = false;

    if (s.irq_pending && (s.mstatus & isa::csr::mstatus_mie) && (s.mie & isa::csr::mie_meie))
        return trap(cause::machine_external, s.pc, 1);

    if (!skip_breakpoint && !breakpoints_.empty() && breakpoints_.contains(s.pc))
        return {StepResult::Kind::Breakpoint, 0, 0};

    const std::uint32_t pc = s.pc;
    if (pc % 4 != 0)
        return trap(cause::misaligned_fetch, pc, 1);

    auto fetch = Transaction::read(pc, 4);
    bus.transport(fetch);
    std::uint64_t latency = fetch.latency_cycles;
    if (!fetch.ok())
        return trap(cause::fetch_fault, pc, 1 + latency);

    const auto decoded = isa::decode(fetch.value());
    if (!decoded)
        return trap(cause::illegal_instruction, pc, 1 + latency);
    const isa::Instruction& in = *decoded;

    const std::uint32_t a = reg(in.rs1);
    const std::uint32_t b = reg(in.rs2);
    const std::uint32_t imm = std::uint32_t(in.imm);
    std::uint32_t next_pc = pc + 4;
    std::optional<std::uint32_t> result;

    auto branch = [&](bool taken) {
        if (taken)
            next_pc = pc + imm;
    };

    switch (in.op) {
    case Op::LUI: result = imm; break;
    case Op::AUIPC: result = pc + imm; break;
    case Op::JAL:
        next_pc = pc + imm;
        result = pc + 4;
        break;
    case Op::JALR:
        next_pc = (a + imm) & ~1u;
        result = pc + 4;
        break;
    case Op::BEQ: branch(a == b); break;
    case Op::BNE: branch(a != b); break;
    case Op::BLT: branch(std::int32_t(a) < std::int32_t(b)); break;
    case Op::BGE: branch(std::int32_t(a) >= std::int32_t(b)); break;
    case Op::BLTU: branch(a < b); break;
    case Op::BGEU: branch(a >= b); break;

    case Op::LB: case Op::LH: case Op::LW: case Op::LBU: case Op::LHU: {
        const std::uint8_t len = (in.op == Op::LW) ? 4 : (in.op == Op::LH || in.op == Op::LHU) ? 2 : 1;
        const std::uint32_t addr = a + imm;
        if (addr % len != 0)
            return trap(cause::misaligned_load, pc, 1 + latency);
        auto txn = Transaction::read(addr, len);
        bus.transport(txn);
        latency += txn.latency_cycles;
        if (!txn.ok())
            return trap(cause::load_fault, pc, 1 + latency);
        std::uint32_t v = txn.value();
        if (in.op == Op::LB)
            v = std::uint32_t(std::int32_t(std::int8_t(v)));
        else if (in.op == Op::LH)
            v = std::uint32_t(std::int32_t(std::int16_t(v)));
        result = v;
        break;
    }
    case Op::SB: case Op::SH: case Op::SW: {
        const std::uint8_t len = in.op == Op::SW ? 4 : in.op == Op::SH ? 2 : 1;
        const std::uint32_t addr = a + imm;
        if (addr % len != 0)
            return trap(cause::misaligned_store, pc, 1 + latency);
        auto txn = Transaction::write(addr, b, len);
        bus.transport(txn);
        latency += txn.latency_cycles;
        if (!txn.ok())
            return trap(cause::store_fault, pc, 1 + latency);
        break;
    }

    case Op::ADDI: result = a + imm; break;
    case Op::SLTI: result = std::int32_t(a) < std::int32_t(imm) ? 1 : 0; break;
    case Op::SLTIU: result = a < imm ? 1 : 0; break;
    case Op::XORI: result = a ^ imm; break;
    case Op::ORI: result = a | imm; break;
    case Op::ANDI: result = a & imm; break;
    case Op::SLLI: result = a << (imm & 31); break;
    case Op::SRLI: result = a >> (imm & 31); break;
    case Op::SRAI: result = std::uint32_t(std::int32_t(a) >> (imm & 31)); break;

    case Op::ADD: result = a + b; break;
    case Op::SUB: result = a - b; break;
    case Op::SLL: result = a << (b & 31); break;
    case Op::SLT: result = std::int32_t(a) < std::int32_t(b) ? 1 : 0; break;
    case Op::SLTU: result = a < b ? 1 : 0; break;
    case Op::XOR: result = a ^ b; break;
    case Op::SRL: result = a >> (b & 31); break;
    case Op::SRA: result = std::uint32_t(std::int32_t(a) >> (b & 31)); break;
    case Op::OR: result = a | b; break;
    case Op::AND: result = a & b; break;

    case Op::FENCE:
    case Op::WFI:
        break;
    case Op::ECALL: return trap(cause::ecall_m, pc, 1 + latency);
    case Op::EBREAK: return trap(cause::breakpoint, pc, 1 + latency);
    case Op::MRET: {
        next_pc = s.mepc;
        const bool mpie = s.mstatus & isa::csr::mstatus_mpie;
        s.mstatus = (s.mstatus & ~isa::csr::mstatus_mie) | isa::csr::mstatus_mpie;
        if (mpie)
            s.mstatus |= isa::csr::mstatus_mie;
        break;
    }
    case Op::CSRRW: case Op::CSRRS: case Op::CSRRC: {
        const std::uint32_t old = *read_csr(in.csr);
        if (in.op == Op::CSRRW)
            write_csr(in.csr, a);
        else if (in.rs1 != 0)
            write_csr(in.csr, in.op == Op::CSRRS ? (old | a) : (old & ~a));
        result = old;
        break;
    }
    }

    if (next_pc % 4 != 0)
        return trap(cause::misaligned_fetch, pc, 1 + latency);

    if (result)
        set_reg(in.rd, *result);
    s.pc = next_pc;
    const std::uint64_t cycles = 1 + latency;
    s.cycle += cycles;
    s.instret += 1;
    return {StepResult::Kind::Retired, 0, cycles};
}

std::array<std::uint32_t, 33> Cpu::debug_read_registers() const {
    std::array<std::uint32_t, 33> out{};
    for (unsigned i = 0; i < 32; ++i)
        out[i] = reg(i);
    out[32] = state_.pc;
    return out;
}

bool Cpu::debug_write_register(unsigned index, std::uint32_t value) {
    if (index < 32) {
        set_reg(index, value);
        return true;
    }
    if (index == 32) {
        state_.pc = value;
        return true;
    }
    return false;
}

namespace {

// Widest naturally aligned access that fits the remaining span.
std::uint8_t chunk_length(std::uint64_t addr, std::size_t remaining) {
    if (addr % 4 == 0 && remaining >= 4)
        return 4;
    if (addr % 2 == 0 && remaining >= 2)
        return 2;
    return 1;
}

} // namespace

bool Cpu::debug_read_memory(Bus& bus, std::uint64_t addr, std::span<std::uint8_t> out) const {
    std::size_t done = 0;
    while (done < out.size()) {
        const auto len = chunk_length(addr + done, out.size() - done);
        auto txn = Transaction::read(addr + done, len);
        bus.transport_debug(txn);
        if (!txn.ok())
            return false;
        for (unsigned i = 0; i < len; ++i)
            out[done + i] = txn.data[i];
        done += len;
    }
    return true;
}

bool Cpu::debug_write_memory(Bus& bus, std::uint64_t addr, std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto len = chunk_length(addr + done, bytes.size() - done);
        auto txn = Transaction::write(addr + done, 0, len);
        for (unsigned i = 0; i < len; ++i)
            txn.data[i] = bytes[done + i];
        bus.transport_debug(txn);
        if (!txn.ok())
            return false;
        done += len;
    }
    return true;
}

} // namespace vp
