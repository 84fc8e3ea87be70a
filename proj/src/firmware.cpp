#include "vp/firmware.hpp"

#include <fmt/format.h>

namespace vp::fw {

using isa::Format;
using isa::Instruction;
using isa::Op;

namespace {

struct Encoding {
    std::uint32_t opcode;
    std::uint32_t funct3;
    std::uint32_t funct7;
};

Encoding encoding_of(Op op) {
    switch (op) {
    case Op::LUI: return {0x37, 0, 0};
    case Op::AUIPC: return {0x17, 0, 0};
    case Op::JAL: return {0x6f, 0, 0};
    case Op::JALR: return {0x67, 0, 0};
    case Op::BEQ: return {0x63, 0, 0};
    case Op::BNE: return {0x63, 1, 0};
    case Op::BLT: return {0x63, 4, 0};
    case Op::BGE: return {0x63, 5, 0};
    case Op::BLTU: return {0x63, 6, 0};
    case Op::BGEU: return {0x63, 7, 0};
    case Op::LB: return {0x03, 0, 0};
    case Op::LH: return {0x03, 1, 0};
    case Op::LW: return {0x03, 2, 0};
    case Op::LBU: return {0x03, 4, 0};
    case Op::LHU: return {0x03, 5, 0};
    case Op::SB: return {0x23, 0, 0};
    case Op::SH: return {0x23, 1, 0};
    case Op::SW: return {0x23, 2, 0};
    case Op::ADDI: return {0x13, 0, 0};
    case Op::SLTI: return {0x13, 2, 0};
    case Op::SLTIU: return {0x13, 3, 0};
    case Op::XORI: return {0x13, 4, 0};
    case Op::ORI: return {0x13, 6, 0};
    case Op::ANDI: return {0x13, 7, 0};
    case Op::SLLI: return {0x13, 1, 0x00};
    case Op::SRLI: return {0x13, 5, 0x00};
    case Op::SRAI: return {0x13, 5, 0x20};
    case Op::ADD: return {0x33, 0, 0x00};
    case Op::SUB: return {0x33, 0, 0x20};
    case Op::SLL: return {0x33, 1, 0x00};
    case Op::SLT: return {0x33, 2, 0x00};
    case Op::SLTU: return {0x33, 3, 0x00};
    case Op::XOR: return {0x33, 4, 0x00};
    case Op::SRL: return {0x33, 5, 0x00};
    case Op::SRA: return {0x33, 5, 0x20};
    case Op::OR: return {0x33, 6, 0x00};
    case Op::AND: return {0x33, 7, 0x00};
    case Op::FENCE: return {0x0f, 0, 0};
    case Op::ECALL: case Op::EBREAK: case Op::WFI: case Op::MRET: return {0x73, 0, 0};
    case Op::CSRRW: return {0x73, 1, 0};
    case Op::CSRRS: return {0x73, 2, 0};
    case Op::CSRRC: return {0x73, 3, 0};
    }
    throw EncodingError("unknown opcode");
}

void check_reg(const Instruction& in, const char* field, std::uint8_t r) {
    if (r > 31)
        throw EncodingError(fmt::format("{}: register field {} = {} out of range", isa::mnemonic(in.op), field, r));
}

void check_range(const Instruction& in, std::int64_t lo, std::int64_t hi, std::int64_t align) {
    if (in.imm < lo || in.imm > hi)
        throw EncodingError(fmt::format("{}: immediate {} outside [{}, {}]", isa::mnemonic(in.op), in.imm, lo, hi));
    if (in.imm % align != 0)
        throw EncodingError(fmt::format("{}: immediate {} is not a multiple of {}", isa::mnemonic(in.op), in.imm, align));
}

} // namespace

std::uint32_t encode(const Instruction& in) {
    const auto e = encoding_of(in.op);
    check_reg(in, "rd", in.rd);
    check_reg(in, "rs1", in.rs1);
    check_reg(in, "rs2", in.rs2);
    const std::uint32_t rd = in.rd, rs1 = in.rs1, rs2 = in.rs2;
    const auto imm = std::uint32_t(in.imm);

    switch (isa::format_of(in.op)) {
    case Format::R:
        return (e.funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (e.funct3 << 12) | (rd << 7) | e.opcode;
    case Format::I:
        check_range(in, -2048, 2047, 1);
        return ((imm & 0xfff) << 20) | (rs1 << 15) | (e.funct3 << 12) | (rd << 7) | e.opcode;
    case Format::Shift:
        check_range(in, 0, 31, 1);
        return (e.funct7 << 25) | (imm << 20) | (rs1 << 15) | (e.funct3 << 12) | (rd << 7) | e.opcode;
    case Format::S:
        check_range(in, -2048, 2047, 1);
        return (((imm >> 5) & 0x7f) << 25) | (rs2 << 20) | (rs1 << 15) | (e.funct3 << 12)
               | ((imm & 0x1f) << 7) | e.opcode;
    case Format::B:
        check_range(in, -4096, 4094, 2);
        return (((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3f) << 25) | (rs2 << 20) | (rs1 << 15)
               | (e.funct3 << 12) | (((imm >> 1) & 0xf) << 8) | (((imm >> 11) & 1) << 7) | e.opcode;
    case Format::U:
        if (imm & 0xfff)
            throw EncodingError(fmt::format("{}: immediate {:#x} has non-zero low 12 bits",
                                            isa::mnemonic(in.op), imm));
        return imm | (rd << 7) | e.opcode;
    case Format::J:
        check_range(in, -(1 << 20), (1 << 20) - 2, 2);
        return (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3ff) << 21) | (((imm >> 11) & 1) << 20)
               | (imm & 0x000ff000) | (rd << 7) | e.opcode;
    case Format::Csr:
        if (in.csr > 0xfff)
            throw EncodingError(fmt::format("{}: csr number {:#x} out of range", isa::mnemonic(in.op), in.csr));
        return (std::uint32_t(in.csr) << 20) | (rs1 << 15) | (e.funct3 << 12) | (rd << 7) | e.opcode;
    case Format::Fence:
        check_range(in, 0, 4095, 1);
        return (imm << 20) | e.opcode;
    case Format::System:
        switch (in.op) {
        case Op::ECALL: return 0x00000073;
        case Op::EBREAK: return 0x00100073;
        case Op::WFI: return 0x10500073;
        default: return 0x30200073;
        }
    }
    throw EncodingError("unreachable format");
}

namespace ins {

Instruction r(Op op, std::uint8_t rd, std::uint8_t rs1, std::uint8_t rs2) {
    return {.op = op, .rd = rd, .rs1 = rs1, .rs2 = rs2};
}
Instruction i(Op op, std::uint8_t rd, std::uint8_t rs1, std::int32_t imm) {
    return {.op = op, .rd = rd, .rs1 = rs1, .imm = imm};
}
Instruction load(Op op, std::uint8_t rd, std::int32_t offset, std::uint8_t base) {
    return {.op = op, .rd = rd, .rs1 = base, .imm = offset};
}
Instruction store(Op op, std::uint8_t rs2, std::int32_t offset, std::uint8_t base) {
    return {.op = op, .rs1 = base, .rs2 = rs2, .imm = offset};
}
Instruction branch(Op op, std::uint8_t rs1, std::uint8_t rs2, std::int32_t offset) {
    return {.op = op, .rs1 = rs1, .rs2 = rs2, .imm = offset};
}
Instruction lui(std::uint8_t rd, std::uint32_t upper20) {
    if (upper20 > 0xfffff)
        throw EncodingError(fmt::format("lui: upper immediate {:#x} exceeds 20 bits", upper20));
    return {.op = Op::LUI, .rd = rd, .imm = std::int32_t(upper20 << 12)};
}
Instruction auipc(std::uint8_t rd, std::uint32_t upper20) {
    if (upper20 > 0xfffff)
        throw EncodingError(fmt::format("auipc: upper immediate {:#x} exceeds 20 bits", upper20));
    return {.op = Op::AUIPC, .rd = rd, .imm = std::int32_t(upper20 << 12)};
}
Instruction jal(std::uint8_t rd, std::int32_t offset) {
    return {.op = Op::JAL, .rd = rd, .imm = offset};
}
Instruction jalr(std::uint8_t rd, std::uint8_t rs1, std::int32_t offset) {
    return {.op = Op::JALR, .rd = rd, .rs1 = rs1, .imm = offset};
}
Instruction csr(Op op, std::uint8_t rd, std::uint16_t number, std::uint8_t rs1) {
    return {.op = op, .rd = rd, .rs1 = rs1, .csr = number};
}
Instruction system(Op op) {
    return {.op = op};
}
Instruction fence() {
    return {.op = Op::FENCE, .imm = 0x0ff};
}
Instruction nop() {
    return i(Op::ADDI, 0, 0, 0);
}

} // namespace ins

// ---------------------------------------------------------------------------

void Program::label(const std::string& name) {
    if (!labels_.emplace(name, here()).second)
        throw EncodingError(fmt::format("label '{}' defined twice", name));
}

void Program::emit(const Instruction& insn) {
    encode(insn); // validate operands early
    items_.push_back(Item{insn, std::nullopt, Fixup::None, {}});
}

void Program::word(std::uint32_t raw) {
    items_.push_back(Item{{}, raw, Fixup::None, {}});
}

void Program::branch(Op op, std::uint8_t rs1, std::uint8_t rs2, const std::string& target) {
    if (isa::format_of(op) != Format::B)
        throw EncodingError(fmt::format("{} is not a branch", isa::mnemonic(op)));
    items_.push_back(Item{ins::branch(op, rs1, rs2, 0), std::nullopt, Fixup::Branch, target});
}

void Program::jal(std::uint8_t rd, const std::string& target) {
    items_.push_back(Item{ins::jal(rd, 0), std::nullopt, Fixup::Jal, target});
}

void Program::li(std::uint8_t rd, std::uint32_t value) {
    const auto sv = std::int32_t(value);
    if (sv >= -2048 && sv <= 2047) {
        emit(ins::i(Op::ADDI, rd, 0, sv));
        return;
    }
    const std::uint32_t upper = (value + 0x800) >> 12;
    const std::int32_t lower = std::int32_t(value << 20) >> 20;
    emit(ins::lui(rd, upper & 0xfffff));
    if (lower != 0)
        emit(ins::i(Op::ADDI, rd, rd, lower));
}

void Program::la(std::uint8_t rd, const std::string& target) {
    items_.push_back(Item{ins::lui(rd, 0), std::nullopt, Fixup::Hi, target});
    items_.push_back(Item{ins::i(Op::ADDI, rd, rd, 0), std::nullopt, Fixup::Lo, target});
}

std::uint32_t Program::address_of(const std::string& name) const {
    auto it = labels_.find(name);
    if (it == labels_.end())
        throw EncodingError(fmt::format("unresolved label '{}'", name));
    return it->second;
}

std::vector<std::uint32_t> Program::words() const {
    std::vector<std::uint32_t> out;
    out.reserve(items_.size());
    std::uint32_t pc = origin_;
    for (const auto& item : items_) {
        if (item.raw) {
            out.push_back(*item.raw);
            pc += 4;
            continue;
        }
        Instruction in = item.insn;
        if (item.fixup != Fixup::None) {
            const std::uint32_t target = address_of(item.target);
            switch (item.fixup) {
            case Fixup::Branch:
            case Fixup::Jal: in.imm = std::int32_t(target - pc); break;
            case Fixup::Hi: in.imm = std::int32_t(((target + 0x800) >> 12) << 12); break;
            case Fixup::Lo: in.imm = std::int32_t(target << 20) >> 20; break;
            case Fixup::None: break;
            }
        }
        out.push_back(encode(in));
        pc += 4;
    }
    return out;
}

std::vector<std::uint8_t> Program::assemble() const {
    std::vector<std::uint8_t> bytes;
    for (auto w : words())
        for (int i = 0; i < 4; ++i)
            bytes.push_back(std::uint8_t(w >> (8 * i)));
    return bytes;
}

// ---------------------------------------------------------------------------

void demo_operands(const DemoConfig& cfg, std::vector<std::uint32_t>& a, std::vector<std::uint32_t>& b) {
    Lcg rng(cfg.seed);
    a.resize(std::size_t(cfg.m) * cfg.k);
    b.resize(std::size_t(cfg.k) * cfg.n);
    for (auto& v : a)
        v = rng.next();
    for (auto& v : b)
        v = rng.next();
}

namespace {

// Stores `values` at consecutive words from `base`, re-basing the pointer
// register whenever the offset would leave the 12-bit store range.
void emit_store_block(Program& p, std::uint32_t base, const std::vector<std::uint32_t>& values) {
    using namespace isa::reg;
    std::int32_t offset = 0;
    p.li(t0, base);
    for (auto v : values) {
        if (offset > 2044) {
            p.emit(ins::i(Op::ADDI, t0, t0, offset));
            offset = 0;
        }
        p.li(t1, v);
        p.emit(ins::store(Op::SW, t1, offset, t0));
        offset += 4;
    }
}

} // namespace

DemoFirmware demo_firmware(const DemoConfig& cfg) {
    using namespace isa::reg;
    using isa::csr::mie_meie;
    using isa::csr::mstatus_mie;

    DemoFirmware out;
    demo_operands(cfg, out.a, out.b);
    out.a_addr = kDemoDataBase;
    out.b_addr = out.a_addr + 4 * cfg.m * cfg.k;
    out.c_addr = out.b_addr + 4 * cfg.k * cfg.n;
    out.flag_addr = kDemoFlag;

    Program p(0);
    p.label("_start");
    p.la(t0, "trap_handler");
    p.emit(ins::csr(Op::CSRRW, zero, isa::csr::mtvec, t0));

    p.label("init_data");
    emit_store_block(p, out.a_addr, out.a);
    emit_store_block(p, out.b_addr, out.b);
    p.li(t0, out.flag_addr);
    p.emit(ins::store(Op::SW, zero, 0, t0));

    p.label("program_acc");
    p.li(s0, map::accelerator);
    auto set_reg = [&](std::int32_t offset, std::uint32_t value) {
        p.li(t1, value);
        p.emit(ins::store(Op::SW, t1, offset, s0));
    };
    set_reg(0x08, out.a_addr);
    set_reg(0x0C, out.b_addr);
    set_reg(0x10, out.c_addr);
    set_reg(0x14, cfg.m);
    set_reg(0x18, cfg.n);
    set_reg(0x1C, cfg.k);

    if (cfg.completion == Completion::Interrupt) {
        p.li(t1, mie_meie);
        p.emit(ins::csr(Op::CSRRS, zero, isa::csr::mie, t1));
        p.li(t1, mstatus_mie);
        p.emit(ins::csr(Op::CSRRS, zero, isa::csr::mstatus, t1));
        set_reg(0x00, 0x3); // START | IRQ_EN
        p.li(t0, out.flag_addr);
        p.label("wait");
        p.emit(ins::load(Op::LW, t2, 0, t0));
        p.branch(Op::BEQ, t2, zero, "wait");
    } else {
        set_reg(0x00, 0x1); // START
        p.label("wait");
        p.emit(ins::load(Op::LW, t2, 0x04, s0));
        p.emit(ins::i(Op::ANDI, t2, t2, 0x2));
        p.branch(Op::BEQ, t2, zero, "wait");
        set_reg(0x04, 0x2); // clear DONE
    }

    p.label("acc_done");
    p.li(t0, out.c_addr);
    p.li(t1, cfg.m * cfg.n);
    p.li(a0, 0);
    p.label("sum_loop");
    p.emit(ins::load(Op::LW, t2, 0, t0));
    p.emit(ins::r(Op::ADD, a0, a0, t2));
    p.emit(ins::i(Op::ADDI, t0, t0, 4));
    p.emit(ins::i(Op::ADDI, t1, t1, -1));
    p.branch(Op::BNE, t1, zero, "sum_loop");

    p.label("print");
    p.li(s1, map::uart);
    auto put = [&](char c) {
        p.li(t1, std::uint8_t(c));
        p.emit(ins::store(Op::SW, t1, 0, s1));
    };
    put('C');
    put('=');
    p.li(t3, 28);
    p.label("hex_loop");
    p.emit(ins::r(Op::SRL, t2, a0, t3));
    p.emit(ins::i(Op::ANDI, t2, t2, 0xf));
    p.emit(ins::i(Op::SLTI, t4, t2, 10));
    p.emit(ins::i(Op::ADDI, t2, t2, '0'));
    p.branch(Op::BNE, t4, zero, "hex_emit");
    p.emit(ins::i(Op::ADDI, t2, t2, 'a' - '0' - 10));
    p.label("hex_emit");
    p.emit(ins::store(Op::SW, t2, 0, s1));
    p.emit(ins::i(Op::ADDI, t3, t3, -4));
    p.branch(Op::BGE, t3, zero, "hex_loop");
    put('\n');

    p.label("exit");
    p.li(t1, map::simctrl);
    p.emit(ins::store(Op::SW, zero, 0, t1));
    p.label("hang");
    p.jal(zero, "hang");

    // Only the accelerator interrupt is expected; acknowledge it and flag.
    p.label("trap_handler");
    p.li(t5, map::accelerator);
    p.li(t6, 0x2);
    p.emit(ins::store(Op::SW, t6, 0x04, t5));
    p.li(t5, out.flag_addr);
    p.li(t6, 1);
    p.emit(ins::store(Op::SW, t6, 0, t5));
    p.emit(ins::system(Op::MRET));

    out.image = p.assemble();
    out.labels = p.labels();
    if (p.here() > kDemoFlag)
        throw EncodingError("demo code overlaps its data area");
    return out;
}

} // namespace vp::fw
