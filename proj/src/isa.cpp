#include "vp/isa.hpp"

#include <fmt/format.h>

namespace vp::isa {

namespace {

constexpr const char* kMnemonics[kOpCount] = {
    "lui", "auipc", "jal", "jalr",
    "beq", "bne", "blt", "bge", "bltu", "bgeu",
    "lb", "lh", "lw", "lbu", "lhu",
    "sb", "sh", "sw",
    "addi", "slti", "sltiu", "xori", "ori", "andi", "slli", "srli", "srai",
    "add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and",
    "fence", "ecall", "ebreak", "wfi", "mret",
    "csrrw", "csrrs", "csrrc",
};

constexpr std::int32_t imm_i(std::uint32_t w) { return std::int32_t(w) >> 20; }

constexpr std::int32_t imm_s(std::uint32_t w) {
    return ((std::int32_t(w) >> 25) << 5) | std::int32_t((w >> 7) & 0x1f);
}

constexpr std::int32_t imm_b(std::uint32_t w) {
    std::int32_t v = ((std::int32_t(w) >> 31) << 12)   // [12]
                     | std::int32_t(((w >> 7) & 1) << 11) // [11]
                     | std::int32_t(((w >> 25) & 0x3f) << 5)
                     | std::int32_t(((w >> 8) & 0xf) << 1);
    return v;
}

constexpr std::int32_t imm_j(std::uint32_t w) {
    return ((std::int32_t(w) >> 31) << 20)
           | std::int32_t(w & 0x000ff000)
           | std::int32_t(((w >> 20) & 1) << 11)
           | std::int32_t(((w >> 21) & 0x3ff) << 1);
}

} // namespace

const char* mnemonic(Op op) {
    return kMnemonics[int(op)];
}

Format format_of(Op op) {
    switch (op) {
    case Op::LUI: case Op::AUIPC: return Format::U;
    case Op::JAL: return Format::J;
    case Op::BEQ: case Op::BNE: case Op::BLT: case Op::BGE: case Op::BLTU: case Op::BGEU:
        return Format::B;
    case Op::SB: case Op::SH: case Op::SW: return Format::S;
    case Op::SLLI: case Op::SRLI: case Op::SRAI: return Format::Shift;
    case Op::ADD: case Op::SUB: case Op::SLL: case Op::SLT: case Op::SLTU:
    case Op::XOR: case Op::SRL: case Op::SRA: case Op::OR: case Op::AND:
        return Format::R;
    case Op::FENCE: return Format::Fence;
    case Op::ECALL: case Op::EBREAK: case Op::WFI: case Op::MRET: return Format::System;
    case Op::CSRRW: case Op::CSRRS: case Op::CSRRC: return Format::Csr;
    default: return Format::I; // JALR, loads, ALU immediates
    }
}

bool csr::implemented(std::uint16_t number) {
    switch (number) {
    case mstatus: case mie: case mtvec: case mepc: case mcause: return true;
    default: return false;
    }
}

std::optional<Instruction> decode(std::uint32_t w) {
    const std::uint32_t opcode = w & 0x7f;
    const std::uint8_t rd = (w >> 7) & 0x1f;
    const std::uint32_t funct3 = (w >> 12) & 0x7;
    const std::uint8_t rs1 = (w >> 15) & 0x1f;
    const std::uint8_t rs2 = (w >> 20) & 0x1f;
    const std::uint32_t funct7 = w >> 25;

    Instruction in;
    switch (opcode) {
    case 0x37: // LUI
    case 0x17: // AUIPC
        in.op = opcode == 0x37 ? Op::LUI : Op::AUIPC;
        in.rd = rd;
        in.imm = std::int32_t(w & 0xfffff000);
        return in;
    case 0x6f:
        in.op = Op::JAL;
        in.rd = rd;
        in.imm = imm_j(w);
        return in;
    case 0x67:
        if (funct3 != 0)
            return std::nullopt;
        in.op = Op::JALR;
        in.rd = rd;
        in.rs1 = rs1;
        in.imm = imm_i(w);
        return in;
    case 0x63: {
        static constexpr std::optional<Op> kBranch[8] = {Op::BEQ, Op::BNE, std::nullopt, std::nullopt,
                                                         Op::BLT, Op::BGE, Op::BLTU, Op::BGEU};
        if (!kBranch[funct3])
            return std::nullopt;
        in.op = *kBranch[funct3];
        in.rs1 = rs1;
        in.rs2 = rs2;
        in.imm = imm_b(w);
        return in;
    }
    case 0x03: {
        static constexpr std::optional<Op> kLoad[8] = {Op::LB, Op::LH, Op::LW, std::nullopt,
                                                       Op::LBU, Op::LHU, std::nullopt, std::nullopt};
        if (!kLoad[funct3])
            return std::nullopt;
        in.op = *kLoad[funct3];
        in.rd = rd;
        in.rs1 = rs1;
        in.imm = imm_i(w);
        return in;
    }
    case 0x23: {
        if (funct3 > 2)
            return std::nullopt;
        static constexpr Op kStore[3] = {Op::SB, Op::SH, Op::SW};
        in.op = kStore[funct3];
        in.rs1 = rs1;
        in.rs2 = rs2;
        in.imm = imm_s(w);
        return in;
    }
    case 0x13: {
        in.rd = rd;
        in.rs1 = rs1;
        switch (funct3) {
        case 0: in.op = Op::ADDI; break;
        case 2: in.op = Op::SLTI; break;
        case 3: in.op = Op::SLTIU; break;
        case 4: in.op = Op::XORI; break;
        case 6: in.op = Op::ORI; break;
        case 7: in.op = Op::ANDI; break;
        case 1:
            if (funct7 != 0)
                return std::nullopt;
            in.op = Op::SLLI;
            in.imm = rs2;
            return in;
        case 5:
            if (funct7 == 0x00)
                in.op = Op::SRLI;
            else if (funct7 == 0x20)
                in.op = Op::SRAI;
            else
                return std::nullopt;
            in.imm = rs2;
            return in;
        }
        in.imm = imm_i(w);
        return in;
    }
    case 0x33: {
        static constexpr Op kBase[8] = {Op::ADD, Op::SLL, Op::SLT, Op::SLTU,
                                        Op::XOR, Op::SRL, Op::OR, Op::AND};
        in.rd = rd;
        in.rs1 = rs1;
        in.rs2 = rs2;
        if (funct7 == 0x00) {
            in.op = kBase[funct3];
        } else if (funct7 == 0x20 && funct3 == 0) {
            in.op = Op::SUB;
        } else if (funct7 == 0x20 && funct3 == 5) {
            in.op = Op::SRA;
        } else {
            return std::nullopt;
        }
        return in;
    }
    case 0x0f:
        if (funct3 != 0 || rd != 0 || rs1 != 0)
            return std::nullopt;
        in.op = Op::FENCE;
        in.imm = std::int32_t(w >> 20); // fm/pred/succ, kept for re-encoding
        return in;
    case 0x73:
        switch (funct3) {
        case 0:
            switch (w) {
            case 0x00000073: in.op = Op::ECALL; return in;
            case 0x00100073: in.op = Op::EBREAK; return in;
            case 0x10500073: in.op = Op::WFI; return in;
            case 0x30200073: in.op = Op::MRET; return in;
            default: return std::nullopt;
            }
        case 1: case 2: case 3: {
            const auto number = std::uint16_t(w >> 20);
            if (!csr::implemented(number))
                return std::nullopt;
            static constexpr Op kCsr[4] = {Op::CSRRW, Op::CSRRW, Op::CSRRS, Op::CSRRC};
            in.op = kCsr[funct3];
            in.rd = rd;
            in.rs1 = rs1;
            in.csr = number;
            return in;
        }
        default:
            return std::nullopt;
        }
    default:
        return std::nullopt;
    }
}

std::string disassemble(const Instruction& in) {
    const char* m = mnemonic(in.op);
    switch (format_of(in.op)) {
    case Format::R: return fmt::format("{} x{}, x{}, x{}", m, in.rd, in.rs1, in.rs2);
    case Format::Shift:
    case Format::I:
        switch (in.op) {
        case Op::LB: case Op::LH: case Op::LW: case Op::LBU: case Op::LHU: case Op::JALR:
            return fmt::format("{} x{}, {}(x{})", m, in.rd, in.imm, in.rs1);
        default:
            return fmt::format("{} x{}, x{}, {}", m, in.rd, in.rs1, in.imm);
        }
    case Format::S: return fmt::format("{} x{}, {}(x{})", m, in.rs2, in.imm, in.rs1);
    case Format::B: return fmt::format("{} x{}, x{}, {}", m, in.rs1, in.rs2, in.imm);
    case Format::U: return fmt::format("{} x{}, {:#x}", m, in.rd, std::uint32_t(in.imm) >> 12);
    case Format::J: return fmt::format("{} x{}, {}", m, in.rd, in.imm);
    case Format::Csr: return fmt::format("{} x{}, {:#x}, x{}", m, in.rd, in.csr, in.rs1);
    case Format::Fence:
    case Format::System: return m;
    }
    return m;
}

} // namespace vp::isa
