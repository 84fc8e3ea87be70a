#pragma once

#include <cstdint>
#include <optional>
#include <string>

// 32-bit base integer RISC-V, machine mode only.

namespace vp::isa {

enum class Op : std::uint8_t {
    LUI, AUIPC, JAL, JALR,
    BEQ, BNE, BLT, BGE, BLTU, BGEU,
    LB, LH, LW, LBU, LHU,
    SB, SH, SW,
    ADDI, SLTI, SLTIU, XORI, ORI, ANDI, SLLI, SRLI, SRAI,
    ADD, SUB, SLL, SLT, SLTU, XOR, SRL, SRA, OR, AND,
    FENCE, ECALL, EBREAK, WFI, MRET,
    CSRRW, CSRRS, CSRRC,
};

inline constexpr int kOpCount = int(Op::CSRRC) + 1;

const char* mnemonic(Op op);

enum class Format : std::uint8_t { R, I, S, B, U, J, Shift, Csr, System, Fence };
Format format_of(Op op);

namespace csr {
inline constexpr std::uint16_t mstatus = 0x300;
inline constexpr std::uint16_t mie = 0x304;
inline constexpr std::uint16_t mtvec = 0x305;
inline constexpr std::uint16_t mepc = 0x341;
inline constexpr std::uint16_t mcause = 0x342;

inline constexpr std::uint32_t mstatus_mie = 1u << 3;
inline constexpr std::uint32_t mstatus_mpie = 1u << 7;
inline constexpr std::uint32_t mie_meie = 1u << 11;

bool implemented(std::uint16_t number);
} // namespace csr

/// A decoded instruction. Fields not used by the format are zero.
struct Instruction {
    Op op = Op::ADDI;
    std::uint8_t rd = 0;
    std::uint8_t rs1 = 0;
    std::uint8_t rs2 = 0;
    std::int32_t imm = 0; // sign-extended immediate, shift amount, or U-type value (already << 12)
    std::uint16_t csr = 0;

    bool operator==(const Instruction&) const = default;
};

std::optional<Instruction> decode(std::uint32_t word);

std::string disassemble(const Instruction& insn);

// ABI register numbers used by the firmware generators.
namespace reg {
inline constexpr std::uint8_t zero = 0, ra = 1, sp = 2, gp = 3, tp = 4;
inline constexpr std::uint8_t t0 = 5, t1 = 6, t2 = 7, s0 = 8, s1 = 9;
inline constexpr std::uint8_t a0 = 10, a1 = 11, a2 = 12, a3 = 13, a4 = 14, a5 = 15, a6 = 16, a7 = 17;
inline constexpr std::uint8_t s2 = 18, s3 = 19, s4 = 20, s5 = 21, s6 = 22, s7 = 23;
inline constexpr std::uint8_t s8 = 24, s9 = 25, s10 = 26, s11 = 27;
inline constexpr std::uint8_t t3 = 28, t4 = 29, t5 = 30, t6 = 31;
} // namespace reg

} // namespace vp::isa
