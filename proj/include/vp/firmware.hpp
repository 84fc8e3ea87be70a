#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vp/isa.hpp"

namespace vp::fw {

class EncodingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Canonical 32-bit encoding. Throws EncodingError naming the offending
/// field when an operand does not fit.
std::uint32_t encode(const isa::Instruction& insn);

// Instruction constructors, assembler argument order.
namespace ins {
using isa::Instruction;
using isa::Op;
Instruction r(Op op, std::uint8_t rd, std::uint8_t rs1, std::uint8_t rs2);
Instruction i(Op op, std::uint8_t rd, std::uint8_t rs1, std::int32_t imm);
Instruction load(Op op, std::uint8_t rd, std::int32_t offset, std::uint8_t base);
Instruction store(Op op, std::uint8_t rs2, std::int32_t offset, std::uint8_t base);
Instruction branch(Op op, std::uint8_t rs1, std::uint8_t rs2, std::int32_t offset);
Instruction lui(std::uint8_t rd, std::uint32_t upper20);
Instruction auipc(std::uint8_t rd, std::uint32_t upper20);
Instruction jal(std::uint8_t rd, std::int32_t offset);
Instruction jalr(std::uint8_t rd, std::uint8_t rs1, std::int32_t offset);
Instruction csr(Op op, std::uint8_t rd, std::uint16_t number, std::uint8_t rs1);
Instruction system(Op op); // ECALL, EBREAK, WFI, MRET
Instruction fence();
Instruction nop();
} // namespace ins

/// Straight-line program with label-resolved branches and jumps.
class Program {
public:
    explicit Program(std::uint32_t origin = 0) : origin_(origin) {}

    std::uint32_t origin() const { return origin_; }
    std::uint32_t here() const { return origin_ + 4 * std::uint32_t(items_.size()); }

    void label(const std::string& name);
    void emit(const isa::Instruction& insn);
    void word(std::uint32_t raw);

    /// Branch (BEQ..BGEU) to a label.
    void branch(isa::Op op, std::uint8_t rs1, std::uint8_t rs2, const std::string& target);
    void jal(std::uint8_t rd, const std::string& target);
    /// Loads a 32-bit constant; one or two instructions.
    void li(std::uint8_t rd, std::uint32_t value);
    /// Loads a label's absolute address; always two instructions.
    void la(std::uint8_t rd, const std::string& target);

    std::uint32_t address_of(const std::string& name) const;
    const std::map<std::string, std::uint32_t>& labels() const { return labels_; }

    /// Resolves labels and returns the little-endian image.
    std::vector<std::uint8_t> assemble() const;
    /// Resolved instruction stream (raw words decoded where possible).
    std::vector<std::uint32_t> words() const;

private:
    enum class Fixup { None, Branch, Jal, Hi, Lo };
    struct Item {
        isa::Instruction insn;
        std::optional<std::uint32_t> raw;
        Fixup fixup = Fixup::None;
        std::string target;
    };

    std::uint32_t origin_;
    std::vector<Item> items_;
    std::map<std::string, std::uint32_t> labels_;
};

/// Matrix data generator shared by demo firmware and host-side checks:
/// state' = state * 1664525 + 1013904223 (mod 2^32), output = state'.
class Lcg {
public:
    static constexpr std::uint32_t kMultiplier = 1664525u;
    static constexpr std::uint32_t kIncrement = 1013904223u;

    explicit Lcg(std::uint32_t seed) : state_(seed) {}
    std::uint32_t next() {
        state_ = state_ * kMultiplier + kIncrement;
        return state_;
    }

private:
    std::uint32_t state_;
};

// Memory map shared with the platform.
namespace map {
inline constexpr std::uint32_t ram = 0x0000'0000;
inline constexpr std::uint32_t uart = 0x1000'0000;
inline constexpr std::uint32_t accelerator = 0x1001'0000;
inline constexpr std::uint32_t simctrl = 0x1003'0000;
} // namespace map

enum class Completion { Interrupt, Polling };

struct DemoConfig {
    std::uint32_t m = 4, n = 4, k = 4;
    std::uint32_t seed = 1;
    Completion completion = Completion::Interrupt;
};

struct DemoFirmware {
    std::vector<std::uint8_t> image;
    std::map<std::string, std::uint32_t> labels; // includes "acc_done"
    std::uint32_t a_addr = 0, b_addr = 0, c_addr = 0, flag_addr = 0;
    std::vector<std::uint32_t> a, b; // generated operands, row-major
};

inline constexpr std::uint32_t kDemoDataBase = 0x0001'0000;
inline constexpr std::uint32_t kDemoFlag = 0x0000'F000;

/// Firmware that stores seeded matrices, runs them through the accelerator,
/// prints "C=<8 hex digits>\n" (additive checksum of C) and exits with 0.
DemoFirmware demo_firmware(const DemoConfig& cfg);

/// Operands exactly as demo_firmware generates them.
void demo_operands(const DemoConfig& cfg, std::vector<std::uint32_t>& a, std::vector<std::uint32_t>& b);

} // namespace vp::fw
