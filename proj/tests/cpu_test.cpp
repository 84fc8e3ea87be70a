#include <doctest.h>

#include "iss_vectors.hpp"
#include "vp/cpu.hpp"
#include "vp/firmware.hpp"
#include "vp/peripherals.hpp"

using namespace vp;
using namespace vp::fw;
using isa::Op;
namespace reg = isa::reg;

namespace {

struct Rig {
    Memory ram{0, 0x10000};
    Bus bus;
    Cpu cpu;

    explicit Rig(std::uint64_t access_cycles = 0) : bus(access_cycles) { bus.map(0, ram.size(), ram); }

    void load(const Program& p) {
        const auto img = p.assemble();
        ram.load_image(img, p.origin());
        cpu.reset(p.origin());
    }
    void poke(std::uint32_t addr, std::uint32_t v) {
        const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
        ram.backdoor_write(addr, b);
    }
    std::uint32_t peek(std::uint32_t addr) {
        std::uint8_t b[4];
        ram.backdoor_read(addr, b);
        return b[0] | b[1] << 8 | b[2] << 16 | std::uint32_t(b[3]) << 24;
    }
};

} // namespace

TEST_CASE("single-instruction programs match the reference simulator") {
    int checked = 0;
    for (const auto& v : oracle::kIssVectors) {
        CAPTURE(v.name);
        Rig rig;
        rig.poke(oracle::kCodeAddr, v.word);
        rig.poke(oracle::kDataAddr, v.data_in);
        rig.cpu.reset(oracle::kCodeAddr);
        for (auto [r, value] : v.init)
            rig.cpu.set_reg(r, value);
        const auto result = rig.cpu.step(rig.bus);
        CHECK(result.kind == StepResult::Kind::Retired);
        for (unsigned r = 0; r < 32; ++r) {
            CAPTURE(r);
            CHECK(rig.cpu.reg(r) == v.regs[r]);
        }
        CHECK(rig.cpu.state().pc == v.pc);
        CHECK(rig.peek(oracle::kDataAddr) == v.data_out);
        ++checked;
    }
    CHECK(checked >= 40);
}

TEST_CASE("cycle model: one base cycle plus bus latency per access") {
    SUBCASE("ALU instruction with no latency: 1 cycle, 10 ns at 100 MHz") {
        Rig rig(0);
        Program p;
        p.emit(ins::i(Op::ADDI, reg::t0, reg::zero, 1));
        rig.load(p);
        auto r = rig.cpu.step(rig.bus);
        CHECK(r.cycles == 1);
        CHECK(cycles_to_time(rig.cpu.state().cycle, 100'000'000).ps == 10'000);
    }
    SUBCASE("load with one wait cycle on fetch and on data: 3 cycles, 30 ns") {
        Rig rig(1);
        Program p;
        p.emit(ins::load(Op::LW, reg::t0, 0x100, reg::zero));
        rig.load(p);
        auto r = rig.cpu.step(rig.bus);
        CHECK(r.cycles == 3);
        CHECK(cycles_to_time(rig.cpu.state().cycle, 100'000'000).ps == 30'000);
    }
    SUBCASE("store with two wait cycles: 5 cycles") {
        Rig rig(2);
        Program p;
        p.emit(ins::store(Op::SW, reg::t0, 0x100, reg::zero));
        rig.load(p);
        CHECK(rig.cpu.step(rig.bus).cycles == 5);
        CHECK(rig.cpu.state().instret == 1);
    }
}

TEST_CASE("synchronous traps") {
    auto trap_of = [](const Program& p, std::uint32_t mtvec = 0x800) {
        Rig rig;
        rig.load(p);
        rig.cpu.state().mtvec = mtvec;
        StepResult last{};
        for (int i = 0; i < 8 && last.kind != StepResult::Kind::TrapTaken; ++i)
            last = rig.cpu.step(rig.bus);
        return std::pair{last, rig.cpu.state()};
    };

    SUBCASE("illegal instruction") {
        Program p;
        p.word(0);
        auto [r, s] = trap_of(p);
        CHECK(r.kind == StepResult::Kind::TrapTaken);
        CHECK(s.mcause == cause::illegal_instruction);
        CHECK(s.mepc == 0);
        CHECK(s.pc == 0x800);
        CHECK(s.instret == 0);
    }
    SUBCASE("ecall and ebreak") {
        Program p;
        p.emit(ins::nop());
        p.emit(ins::system(Op::ECALL));
        auto [r, s] = trap_of(p);
        CHECK(s.mcause == cause::ecall_m);
        CHECK(s.mepc == 4);
        Program q;
        q.emit(ins::system(Op::EBREAK));
        CHECK(trap_of(q).second.mcause == cause::breakpoint);
    }
    SUBCASE("misaligned load and store") {
        Program p;
        p.emit(ins::load(Op::LW, reg::t0, 2, reg::zero));
        CHECK(trap_of(p).second.mcause == cause::misaligned_load);
        Program q;
        q.emit(ins::store(Op::SH, reg::t0, 1, reg::zero));
        CHECK(trap_of(q).second.mcause == cause::misaligned_store);
    }
    SUBCASE("access faults") {
        Program p;
        p.li(reg::t0, 0x4000'0000);
        p.emit(ins::load(Op::LW, reg::t1, 0, reg::t0));
        auto [r, s] = trap_of(p);
        CHECK(s.mcause == cause::load_fault);
        CHECK(s.mepc == 4);
        Program q;
        q.li(reg::t0, 0x4000'0000);
        q.emit(ins::store(Op::SW, reg::t1, 0, reg::t0));
        CHECK(trap_of(q).second.mcause == cause::store_fault);
    }
    SUBCASE("jump to an unmapped or misaligned target") {
        Program p;
        p.li(reg::t0, 0x4000'0000);
        p.emit(ins::jalr(reg::zero, reg::t0, 0));
        Rig rig;
        rig.load(p);
        rig.cpu.state().mtvec = 0x800;
        rig.cpu.step(rig.bus);
        rig.cpu.step(rig.bus);
        rig.cpu.step(rig.bus); // jalr retires, this fetch faults
        CHECK(rig.cpu.state().mcause == cause::fetch_fault);
        CHECK(rig.cpu.state().mepc == 0x4000'0000);

        Program q;
        q.emit(ins::jal(reg::zero, 6));
        CHECK(trap_of(q).second.mcause == cause::misaligned_fetch);
    }
}

TEST_CASE("external interrupt: gated by MIE and MEIE, MRET returns") {
    Program p;
    p.la(reg::t0, "handler");
    p.emit(ins::csr(Op::CSRRW, reg::zero, isa::csr::mtvec, reg::t0));
    p.li(reg::t0, isa::csr::mie_meie);
    p.emit(ins::csr(Op::CSRRS, reg::zero, isa::csr::mie, reg::t0));
    p.emit(ins::csr(Op::CSRRS, reg::zero, isa::csr::mstatus, reg::t0)); // wrong mask: MIE stays clear
    p.li(reg::t0, isa::csr::mstatus_mie);
    p.label("enable");
    p.emit(ins::csr(Op::CSRRS, reg::zero, isa::csr::mstatus, reg::t0));
    p.label("spin");
    p.emit(ins::i(Op::ADDI, reg::a0, reg::a0, 1));
    p.jal(reg::zero, "spin");
    p.label("handler");
    p.emit(ins::i(Op::ADDI, reg::a1, reg::a1, 1));
    p.emit(ins::system(Op::MRET));

    Rig rig;
    std::vector<std::uint32_t> seen;
    rig.cpu.on_trap([&](std::uint32_t c) { seen.push_back(c); });
    rig.load(p);
    rig.cpu.set_irq(true);
    while (rig.cpu.state().pc != p.address_of("enable"))
        REQUIRE(rig.cpu.step(rig.bus).kind == StepResult::Kind::Retired);
    CHECK(seen.empty());

    rig.cpu.step(rig.bus); // sets MIE
    const auto r = rig.cpu.step(rig.bus);
    CHECK(r.kind == StepResult::Kind::TrapTaken);
    CHECK(r.cycles == 1);
    CHECK(rig.cpu.state().mcause == cause::machine_external);
    CHECK(rig.cpu.state().mepc == p.address_of("spin"));
    CHECK_FALSE((rig.cpu.state().mstatus & isa::csr::mstatus_mie) != 0);
    CHECK((rig.cpu.state().mstatus & isa::csr::mstatus_mpie) != 0);

    rig.cpu.set_irq(false);
    rig.cpu.step(rig.bus); // handler addi
    rig.cpu.step(rig.bus); // mret
    CHECK(rig.cpu.state().pc == p.address_of("spin"));
    CHECK((rig.cpu.state().mstatus & isa::csr::mstatus_mie) != 0);
    CHECK(rig.cpu.reg(reg::a1) == 1);
    CHECK(seen == std::vector<std::uint32_t>{cause::machine_external});
}

TEST_CASE("CSR semantics") {
    Program p;
    p.li(reg::t0, 0xFFFFFFFF);
    p.emit(ins::csr(Op::CSRRW, reg::t1, isa::csr::mstatus, reg::t0));
    p.emit(ins::csr(Op::CSRRS, reg::t2, isa::csr::mstatus, reg::zero)); // read only
    p.emit(ins::csr(Op::CSRRW, reg::zero, isa::csr::mtvec, reg::t0));
    p.emit(ins::csr(Op::CSRRC, reg::zero, isa::csr::mstatus, reg::t0));
    Rig rig;
    rig.load(p);
    for (int i = 0; i < 5; ++i)
        rig.cpu.step(rig.bus);
    CHECK(rig.cpu.reg(reg::t1) == 0);
    CHECK(rig.cpu.reg(reg::t2) == (isa::csr::mstatus_mie | isa::csr::mstatus_mpie));
    CHECK(rig.cpu.state().mtvec == 0xFFFFFFFC);
    CHECK(rig.cpu.state().mstatus == 0);
}

TEST_CASE("breakpoints stop before execution and can be stepped over") {
    Program p;
    p.emit(ins::nop());
    p.emit(ins::i(Op::ADDI, reg::t0, reg::t0, 1));
    p.emit(ins::i(Op::ADDI, reg::t0, reg::t0, 1));
    Rig rig;
    rig.load(p);
    rig.cpu.add_breakpoint(4);
    CHECK(rig.cpu.step(rig.bus).kind == StepResult::Kind::Retired);
    auto r = rig.cpu.step(rig.bus);
    CHECK(r.kind == StepResult::Kind::Breakpoint);
    CHECK(r.cycles == 0);
    CHECK(rig.cpu.state().pc == 4);
    CHECK(rig.cpu.step(rig.bus).kind == StepResult::Kind::Breakpoint);
    rig.cpu.skip_breakpoint_once();
    CHECK(rig.cpu.step(rig.bus).kind == StepResult::Kind::Retired);
    CHECK(rig.cpu.reg(reg::t0) == 1);
    rig.cpu.remove_breakpoint(4);
    CHECK_FALSE(rig.cpu.has_breakpoint(4));
}

TEST_CASE("debug access bypasses timing and crosses chunk boundaries") {
    Rig rig(5);
    rig.cpu.reset(0);
    std::vector<std::uint8_t> bytes = {1, 2, 3, 4, 5, 6, 7};
    CHECK(rig.cpu.debug_write_memory(rig.bus, 0x101, bytes));
    std::vector<std::uint8_t> back(7);
    CHECK(rig.cpu.debug_read_memory(rig.bus, 0x101, back));
    CHECK(back == bytes);
    CHECK(rig.cpu.state().cycle == 0);
    std::vector<std::uint8_t> out(4);
    CHECK_FALSE(rig.cpu.debug_read_memory(rig.bus, 0xFFFE, out));

    auto regs = rig.cpu.debug_read_registers();
    CHECK(regs[32] == 0);
    CHECK(rig.cpu.debug_write_register(32, 0x40));
    CHECK(rig.cpu.state().pc == 0x40);
    CHECK(rig.cpu.debug_write_register(0, 5));
    CHECK(rig.cpu.reg(0) == 0);
    CHECK_FALSE(rig.cpu.debug_write_register(33, 1));
}

TEST_CASE("a core that was never reset does not execute") {
    Memory ram(0, 16);
    Bus bus;
    bus.map(0, 16, ram);
    Cpu cpu;
    CHECK(cpu.step(bus).kind == StepResult::Kind::Stopped);
}
