#include <doctest.h>

#include <random>

#include "demo_reference.hpp"
#include "iss_vectors.hpp"
#include "support/random_insn.hpp"
#include "vp/firmware.hpp"

using namespace vp;
using namespace vp::fw;
using isa::Op;
namespace reg = isa::reg;

TEST_CASE("canonical encodings") {
    CHECK(encode(ins::i(Op::ADDI, 1, 0, 5)) == oracle::kEncodings[0].word);
    CHECK(encode(ins::lui(5, 0x10000)) == oracle::kEncodings[1].word);
    CHECK(encode(ins::nop()) == oracle::kEncodings[2].word);
}

TEST_CASE("out-of-range operands name the offending field") {
    CHECK_THROWS_WITH_AS(encode(ins::jal(reg::ra, 3)), doctest::Contains("multiple of 2"), EncodingError);
    CHECK_THROWS_WITH_AS(encode(ins::i(Op::ADDI, 1, 0, 2048)), doctest::Contains("immediate 2048"), EncodingError);
    CHECK_THROWS_AS(encode(ins::i(Op::ADDI, 1, 0, -2049)), EncodingError);
    CHECK_THROWS_AS(encode(ins::branch(Op::BEQ, 0, 0, 4096)), EncodingError);
    CHECK_THROWS_AS(encode(ins::jal(0, 1 << 20)), EncodingError);
    CHECK_THROWS_AS(encode(ins::i(Op::SLLI, 1, 1, 32)), EncodingError);
    CHECK_THROWS_WITH_AS(encode(ins::r(Op::ADD, 32, 0, 0)), doctest::Contains("register field"), EncodingError);
    CHECK_THROWS_AS(ins::lui(1, 0x100000), EncodingError);
    CHECK_THROWS_AS(encode(ins::csr(Op::CSRRW, 0, 0x1000, 0)), EncodingError);
}

TEST_CASE("assemble: NOP bytes and label-resolved offsets") {
    Program nop;
    nop.emit(ins::nop());
    CHECK(nop.assemble() == std::vector<std::uint8_t>{0x13, 0x00, 0x00, 0x00});

    Program p(0x100);
    p.label("top");
    p.emit(ins::nop());
    p.emit(ins::nop());
    p.branch(Op::BNE, reg::t0, reg::zero, "top");
    p.jal(reg::zero, "end");
    p.emit(ins::nop());
    p.label("end");
    const auto words = p.words();
    CHECK(isa::decode(words[2])->imm == -8);
    CHECK(isa::decode(words[3])->imm == 8);
    CHECK(p.address_of("end") == 0x114);

    Program bad;
    bad.jal(reg::zero, "nowhere");
    CHECK_THROWS_WITH_AS(bad.assemble(), doctest::Contains("nowhere"), EncodingError);
    Program dup;
    dup.label("x");
    CHECK_THROWS_AS(dup.label("x"), EncodingError);
}

TEST_CASE("li and la pick short forms only when they fit") {
    for (std::uint32_t v : {0u, 5u, 2047u, 0xFFFFF800u, 0x800u, 0x12345678u, 0xFFFFFFFFu, 0x80000000u, 0x7FFFF800u}) {
        Program p;
        p.li(reg::a0, v);
        const auto words = p.words();
        std::uint32_t x = 0;
        for (auto w : words) {
            const auto in = *isa::decode(w);
            if (in.op == Op::LUI)
                x = std::uint32_t(in.imm);
            else
                x = (in.rs1 == 0 ? 0 : x) + std::uint32_t(in.imm);
        }
        CAPTURE(v);
        CHECK(x == v);
        const bool short_form = (std::int32_t(v) >= -2048 && std::int32_t(v) < 2048) || (v & 0xFFF) == 0;
        CHECK(words.size() == (short_form ? 1u : 2u));
    }
}

TEST_CASE("decode(assemble(p)[i]) equals p[i] for random streams") {
    std::mt19937 rng(7);
    for (int round = 0; round < 20; ++round) {
        Program p;
        std::vector<isa::Instruction> emitted;
        for (int i = 0; i < 200; ++i) {
            emitted.push_back(testing::random_instruction(rng));
            p.emit(emitted.back());
        }
        const auto bytes = p.assemble();
        REQUIRE(bytes.size() == emitted.size() * 4);
        for (std::size_t i = 0; i < emitted.size(); ++i) {
            const std::uint32_t w = bytes[4 * i] | bytes[4 * i + 1] << 8 | bytes[4 * i + 2] << 16
                                    | std::uint32_t(bytes[4 * i + 3]) << 24;
            REQUIRE(*isa::decode(w) == emitted[i]);
        }
    }
}

TEST_CASE("lcg matches its documented recurrence") {
    Lcg g(1);
    CHECK(g.next() == 1u * 1664525u + 1013904223u);
    std::uint32_t s = 1u * 1664525u + 1013904223u;
    CHECK(g.next() == s * 1664525u + 1013904223u);
}

TEST_CASE("demo operands follow the host oracle's generator") {
    for (const auto& ref : oracle::kDemoReferences) {
        std::vector<std::uint32_t> a, b;
        demo_operands({ref.m, ref.n, ref.k, ref.seed}, a, b);
        std::vector<std::uint32_t> c(std::size_t(ref.m) * ref.n, 0);
        for (std::uint32_t i = 0; i < ref.m; ++i)
            for (std::uint32_t j = 0; j < ref.n; ++j)
                for (std::uint32_t p = 0; p < ref.k; ++p)
                    c[i * ref.n + j] += a[i * ref.k + p] * b[p * ref.n + j];
        CHECK(c == ref.c);
    }
}

TEST_CASE("demo firmware is a pure function of its arguments") {
    const DemoConfig cfg{2, 3, 4, 99};
    const auto x = demo_firmware(cfg);
    const auto y = demo_firmware(cfg);
    CHECK(x.image == y.image);
    CHECK(x.labels == y.labels);
    CHECK(x.labels.contains("acc_done"));
    CHECK(x.c_addr == x.b_addr + 4 * 3 * 4);
    CHECK(x.image != demo_firmware({2, 3, 4, 100}).image);
    auto polled = demo_firmware({2, 3, 4, 99, Completion::Polling});
    CHECK(polled.image != x.image);
    CHECK_THROWS_AS(demo_firmware({64, 64, 64, 1}), EncodingError);
    // Every emitted word is a valid instruction.
    for (std::size_t i = 0; i + 4 <= x.image.size(); i += 4) {
        const std::uint32_t w = x.image[i] | x.image[i + 1] << 8 | x.image[i + 2] << 16
                                | std::uint32_t(x.image[i + 3]) << 24;
        CHECK(isa::decode(w).has_value());
    }
}
