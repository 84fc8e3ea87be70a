// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Tolerances are the constants below.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <chrono>
#include <csignal>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "demo_reference.hpp"
#include "iss_vectors.hpp"
#include "support/random_insn.hpp"
#include "support/rsp_client.hpp"
#include "support/temp_dir.hpp"
#include "vp/firmware.hpp"
#include "vp/platform.hpp"
#include "vp/runtime.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kMaxDemoWallSeconds = 5.0;
constexpr double kMinRealTimeFactor = 0.5;
constexpr std::uint64_t kBusyLoopInstructions = 10'000'000;
constexpr std::int64_t kRtfClockHz = 20'000'000;
constexpr int kConcurrentSessions = 8;
constexpr int kMinIssVectors = 40;
constexpr int kRoundTripCount = 10'000;
constexpr int kApiCalls = 1000;
constexpr std::uint64_t kBusyCycles222 = 24;
constexpr std::uint64_t kBusyCycles444 = 80;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok)
        throw Failure(what);
}

// ---- subprocesses ----------------------------------------------------------

class Child {
public:
    Child(std::vector<std::string> args, const fs::path& output) {
        args.insert(args.begin(), VP_BINARY);
        std::vector<char*> argv;
        for (auto& a : args)
            argv.push_back(a.data());
        argv.push_back(nullptr);
        posix_spawn_file_actions_t fa;
        posix_spawn_file_actions_init(&fa);
        posix_spawn_file_actions_addopen(&fa, 1, output.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        posix_spawn_file_actions_adddup2(&fa, 1, 2);
        const int rc = posix_spawn(&pid_, argv[0], &fa, nullptr, argv.data(), environ);
        posix_spawn_file_actions_destroy(&fa);
        if (rc != 0)
            throw std::runtime_error(fmt::format("cannot spawn {}: {}", argv[0], std::strerror(rc)));
    }
    ~Child() {
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
    }

    int wait() {
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
        return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    }

private:
    pid_t pid_ = -1;
};

struct Ran {
    int exit_code;
    double seconds;
    std::string output;
};

Ran vp(std::vector<std::string> args, const fs::path& log) {
    const auto t0 = std::chrono::steady_clock::now();
    Child c(std::move(args), log);
    const int code = c.wait();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    return {code, dt.count(), testing::read_text(log)};
}

int run_python(const std::string& script, const fs::path& arg, const fs::path& out) {
    const auto cmd = fmt::format("'{}' '{}' '{}' > '{}' 2>&1", PYTHON_EXE, script, arg.string(), out.string());
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---- helpers ---------------------------------------------------------------

const oracle::DemoReference& reference(std::uint32_t m, std::uint32_t n, std::uint32_t k, std::uint32_t seed) {
    for (const auto& r : oracle::kDemoReferences)
        if (r.m == m && r.n == n && r.k == k && r.seed == seed)
            return r;
    throw std::logic_error("no such reference");
}

std::string expected_console(const oracle::DemoReference& r) { return fmt::format("C={:08x}\n", r.checksum); }

/// Writes a demo image with the CLI and returns its description.
json make_demo(const testing::TempDir& dir, int m, int n, int k, int seed) {
    const auto image = dir / fmt::format("demo_{}{}{}_{}.bin", m, n, k, seed);
    const auto r = vp({"demo", "--m", std::to_string(m), "--n", std::to_string(n), "--k", std::to_string(k), "--seed",
                       std::to_string(seed), "--out", image.string()},
                      dir / "demo.out");
    require(r.exit_code == 0, "vp demo failed: " + r.output);
    return json::parse(r.output);
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    const auto s = testing::read_text(p);
    return {s.begin(), s.end()};
}

std::string stable_stats(const fs::path& stats_file) {
    return vp::deterministic_stats(ordered_json::parse(testing::read_text(stats_file))).dump();
}

std::uint16_t free_port() {
    vp::net::Listener l(0, "127.0.0.1");
    return l.port();
}

// ---- criteria --------------------------------------------------------------

std::string criterion1() {
    testing::TempDir dir("acc1");
    const auto& ref = reference(4, 4, 4, 1);
    const auto demo = make_demo(dir, 4, 4, 4, 1);
    const auto out = dir / "run";
    const auto r = vp({"run", "--image", demo["image"], "--out", out.string(), "-q"}, dir / "run.out");
    require(r.exit_code == 0, fmt::format("exit code {}", r.exit_code));
    require(r.seconds < kMaxDemoWallSeconds, fmt::format("took {:.2f} s", r.seconds));
    require(testing::read_text(out / "console.log") == expected_console(ref), "checksum differs from oracle");

    // The DST region is read back from the same image run in-process.
    auto platform = vp::Platform::build(vp::make_property_catalog(),
                                        vp::PlatformOptions{dir.path(), dir.path(), read_bytes(demo["image"])});
    const auto report = platform->run();
    require(report.exit_code == 0, "in-process run failed");
    std::vector<std::uint32_t> dst(ref.c.size());
    platform->memory().backdoor_read(demo["c_addr"].get<std::uint32_t>(),
                                     {reinterpret_cast<std::uint8_t*>(dst.data()), dst.size() * 4});
    require(dst == ref.c, "DST region differs from oracle");
    return fmt::format("exit 0, C={:08x}, DST {} words match, {:.3f} s wall", ref.checksum, dst.size(), r.seconds);
}

std::string criterion2() {
    testing::TempDir dir("acc2");
    const auto demo = make_demo(dir, 3, 5, 2, 42);
    auto once = [&](const std::string& name) {
        const auto out = dir / name;
        const auto r = vp({"run", "--image", demo["image"], "--trace", "--out", out.string(), "-q"}, dir / "x.out");
        require(r.exit_code == 0, "run failed");
        return out;
    };
    const auto a = once("a");
    const auto b = once("b");
    for (auto name : {"console.log", "trace.vcd", "config.resolved"})
        require(testing::read_text(a / name) == testing::read_text(b / name), std::string(name) + " differs");
    require(stable_stats(a / "stats.json") == stable_stats(b / "stats.json"), "stats.json differs");
    return "console.log, trace.vcd, config.resolved and stats.json identical";
}

std::map<std::string, std::string> session_artifacts(vp::runtime::SessionManager& m, const std::string& id) {
    std::map<std::string, std::string> out;
    for (const auto& name : m.list_artifacts(id)) {
        auto body = m.fetch_artifact(id, name);
        if (name == "stats.json")
            body = vp::deterministic_stats(ordered_json::parse(body)).dump();
        out[name] = std::move(body);
    }
    return out;
}

/// A countdown loop long enough for sessions to overlap, then a console line.
std::vector<std::uint8_t> slow_image(std::uint32_t iterations) {
    using namespace vp::fw;
    using vp::isa::Op;
    namespace reg = vp::isa::reg;
    Program p;
    p.li(reg::t0, iterations);
    p.label("loop");
    p.emit(ins::i(Op::ADDI, reg::t0, reg::t0, -1));
    p.branch(Op::BNE, reg::t0, reg::zero, "loop");
    p.li(reg::t1, map::uart);
    for (char c : std::string("done\n")) {
        p.li(reg::t2, std::uint8_t(c));
        p.emit(ins::store(Op::SW, reg::t2, 0, reg::t1));
    }
    p.li(reg::t1, map::simctrl);
    p.emit(ins::store(Op::SW, reg::zero, 0, reg::t1));
    p.label("hang");
    p.jal(reg::zero, "hang");
    return p.assemble();
}

std::string criterion3() {
    testing::TempDir dir("acc3");
    const json config = {{"trace.enable", true}};
    vp::runtime::SessionManager m({dir.path()});

    auto replicate = [&](const std::vector<std::uint8_t>& image, bool must_overlap) {
        const std::string bytes(image.begin(), image.end());
        auto launch = [&] {
            const auto id = m.create(config);
            m.upload(id, "sw.image", bytes);
            m.start(id);
            return id;
        };
        const auto solo = launch();
        require(m.wait(solo, 60s), "solo run timed out");
        require(m.status(solo)["state"] == "finished", "solo run did not finish");
        const auto expected = session_artifacts(m, solo);

        std::vector<std::string> ids;
        for (int i = 0; i < kConcurrentSessions; ++i)
            ids.push_back(launch());
        const auto overlapping = m.running();
        if (must_overlap)
            require(overlapping > 1, "sessions did not overlap");
        for (const auto& id : ids) {
            require(m.wait(id, 60s), "session timed out");
            require(m.status(id)["state"] == "finished", "session did not finish");
            require(session_artifacts(m, id) == expected, "artifacts of " + id + " differ from the solo run");
        }
        return overlapping;
    };

    replicate(vp::fw::demo_firmware({4, 4, 4, 1}).image, false);
    const auto overlapping = replicate(slow_image(2'000'000), true);
    return fmt::format("{} concurrent sessions match the solo run for the demo and a 4M-instruction loop "
                       "({} running at once)",
                       kConcurrentSessions, overlapping);
}

std::string criterion4() {
    using namespace vp;
    int vectors = 0;
    for (const auto& v : oracle::kIssVectors) {
        Memory ram(0, 0x10000);
        Bus bus(0);
        bus.map(0, ram.size(), ram);
        Cpu cpu;
        auto poke = [&](std::uint32_t addr, std::uint32_t w) {
            const std::uint8_t b[4] = {std::uint8_t(w), std::uint8_t(w >> 8), std::uint8_t(w >> 16),
                                       std::uint8_t(w >> 24)};
            ram.backdoor_write(addr, b);
        };
        poke(oracle::kCodeAddr, v.word);
        poke(oracle::kDataAddr, v.data_in);
        cpu.reset(oracle::kCodeAddr);
        for (auto [r, value] : v.init)
            cpu.set_reg(r, value);
        cpu.step(bus);
        for (unsigned r = 0; r < 32; ++r)
            require(cpu.reg(r) == v.regs[r], fmt::format("{}: x{} differs", v.name, r));
        require(cpu.state().pc == v.pc, fmt::format("{}: pc differs", v.name));
        std::uint8_t d[4];
        ram.backdoor_read(oracle::kDataAddr, d);
        require((d[0] | d[1] << 8 | d[2] << 16 | std::uint32_t(d[3]) << 24) == v.data_out,
                fmt::format("{}: memory differs", v.name));
        ++vectors;
    }
    require(vectors >= kMinIssVectors, fmt::format("only {} vectors", vectors));

    std::mt19937 rng(2024);
    for (int i = 0; i < kRoundTripCount; ++i) {
        const auto insn = testing::random_instruction(rng);
        const auto back = isa::decode(fw::encode(insn));
        require(back && *back == insn, "round trip failed for " + isa::disassemble(insn));
    }
    return fmt::format("{} reference vectors match, {} random round trips", vectors, kRoundTripCount);
}

std::string criterion5() {
    testing::TempDir dir("acc5");
    const auto& ref = reference(4, 4, 4, 1);
    const auto demo = make_demo(dir, 4, 4, 4, 1);
    const auto port = free_port();
    const auto out = dir / "run";
    Child child({"run", "--image", demo["image"], "--gdb-port", std::to_string(port), "--set", "gdb.wait=true",
                 "--out", out.string(), "-q"},
                dir / "run.out");

    testing::RspClient client("127.0.0.1", port);
    const auto bp = demo["labels"]["acc_done"].get<std::uint32_t>();
    require(client.command(fmt::format("Z0,{:x},4", bp)) == "OK", "breakpoint not accepted");
    client.send("c");
    const auto stop = client.receive();
    require(stop == "S05", "stop reply was " + stop);
    require(client.command("p20") == vp::gdb::hex_u32_le(bp), "stopped at the wrong pc");
    const auto c_addr = demo["c_addr"].get<std::uint32_t>();
    const auto mem = client.command(fmt::format("m{:x},{:x}", c_addr, ref.c.size() * 4));
    require(mem == testing::hex_words_le(ref.c), "DST read over RSP differs from oracle");
    require(client.command("D") == "OK", "detach refused");
    const int code = child.wait();
    require(code == 0, fmt::format("run exited {}", code));
    require(testing::read_text(out / "console.log") == expected_console(ref), "console differs after detach");
    return fmt::format("S05 at acc_done={:#x}, DST matches over RSP, exit 0 after detach", bp);
}

std::pair<std::uint64_t, std::uint64_t> busy_window(const fs::path& vcd) {
    std::uint64_t now = 0, rise = 0, fall = 0;
    std::ifstream in(vcd);
    std::string id;
    for (std::string line; std::getline(in, line);) {
        if (line.find(" busy $end") != std::string::npos)
            id = line.substr(line.find("wire 1 ") + 7, 1);
        else if (line.starts_with("#"))
            now = std::stoull(line.substr(1));
        else if (!id.empty() && line == "1" + id)
            rise = now;
        else if (!id.empty() && line == "0" + id && rise != 0)
            fall = now;
    }
    return {rise, fall};
}

std::string criterion6() {
    testing::TempDir dir("acc6");
    std::vector<std::uint64_t> cycles;
    for (int size : {2, 4}) {
        const auto demo = make_demo(dir, size, size, size, 1);
        const auto out = dir / fmt::format("run{}", size);
        const auto r = vp({"run", "--image", demo["image"], "--trace", "--set", "acc.base_cycles=16", "--set",
                           "acc.cycles_per_mac=1", "--out", out.string(), "-q"},
                          dir / "run.out");
        require(r.exit_code == 0, "run failed");
        const auto [rise, fall] = busy_window(out / "trace.vcd");
        require(fall > rise, "no BUSY interval in trace");
        const auto period_ps = 1'000'000'000'000ull / 100'000'000ull;
        require((fall - rise) % period_ps == 0, "BUSY interval is not a whole number of cycles");
        cycles.push_back((fall - rise) / period_ps);
    }
    require(cycles[0] == kBusyCycles222, fmt::format("(2,2,2) busy {} cycles", cycles[0]));
    require(cycles[1] == kBusyCycles444, fmt::format("(4,4,4) busy {} cycles", cycles[1]));
    // Two points of base + M*N*K*cpm: slope (80-24)/(64-8) = 1, intercept 16.
    require((cycles[1] - cycles[0]) == (64 - 8) && cycles[0] - 8 == 16, "timing is not affine");
    return fmt::format("BUSY (2,2,2) = {} cycles, (4,4,4) = {} cycles", cycles[0], cycles[1]);
}

std::string criterion7() {
    testing::TempDir dir("acc7");
    using namespace vp::fw;
    namespace reg = vp::isa::reg;
    // Two instructions per iteration plus the setup and exit sequence.
    Program p;
    p.li(reg::t0, std::uint32_t(kBusyLoopInstructions / 2));
    p.label("loop");
    p.emit(ins::i(vp::isa::Op::ADDI, reg::t0, reg::t0, -1));
    p.branch(vp::isa::Op::BNE, reg::t0, reg::zero, "loop");
    p.li(reg::t1, map::simctrl);
    p.emit(ins::store(vp::isa::Op::SW, reg::zero, 0, reg::t1));
    p.label("hang");
    p.jal(reg::zero, "hang");
    const auto bytes = p.assemble();
    const auto image = dir / "loop.bin";
    std::ofstream(image, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());

    const auto out = dir / "run";
    const auto r = vp({"run", "--image", image.string(), "--set",
                       fmt::format("system.cpu.clock_hz={}", kRtfClockHz), "--out", out.string(), "-q"},
                      dir / "run.out");
    require(r.exit_code == 0, "run failed");
    const auto stats = json::parse(testing::read_text(out / "stats.json"));
    require(stats.contains("real_time_factor"), "stats.json has no real_time_factor");
    const auto insns = stats["instructions"].get<std::uint64_t>();
    require(insns >= kBusyLoopInstructions, fmt::format("only {} instructions", insns));
    const double rtf = stats["real_time_factor"];
    const double mips = insns / (stats["wall_time_ms"].get<double>() * 1e3);
    require(rtf >= kMinRealTimeFactor, fmt::format("real_time_factor {:.3f}", rtf));
    return fmt::format("real_time_factor {:.3f} at {} MHz ({:.1f} M instructions/s)", rtf, kRtfClockHz / 1'000'000,
                       mips);
}

std::string criterion8() {
    testing::TempDir dir("acc8");
    const auto demo = make_demo(dir, 4, 4, 4, 1);
    const auto out = dir / "run";
    const auto r = vp({"run", "--image", demo["image"], "--trace", "--out", out.string(), "-q"}, dir / "run.out");
    require(r.exit_code == 0, "run failed");
    const auto report = dir / "vcd.json";
    const int rc = run_python(VCD_CHECK_SCRIPT, out / "trace.vcd", report);
    require(rc == 0, "reader rejected trace.vcd: " + testing::read_text(report));
    const auto summary = json::parse(testing::read_text(report));
    return fmt::format("pyvcd read {} signals, {} changes, last #{}", summary["signals"].get<int>(),
                       summary["changes"].get<int>(), summary["last_time"].get<std::uint64_t>());
}

std::string criterion9() {
    testing::TempDir dir("acc9");
    vp::runtime::SessionManager manager({dir.path(), 4, 64, 42000, 42099});
    vp::runtime::RestServer server(manager);
    const auto port = server.bind("127.0.0.1", 0);
    std::thread thread([&] { server.listen(); });
    struct Stop {
        vp::runtime::RestServer& s;
        std::thread& t;
        ~Stop() {
            s.stop();
            t.join();
        }
    } stop{server, thread};

    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);
    const auto image = vp::fw::demo_firmware({1, 1, 1, 7}).image;
    const std::string good_image(image.begin(), image.end());

    const std::map<std::string, std::set<std::string>> allowed = {
        {"created", {"created", "configured", "running", "finished", "failed"}},
        {"configured", {"configured", "running", "finished", "failed"}},
        {"running", {"running", "finished", "failed"}},
        {"finished", {"finished"}},
        {"failed", {"failed"}},
    };
    std::map<std::string, std::string> last_state;
    std::vector<std::string> ids = {"0000000000000000"};
    std::mt19937 rng(99);
    auto pick = [&](auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
    auto chance = [&](int pct) { return std::uniform_int_distribution<int>(0, 99)(rng) < pct; };

    const std::vector<std::string> configs = {
        R"({"config":{}})",
        R"({"config":{"trace.enable":true}})",
        R"({"config":{"limit.sim_time_ps":1000000}})",
        R"({"config":{"mem.size":"1Ki","sw.load_addr":8192}})",
        R"({"config":{"acc.base_cycles":"lots"}})",
        R"({"config":{"no.such.prop":1}})",
        R"({"config":{"sw.image":"/etc/passwd"}})",
        R"({"config":[1,2]})",
        R"({"cfg":{}})",
        R"({"config":{"trace.enable":null}})",
        "not json at all",
        "",
    };
    const std::vector<std::string> params = {"sw.image", "mem.size", "bogus", "..", "sw.image%00"};
    const std::vector<std::string> names = {"console.log", "stats.json", "trace.vcd", "error.txt", "..", "nope"};

    int counts[6] = {};
    for (int call = 0; call < kApiCalls; ++call) {
        const std::string id = chance(90) ? pick(ids) : fmt::format("{:016x}", rng());
        const auto base = "/sessions/" + id;
        httplib::Result res;
        switch (std::uniform_int_distribution<int>(0, 9)(rng)) {
        case 0:
            res = client.Post("/sessions", pick(configs), "application/json");
            if (res && res->status == 201)
                ids.push_back(json::parse(res->body)["id"]);
            break;
        case 1:
            res = client.Put(base + "/files/" + (chance(70) ? "sw.image" : pick(params)),
                             chance(80) ? good_image : std::string("\x01\x02"), "application/octet-stream");
            break;
        case 2: res = client.Post(base + "/start", "", "application/json"); break;
        case 3: res = client.Get(base); break;
        case 4: res = client.Get("/sessions"); break;
        case 5: res = client.Get(base + "/artifacts"); break;
        case 6: res = client.Get(base + "/artifacts/" + pick(names)); break;
        case 7: res = client.Delete(base); break;
        case 8: res = client.Patch(base, "{}", "application/json"); break;
        default: res = client.Get(chance(50) ? "/" : "/sessions/" + id + "/nope"); break;
        }
        require(bool(res), fmt::format("call {}: no response", call));
        require(res->status < 500, fmt::format("call {}: status {} body {}", call, res->status, res->body));
        ++counts[res->status / 100];
        if (res->status >= 400) {
            json body;
            try {
                body = json::parse(res->body);
            } catch (const std::exception&) {
                throw Failure(fmt::format("call {}: unstructured {} body '{}'", call, res->status, res->body));
            }
            require(body.is_object() && body.contains("error") && body["error"].is_string(),
                    fmt::format("call {}: {} body lacks an error code", call, res->status));
        }

        // Observe every known session after each call.
        for (const auto& sid : ids) {
            auto st = client.Get("/sessions/" + sid);
            require(bool(st) && st->status < 500, "status poll failed");
            if (st->status == 404) {
                last_state.erase(sid);
                continue;
            }
            const auto state = json::parse(st->body)["state"].get<std::string>();
            require(allowed.contains(state), "unknown state " + state);
            if (auto it = last_state.find(sid); it != last_state.end())
                require(allowed.at(it->second).contains(state),
                        fmt::format("illegal transition {} -> {} for {}", it->second, state, sid));
            last_state[sid] = state;
        }
    }
    return fmt::format("{} calls: {} 2xx, {} 4xx, 0 5xx; all errors structured, all transitions legal", kApiCalls,
                       counts[2], counts[4]);
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
        {"end-to-end demo", criterion1},       {"determinism", criterion2},
        {"concurrent replication", criterion3}, {"ISS conformance", criterion4},
        {"GDB path", criterion5},              {"accelerator timing", criterion6},
        {"throughput floor", criterion7},      {"VCD validity", criterion8},
        {"API state machine", criterion9},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [name, check] = criteria[i];
        std::string line;
        try {
            line = fmt::format("criterion {} ({}): PASS - {}", i + 1, name, check());
        } catch (const std::exception& e) {
            line = fmt::format("criterion {} ({}): FAIL - {}", i + 1, name, e.what());
            ++failed;
        }
        std::puts(line.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
