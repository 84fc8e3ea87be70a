// vp: command-line front end for the virtual platform.
//
//   vp run    single headless simulation, exit status = firmware exit code
//   vp serve  session manager REST service
//   vp props  property catalog
//   vp demo   write the accelerator demo firmware image

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vp/config.hpp"
#include "vp/firmware.hpp"
#include "vp/platform.hpp"
#include "vp/runtime.hpp"

namespace fs = std::filesystem;

namespace {

// Exit statuses for runs that end without a firmware exit code.
constexpr int kExitConfig = 2;
constexpr int kExitLimit = 124;
constexpr int kExitKilled = 125;

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunArgs {
    std::string config_file;
    std::vector<std::string> sets;
    std::string image;
    int gdb_port = -1;
    bool trace = false;
    std::string out = "vp-out";
    bool quiet = false;
};

int cmd_run(const RunArgs& args) {
    auto props = vp::make_property_catalog();
    try {
        if (!args.config_file.empty()) {
            try {
                props.apply(vp::config::parse_file(slurp(args.config_file)), vp::config::Source::File);
            } catch (const vp::config::ConfigError& e) {
                throw vp::config::ConfigError(fmt::format("{}: {}", args.config_file, e.what()));
            }
        }
        for (const auto& kv : args.sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw vp::config::ConfigError(fmt::format("--set '{}': expected name=value", kv));
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            props.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), vp::config::Source::Api);
        }
        if (!args.image.empty())
            props.set("sw.image", args.image, vp::config::Source::Api);
        if (args.gdb_port >= 0)
            props.set("gdb.port", std::to_string(args.gdb_port), vp::config::Source::Api);
        if (args.trace)
            props.set("trace.enable", "true", vp::config::Source::Api);
    } catch (const vp::config::ConfigError& e) {
        fmt::print(stderr, "vp: {}\n", e.what());
        return kExitConfig;
    }

    fs::create_directories(args.out);
    std::unique_ptr<vp::Platform> platform;
    try {
        platform = vp::Platform::build(props, vp::PlatformOptions{args.out});
    } catch (const std::exception& e) {
        fmt::print(stderr, "vp: {}\n", e.what());
        return kExitConfig;
    }
    if (auto port = platform->gdb_port())
        fmt::print(stderr, "vp: gdb server on port {}\n", *port);
    if (auto port = platform->console_port())
        fmt::print(stderr, "vp: console on port {}\n", *port);

    const auto report = platform->run();
    if (!args.quiet) {
        std::cout << platform->uart().capture() << std::flush;
        fmt::print(stderr, "vp: {} after {} instructions, {} ps simulated, artifacts in {}\n",
                   vp::to_string(report.outcome), report.counters.instructions, report.sim_time.ps, args.out);
    }
    switch (report.outcome) {
    case vp::Outcome::Finished: return *report.exit_code;
    case vp::Outcome::LimitReached: return kExitLimit;
    case vp::Outcome::Killed: return kExitKilled;
    }
    return kExitKilled;
}

struct ServeArgs {
    std::string host = "0.0.0.0";
    int port = 8080;
    std::size_t max_sessions = 16;
    std::string workdir = "vp-sessions";
    std::string port_range = "40000-40999";
};

int cmd_serve(const ServeArgs& args) {
    vp::runtime::ManagerOptions options;
    options.workdir = args.workdir;
    options.max_running = args.max_sessions;
    unsigned first = 0, last = 0;
    char dash = 0;
    std::istringstream range(args.port_range);
    if (!(range >> first >> dash >> last) || dash != '-' || first == 0 || last > 65535 || first > last) {
        fmt::print(stderr, "vp: --port-range '{}': expected FIRST-LAST\n", args.port_range);
        return kExitConfig;
    }
    options.port_first = std::uint16_t(first);
    options.port_last = std::uint16_t(last);

    // Signals are taken synchronously by one thread so shutdown runs normal code.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    vp::runtime::SessionManager manager(options);
    vp::runtime::RestServer server(manager);
    const auto port = server.bind(args.host, std::uint16_t(args.port));
    fmt::print("listening on {}:{}\n", args.host, port);
    std::fflush(stdout);

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.listen();
    // listen() can also return on a bind/accept failure; wake the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

int cmd_props(bool as_json) {
    const auto catalog = vp::make_property_catalog();
    if (as_json) {
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (const auto& s : catalog.specs())
            out.push_back({{"name", s.name},
                           {"type", vp::config::to_string(s.type)},
                           {"default", vp::config::format_value(s.default_value)},
                           {"file_parameter", s.file_parameter},
                           {"description", s.description}});
        fmt::print("{}\n", out.dump(2));
        return 0;
    }
    for (const auto& s : catalog.specs())
        fmt::print("{:<22} {:<8} {:<12} {}\n", s.name, vp::config::to_string(s.type),
                   vp::config::format_value(s.default_value), s.description);
    return 0;
}

struct DemoArgs {
    std::uint32_t m = 4, n = 4, k = 4, seed = 1;
    bool poll = false;
    std::string out = "demo.bin";
};

int cmd_demo(const DemoArgs& args) {
    vp::fw::DemoConfig cfg{args.m, args.n, args.k, args.seed,
                           args.poll ? vp::fw::Completion::Polling : vp::fw::Completion::Interrupt};
    const auto fw = vp::fw::demo_firmware(cfg);
    std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(fw.image.data()), std::streamsize(fw.image.size()));
    if (!out) {
        fmt::print(stderr, "vp: cannot write '{}'\n", args.out);
        return 1;
    }
    nlohmann::ordered_json info;
    info["image"] = args.out;
    info["bytes"] = fw.image.size();
    info["a_addr"] = fw.a_addr;
    info["b_addr"] = fw.b_addr;
    info["c_addr"] = fw.c_addr;
    info["labels"] = fw.labels;
    fmt::print("{}\n", info.dump(2));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Virtual platform: RV32I core, bus, UART and matrix accelerator"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "run one simulation headless");
    run_cmd->add_option("--config", run.config_file, "property file (name = value lines)")->check(CLI::ExistingFile);
    run_cmd->add_option("--set", run.sets, "override a property, name=value (repeatable)");
    run_cmd->add_option("--image", run.image, "firmware image, same as --set sw.image=FILE");
    run_cmd->add_option("--gdb-port", run.gdb_port, "enable the GDB server on this port")->check(CLI::Range(0, 65535));
    run_cmd->add_flag("--trace", run.trace, "write trace.vcd");
    run_cmd->add_option("--out", run.out, "artifact directory")->capture_default_str();
    run_cmd->add_flag("-q,--quiet", run.quiet, "do not echo the console or the summary");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "run the session manager REST service");
    serve_cmd->add_option("--host", serve.host, "listen address")->capture_default_str();
    serve_cmd->add_option("--port", serve.port, "listen port, 0 picks one")->check(CLI::Range(0, 65535))->capture_default_str();
    serve_cmd->add_option("--max-sessions", serve.max_sessions, "concurrently running sessions")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve_cmd->add_option("--workdir", serve.workdir, "session directories live here")->capture_default_str();
    serve_cmd->add_option("--port-range", serve.port_range, "GDB/console ports handed to sessions")
        ->capture_default_str();

    bool props_json = false;
    auto* props_cmd = app.add_subcommand("props", "print the property catalog");
    props_cmd->add_flag("--json", props_json, "machine-readable output");

    DemoArgs demo;
    auto* demo_cmd = app.add_subcommand("demo", "write the accelerator demo firmware");
    demo_cmd->add_option("--m", demo.m)->check(CLI::Range(1u, 64u))->capture_default_str();
    demo_cmd->add_option("--n", demo.n)->check(CLI::Range(1u, 64u))->capture_default_str();
    demo_cmd->add_option("--k", demo.k)->check(CLI::Range(1u, 64u))->capture_default_str();
    demo_cmd->add_option("--seed", demo.seed)->capture_default_str();
    demo_cmd->add_flag("--poll", demo.poll, "poll STATUS instead of waiting for the interrupt");
    demo_cmd->add_option("--out", demo.out, "image path")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::warn);

    try {
        if (*run_cmd)
            return cmd_run(run);
        if (*serve_cmd)
            return cmd_serve(serve);
        if (*props_cmd)
            return cmd_props(props_json);
        if (*demo_cmd)
            return cmd_demo(demo);
    } catch (const std::exception& e) {
        fmt::print(stderr, "vp: {}\n", e.what());
        return 1;
    }
    return 0;
}
