#include "vp/runtime.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace vp::runtime {

const char* to_string(SessionState s) {
    switch (s) {
    case SessionState::Created: return "created";
    case SessionState::Configured: return "configured";
    case SessionState::Running: return "running";
    case SessionState::Finished: return "finished";
    case SessionState::Failed: return "failed";
    }
    return "?";
}

namespace {

constexpr const char* kImageParam = "sw.image";
constexpr const char* kFilesDir = "files";
constexpr const char* kArtifactsDir = "artifacts";

ApiError not_found(const std::string& detail) { return {404, "not_found", detail}; }
ApiError conflict(const std::string& detail) { return {409, "conflict", detail}; }
ApiError bad_request(const std::string& code, const std::string& detail) { return {400, code, detail}; }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::string raw_value(const std::string& name, const json& v) {
    if (v.is_boolean())
        return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer())
        return v.dump();
    if (v.is_string())
        return v.get<std::string>();
    throw bad_request("invalid_value", fmt::format("property '{}' needs a string, integer or boolean", name));
}

void write_file(const fs::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out)
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

} // namespace

struct SessionManager::Session {
    std::string id;
    fs::path dir;
    SessionState state = SessionState::Created;
    std::vector<config::Override> overrides;
    bool has_image = false;
    std::optional<std::uint16_t> gdb_port;
    std::optional<std::uint16_t> uart_port;

    std::shared_ptr<Platform> platform;
    std::thread worker;
    std::chrono::steady_clock::time_point started;

    std::optional<Outcome> outcome;
    std::optional<std::uint8_t> exit_code;
    std::uint64_t sim_time_ps = 0;
    std::uint64_t wall_time_ns = 0;
    std::string error;

    fs::path artifacts_dir() const { return dir / kArtifactsDir; }
};

SessionManager::SessionManager(ManagerOptions options)
    : options_(std::move(options)), catalog_(make_property_catalog()), salt_(std::random_device{}()) {
    if (options_.port_first > options_.port_last)
        throw std::invalid_argument("empty port range");
    fs::create_directories(options_.workdir / "sessions");
}

SessionManager::~SessionManager() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mutex_);
        for (auto& [_, s] : sessions_) {
            if (s->platform)
                s->platform->abort();
            all.push_back(s);
        }
    }
    for (auto& s : all)
        if (s->worker.joinable())
            s->worker.join();
}

std::string SessionManager::next_id() {
    return fmt::format("{:016x}", splitmix64(++counter_ ^ (salt_ << 20)));
}

std::size_t SessionManager::running_locked() const {
    return std::size_t(std::count_if(sessions_.begin(), sessions_.end(),
                                     [](auto& kv) { return kv.second->state == SessionState::Running; }));
}

std::size_t SessionManager::running() const {
    std::lock_guard lock(mutex_);
    return running_locked();
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end())
        throw not_found(fmt::format("no session '{}'", id));
    return it->second;
}

std::string SessionManager::create(const json& cfg) {
    if (!cfg.is_object())
        throw bad_request("invalid_config", "config must be a JSON object");

    std::vector<config::Override> overrides;
    auto probe = catalog_;
    for (auto& [name, value] : cfg.items()) {
        if (probe.defined(name) && probe.spec(name).file_parameter)
            throw bad_request("file_parameter",
                              fmt::format("'{}' is a file parameter; upload it via /files/{}", name, name));
        auto raw = raw_value(name, value);
        try {
            probe.set(name, raw, config::Source::Api);
        } catch (const config::UnknownPropertyError& e) {
            throw bad_request("unknown_property", e.what());
        } catch (const config::ConfigError& e) {
            throw bad_request("invalid_value", e.what());
        }
        overrides.push_back({name, raw, 0});
    }

    std::lock_guard lock(mutex_);
    if (running_locked() >= options_.max_running)
        throw ApiError(429, "capacity", fmt::format("{} sessions running; retry later", options_.max_running));
    if (sessions_.size() >= options_.max_sessions)
        throw ApiError(429, "capacity",
                       fmt::format("registry holds {} sessions; delete some and retry", options_.max_sessions));

    auto s = std::make_shared<Session>();
    s->id = next_id();
    s->dir = options_.workdir / "sessions" / s->id;
    s->overrides = std::move(overrides);
    fs::create_directories(s->dir / kFilesDir);
    fs::create_directories(s->artifacts_dir());
    sessions_.emplace(s->id, s);
    return s->id;
}

void SessionManager::upload(const std::string& id, const std::string& param, std::string bytes) {
    std::lock_guard lock(mutex_);
    auto s = find(id);
    if (!catalog_.defined(param))
        throw bad_request("unknown_property", config::UnknownPropertyError(param, catalog_.suggestions(param)).what());
    if (!catalog_.spec(param).file_parameter)
        throw bad_request("not_a_file_parameter", fmt::format("'{}' does not take a file", param));
    if (s->state != SessionState::Created && s->state != SessionState::Configured)
        throw conflict(fmt::format("session is {}; uploads need created or configured", to_string(s->state)));
    write_file(s->dir / kFilesDir / param, bytes);
    s->has_image = true;
    s->state = SessionState::Configured;
}

std::uint16_t SessionManager::allocate_port() {
    for (std::uint32_t p = options_.port_first; p <= options_.port_last; ++p) {
        if (!ports_in_use_.contains(std::uint16_t(p))) {
            ports_in_use_.insert(std::uint16_t(p));
            return std::uint16_t(p);
        }
    }
    throw ApiError(429, "capacity", "no free port in the configured range; retry later");
}

void SessionManager::release_ports(Session& s) {
    if (s.gdb_port)
        ports_in_use_.erase(*s.gdb_port);
    if (s.uart_port)
        ports_in_use_.erase(*s.uart_port);
}

void SessionManager::start(const std::string& id) {
    std::shared_ptr<Session> s;
    config::PropertySet props = catalog_;
    {
        std::lock_guard lock(mutex_);
        s = find(id);
        if (s->state != SessionState::Created && s->state != SessionState::Configured)
            throw conflict(fmt::format("session is {}; start needs created or configured", to_string(s->state)));
        if (running_locked() >= options_.max_running)
            throw ApiError(429, "capacity", fmt::format("{} sessions running; retry later", options_.max_running));

        props.apply(s->overrides, config::Source::Api);
        if (s->has_image)
            props.set_value(kImageParam, (fs::path(kFilesDir) / kImageParam).generic_string(), config::Source::Api);
        // A nonzero port asks for the service; the actual number comes from the range.
        if (props.get_int("gdb.port") != 0) {
            s->gdb_port = allocate_port();
            props.set_value("gdb.port", std::int64_t(*s->gdb_port), config::Source::Api);
        }
        if (props.get_int("uart.port") != 0) {
            try {
                s->uart_port = allocate_port();
            } catch (...) {
                release_ports(*s);
                s->gdb_port.reset();
                throw;
            }
            props.set_value("uart.port", std::int64_t(*s->uart_port), config::Source::Api);
        }
        s->state = SessionState::Running;
        s->started = std::chrono::steady_clock::now();
    }

    std::shared_ptr<Platform> platform;
    try {
        platform = Platform::build(props, PlatformOptions{s->artifacts_dir(), s->dir, std::nullopt});
    } catch (const std::exception& e) {
        spdlog::info("session {}: build failed: {}", id, e.what());
        std::lock_guard lock(mutex_);
        s->error = e.what();
        write_file(s->artifacts_dir() / "error.txt", s->error + "\n");
        release_ports(*s);
        s->state = SessionState::Failed;
        changed_.notify_all();
        return;
    }

    std::lock_guard lock(mutex_);
    s->platform = platform;
    s->worker = std::thread([this, s] { run_session(s); });
}

void SessionManager::run_session(std::shared_ptr<Session> s) {
    std::optional<ExitReport> report;
    std::string error;
    try {
        report = s->platform->run();
    } catch (const std::exception& e) {
        error = e.what();
    }

    std::lock_guard lock(mutex_);
    if (report) {
        s->outcome = report->outcome;
        s->exit_code = report->exit_code;
        s->sim_time_ps = report->sim_time.ps;
        s->wall_time_ns = report->wall_time_ns;
        s->state = report->outcome == Outcome::Finished ? SessionState::Finished : SessionState::Failed;
        if (report->outcome != Outcome::Finished)
            s->error = fmt::format("run ended: {}", to_string(report->outcome));
    } else {
        s->sim_time_ps = s->platform->progress().ps;
        s->error = error;
        s->state = SessionState::Failed;
        try {
            write_file(s->artifacts_dir() / "error.txt", error + "\n");
        } catch (const std::exception& e) {
            spdlog::error("session {}: {}", s->id, e.what());
        }
    }
    s->platform.reset();
    release_ports(*s);
    changed_.notify_all();
}

ordered_json SessionManager::status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto s = find(id);
    ordered_json j;
    j["id"] = s->id;
    j["state"] = to_string(s->state);
    if (s->outcome)
        j["outcome"] = to_string(*s->outcome);
    if (s->exit_code)
        j["exit_code"] = *s->exit_code;

    std::uint64_t sim_ps = s->sim_time_ps;
    double wall_ms = double(s->wall_time_ns) / 1e6;
    if (s->state == SessionState::Running) {
        if (s->platform)
            sim_ps = s->platform->progress().ps;
        wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - s->started).count();
    }
    j["sim_time_ps"] = sim_ps;
    j["wall_time_ms"] = wall_ms;
    if (s->gdb_port)
        j["gdb_port"] = *s->gdb_port;
    if (s->uart_port)
        j["uart_port"] = *s->uart_port;
    if (!s->error.empty())
        j["error"] = s->error;
    return j;
}

json SessionManager::list() const {
    std::lock_guard lock(mutex_);
    json out = json::array();
    for (auto& [id, s] : sessions_)
        out.push_back({{"id", id}, {"state", to_string(s->state)}});
    return out;
}

std::vector<std::string> SessionManager::list_artifacts(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto s = find(id);
    if (s->state != SessionState::Finished && s->state != SessionState::Failed)
        throw conflict(fmt::format("session is {}; artifacts are published when it ends", to_string(s->state)));
    std::vector<std::string> names;
    for (auto& entry : fs::directory_iterator(s->artifacts_dir()))
        if (entry.is_regular_file())
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

std::string SessionManager::fetch_artifact(const std::string& id, const std::string& name) const {
    const auto names = list_artifacts(id);
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw not_found(fmt::format("no artifact '{}'", name));
    fs::path path;
    {
        std::lock_guard lock(mutex_);
        path = find(id)->artifacts_dir() / name;
    }
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void SessionManager::remove(const std::string& id) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mutex_);
        s = find(id);
        if (s->state == SessionState::Running)
            throw conflict("session is running");
        sessions_.erase(id);
    }
    if (s->worker.joinable())
        s->worker.join();
    std::error_code ec;
    fs::remove_all(s->dir, ec);
    if (ec)
        spdlog::warn("session {}: cannot remove {}: {}", id, s->dir.string(), ec.message());
}

bool SessionManager::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    auto s = find(id);
    return changed_.wait_for(lock, timeout, [&] { return s->state != SessionState::Running; });
}

// ---------------------------------------------------------------------------

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
    res.status = status;
    res.set_content(json{{"error", code}, {"detail", detail}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ApiError& e) {
            send_error(res, e.status(), e.code(), e.what());
        }
    };
}

} // namespace

RestServer::RestServer(SessionManager& manager)
    : manager_(manager), server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;
    srv.set_payload_max_length(std::size_t(256) << 20);

    srv.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 json body = json::object();
                 if (!req.body.empty()) {
                     body = json::parse(req.body, nullptr, false);
                     if (body.is_discarded())
                         throw bad_request("invalid_json", "request body is not JSON");
                 }
                 if (!body.is_object())
                     throw bad_request("invalid_config", "body must be an object like {\"config\": {...}}");
                 for (auto& [key, _] : body.items())
                     if (key != "config")
                         throw bad_request("invalid_config", fmt::format("unexpected field '{}'", key));
                 const json cfg = body.contains("config") ? body["config"] : json::object();
                 send_json(res, 201, {{"id", manager_.create(cfg)}});
             }));
    srv.Put(R"(/sessions/([^/]+)/files/([^/]+))",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                manager_.upload(req.matches[1], req.matches[2], req.body);
                send_json(res, 200, manager_.status(req.matches[1]));
            }));
    srv.Post(R"(/sessions/([^/]+)/start)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 manager_.start(req.matches[1]);
                 send_json(res, 202, manager_.status(req.matches[1]));
             }));
    srv.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                send_json(res, 200, manager_.list());
            }));
    srv.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, manager_.status(req.matches[1]));
            }));
    srv.Get(R"(/sessions/([^/]+)/artifacts)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, manager_.list_artifacts(req.matches[1]));
            }));
    srv.Get(R"(/sessions/([^/]+)/artifacts/([^/]+))",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                res.status = 200;
                res.set_content(manager_.fetch_artifact(req.matches[1], req.matches[2]),
                                "application/octet-stream");
            }));
    srv.Delete(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   manager_.remove(req.matches[1]);
                   res.status = 204;
               }));

    srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty())
            return;
        const int status = res.status;
        send_error(res, status, status == 404 ? "not_found" : "bad_request",
                   fmt::format("{} {} is not part of the API", req.method, req.path));
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("internal error: {}", what);
        send_error(res, 500, "internal", what);
    });
}

RestServer::~RestServer() { stop(); }

std::uint16_t RestServer::bind(const std::string& host, std::uint16_t port) {
    if (port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p <= 0)
            throw std::runtime_error(fmt::format("cannot bind {}", host));
        return std::uint16_t(p);
    }
    if (!server_->bind_to_port(host, port))
        throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
    return port;
}

void RestServer::listen() { server_->listen_after_bind(); }

void RestServer::stop() {
    if (server_)
        server_->stop();
}

} // namespace vp::runtime
