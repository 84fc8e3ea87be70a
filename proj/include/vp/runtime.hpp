#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vp/platform.hpp"

namespace httplib {
class Server;
}

namespace vp::runtime {

enum class SessionState { Created, Configured, Running, Finished, Failed };
const char* to_string(SessionState s);

/// A client mistake or a refusal. `status` is the HTTP status the REST
/// layer answers with; `code` is the machine-readable error name.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& detail)
        : std::runtime_error(detail), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct ManagerOptions {
    std::filesystem::path workdir;
    /// Concurrently running sessions; create and start beyond it are refused.
    std::size_t max_running = 16;
    /// Sessions kept in the registry at once, in any state.
    std::size_t max_sessions = 1024;
    /// Inclusive range for per-session GDB and console ports.
    std::uint16_t port_first = 40000;
    std::uint16_t port_last = 40999;
};

/// Owns every session: its workdir, configuration, uploaded files and the
/// simulation thread. All public calls are safe from any thread.
class SessionManager {
public:
    explicit SessionManager(ManagerOptions options);
    ~SessionManager();

    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    /// `config` is a flat JSON object of property name to value.
    std::string create(const nlohmann::json& config);
    void upload(const std::string& id, const std::string& param, std::string bytes);
    void start(const std::string& id);
    nlohmann::ordered_json status(const std::string& id) const;
    nlohmann::json list() const;
    std::vector<std::string> list_artifacts(const std::string& id) const;
    std::string fetch_artifact(const std::string& id, const std::string& name) const;
    void remove(const std::string& id);

    /// Blocks until the session leaves Running or the timeout expires.
    bool wait(const std::string& id, std::chrono::milliseconds timeout) const;

    std::size_t running() const;
    const ManagerOptions& options() const { return options_; }

private:
    struct Session;

    std::shared_ptr<Session> find(const std::string& id) const;
    std::string next_id();
    std::uint16_t allocate_port();
    void release_ports(Session& s);
    void run_session(std::shared_ptr<Session> s);
    std::size_t running_locked() const;

    ManagerOptions options_;
    config::PropertySet catalog_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::set<std::uint16_t> ports_in_use_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_;
};

/// JSON-over-HTTP front end for a SessionManager.
class RestServer {
public:
    explicit RestServer(SessionManager& manager);
    ~RestServer();

    /// Binds; port 0 picks a free one. Returns the bound port.
    std::uint16_t bind(const std::string& host, std::uint16_t port);
    /// Serves until stop(). Call after bind().
    void listen();
    void stop();

private:
    SessionManager& manager_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace vp::runtime
