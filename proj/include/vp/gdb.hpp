#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vp/net.hpp"

namespace vp::gdb {

/// Escapes '$', '#', '}' and '*' as '}' followed by the byte xor 0x20.
std::string rsp_escape(std::string_view payload);
std::uint8_t rsp_checksum(std::string_view wire_payload);
/// '$' + escaped payload + '#' + two lowercase hex digits.
std::string rsp_encode(std::string_view payload);

struct RspEvent {
    enum class Kind { Packet, BadPacket, Interrupt, Ack, Nack };
    Kind kind;
    std::string payload; // unescaped, Packet only
};

/// Incremental wire decoder. Bytes may arrive split at any point.
class RspDecoder {
public:
    std::vector<RspEvent> feed(std::string_view bytes);

private:
    enum class State { Idle, Body, Escape, Check1, Check2 };
    State state_ = State::Idle;
    std::string body_;     // unescaped payload
    std::uint32_t sum_ = 0; // over wire bytes
    int check_hi_ = 0;
};

/// What the debugger may touch on the target. Called only while paused.
class DebugTarget {
public:
    virtual ~DebugTarget() = default;
    virtual std::array<std::uint32_t, 33> read_registers() = 0;
    virtual bool write_register(unsigned index, std::uint32_t value) = 0;
    virtual bool read_memory(std::uint64_t addr, std::span<std::uint8_t> out) = 0;
    virtual bool write_memory(std::uint64_t addr, std::span<const std::uint8_t> bytes) = 0;
    virtual void add_breakpoint(std::uint32_t addr) = 0;
    virtual void remove_breakpoint(std::uint32_t addr) = 0;
};

enum class Resume { None, Step, Continue, Detach, Kill };

struct Reply {
    std::optional<std::string> payload; // nullopt: send nothing now
    Resume resume = Resume::None;
};

/// Stateless RSP command interpreter over a DebugTarget.
class CommandHandler {
public:
    explicit CommandHandler(DebugTarget& target) : target_(target) {}
    Reply handle(std::string_view command);

private:
    Reply read_memory(std::string_view args);
    Reply write_memory(std::string_view args);
    Reply breakpoint(std::string_view args, bool insert);
    Reply resume(std::string_view args, Resume how);

    DebugTarget& target_;
};

std::string hex_u32_le(std::uint32_t v);

enum class SessionState { WaitingConnection, Paused, Running, Detached };

/// TCP endpoint plus run-control state for one debugged simulation.
///
/// Everything runs on the simulation's own thread at instruction
/// boundaries: the simulation polls while running and blocks in
/// serve_paused() while stopped. One client at a time; further connection
/// attempts are closed immediately.
class Server {
public:
    Server(std::uint16_t port, DebugTarget& target);

    std::uint16_t port() const { return listener_.port(); }
    SessionState state() const { return state_; }
    bool connected() const { return client_.valid(); }

    /// Blocks until a client connects (or `abort` becomes true). The target
    /// is paused afterwards.
    bool wait_for_client(const std::atomic<bool>& abort);

    enum class Poll { Nothing, Interrupted, Attached };
    /// Non-blocking check while the target runs: accepts a new client and
    /// looks for the interrupt byte. Both pause the target; only an
    /// interrupt needs a stop reply (a new client asks with '?').
    Poll poll_running();

    /// Serves commands until the debugger resumes, detaches or kills.
    Resume serve_paused(const std::atomic<bool>& abort);

    /// Reports a stop to the client ("S05", "W00", ...) and pauses.
    void report_stop(const std::string& reply);
    /// Reports process exit; the client connection is closed afterwards.
    void report_exit(const std::string& reply);

private:
    void send_packet(const std::string& payload);
    void drop_client();
    bool refuse_extra_connections();
    /// Consumes buffered bytes; returns false if the connection dropped.
    bool pump(std::chrono::milliseconds timeout, std::vector<RspEvent>& events);

    net::Listener listener_;
    net::Socket client_;
    RspDecoder decoder_;
    CommandHandler handler_;
    SessionState state_ = SessionState::WaitingConnection;
    std::string last_sent_;
    std::vector<RspEvent> backlog_;
};

} // namespace vp::gdb
