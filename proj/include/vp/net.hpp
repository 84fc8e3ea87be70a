#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vp::net {

class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owning TCP stream socket.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }

    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    static Socket connect(const std::string& host, std::uint16_t port);

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }
    int release() {
        int f = fd_;
        fd_ = -1;
        return f;
    }
    void close();

    /// Returns false if the peer is gone.
    bool send_all(std::span<const std::uint8_t> bytes);
    bool send_all(std::string_view text) {
        return send_all({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    }

    enum class ReadStatus { Data, Timeout, Closed };
    /// Waits up to `timeout` (zero = poll) for data and reads what is available.
    ReadStatus read_some(std::string& out, std::chrono::milliseconds timeout);

private:
    int fd_ = -1;
};

class Listener {
public:
    /// Binds on all interfaces. Port 0 picks an ephemeral port.
    explicit Listener(std::uint16_t port, const std::string& host = "0.0.0.0");
    ~Listener();

    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    std::uint16_t port() const { return port_; }
    /// Waits up to `timeout` for a connection (zero = poll).
    std::optional<Socket> accept(std::chrono::milliseconds timeout);

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

} // namespace vp::net
