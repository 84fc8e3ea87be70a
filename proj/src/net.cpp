#include "vp/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

namespace vp::net {

namespace {

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
    pollfd p{fd, POLLIN, 0};
    for (;;) {
        int r = ::poll(&p, 1, int(timeout.count()));
        if (r < 0 && errno == EINTR)
            continue;
        return r > 0;
    }
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

} // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.release();
    }
    return *this;
}

void Socket::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

Socket Socket::connect(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    auto service = std::to_string(port);
    if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
        throw NetError(fmt::format("cannot resolve {}:{}", host, port));
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
        ::freeaddrinfo(res);
        throw NetError("socket() failed");
    }
    int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        ::close(fd);
        throw NetError(fmt::format("connect {}:{}: {}", host, port, std::strerror(errno)));
    }
    set_nodelay(fd);
    return Socket(fd);
}

bool Socket::send_all(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        auto n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            return false;
        sent += std::size_t(n);
    }
    return true;
}

Socket::ReadStatus Socket::read_some(std::string& out, std::chrono::milliseconds timeout) {
    if (!wait_readable(fd_, timeout))
        return ReadStatus::Timeout;
    char buf[4096];
    for (;;) {
        auto n = ::recv(fd_, buf, sizeof(buf), 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            return ReadStatus::Closed;
        out.append(buf, std::size_t(n));
        return ReadStatus::Data;
    }
}

Listener::Listener(std::uint16_t port, const std::string& host) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0)
        throw NetError("socket() failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw NetError(fmt::format("bad listen address {}", host));
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 4) != 0) {
        auto err = std::strerror(errno);
        ::close(fd_);
        throw NetError(fmt::format("cannot listen on {}:{}: {}", host, port, err));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
    if (fd_ >= 0)
        ::close(fd_);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
    if (!wait_readable(fd_, timeout))
        return std::nullopt;
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0)
        return std::nullopt;
    set_nodelay(fd);
    return Socket(fd);
}

} // namespace vp::net
