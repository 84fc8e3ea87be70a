#include "vp/gdb.hpp"

#include <charconv>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace vp::gdb {

namespace {

constexpr char kHex[] = "0123456789abcdef";

int hex_value(char c) {
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

std::optional<std::uint64_t> parse_hex(std::string_view s) {
    if (s.empty() || s.size() > 16)
        return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc() || ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

std::optional<std::vector<std::uint8_t>> parse_hex_bytes(std::string_view s) {
    if (s.size() % 2 != 0)
        return std::nullopt;
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2) {
        int hi = hex_value(s[i]), lo = hex_value(s[i + 1]);
        if (hi < 0 || lo < 0)
            return std::nullopt;
        out.push_back(std::uint8_t(hi << 4 | lo));
    }
    return out;
}

std::optional<std::uint32_t> parse_u32_le(std::string_view s) {
    auto bytes = parse_hex_bytes(s);
    if (!bytes || bytes->size() != 4)
        return std::nullopt;
    return std::uint32_t((*bytes)[0]) | std::uint32_t((*bytes)[1]) << 8 | std::uint32_t((*bytes)[2]) << 16
           | std::uint32_t((*bytes)[3]) << 24;
}

const Reply kMalformed{"E01", Resume::None};
const Reply kAccessError{"E14", Resume::None};
const Reply kOk{"OK", Resume::None};

constexpr std::size_t kMaxMemoryRead = 8192;

} // namespace

std::string rsp_escape(std::string_view payload) {
    std::string out;
    out.reserve(payload.size());
    for (char c : payload) {
        if (c == '$' || c == '#' || c == '}' || c == '*') {
            out += '}';
            out += char(c ^ 0x20);
        } else {
            out += c;
        }
    }
    return out;
}

std::uint8_t rsp_checksum(std::string_view wire_payload) {
    std::uint8_t sum = 0;
    for (char c : wire_payload)
        sum = std::uint8_t(sum + std::uint8_t(c));
    return sum;
}

std::string rsp_encode(std::string_view payload) {
    const std::string body = rsp_escape(payload);
    const auto sum = rsp_checksum(body);
    std::string out;
    out.reserve(body.size() + 4);
    out += '$';
    out += body;
    out += '#';
    out += kHex[sum >> 4];
    out += kHex[sum & 0xf];
    return out;
}

std::string hex_u32_le(std::uint32_t v) {
    std::string out;
    for (int i = 0; i < 4; ++i) {
        const auto b = std::uint8_t(v >> (8 * i));
        out += kHex[b >> 4];
        out += kHex[b & 0xf];
    }
    return out;
}

std::vector<RspEvent> RspDecoder::feed(std::string_view bytes) {
    std::vector<RspEvent> events;
    for (char c : bytes) {
        const auto u = std::uint8_t(c);
        switch (state_) {
        case State::Idle:
            if (c == '$') {
                state_ = State::Body;
                body_.clear();
                sum_ = 0;
            } else if (u == 0x03) {
                events.push_back({RspEvent::Kind::Interrupt, {}});
            } else if (c == '+') {
                events.push_back({RspEvent::Kind::Ack, {}});
            } else if (c == '-') {
                events.push_back({RspEvent::Kind::Nack, {}});
            }
            break;
        case State::Body:
            if (c == '#') {
                state_ = State::Check1;
            } else if (c == '$') {
                // Sender restarted mid-packet.
                events.push_back({RspEvent::Kind::BadPacket, {}});
                body_.clear();
                sum_ = 0;
            } else if (c == '}') {
                sum_ += u;
                state_ = State::Escape;
            } else {
                sum_ += u;
                body_ += c;
            }
            break;
        case State::Escape:
            sum_ += u;
            body_ += char(u ^ 0x20);
            state_ = State::Body;
            break;
        case State::Check1:
            check_hi_ = hex_value(c);
            if (check_hi_ < 0) {
                events.push_back({RspEvent::Kind::BadPacket, {}});
                state_ = State::Idle;
            } else {
                state_ = State::Check2;
            }
            break;
        case State::Check2: {
            const int lo = hex_value(c);
            state_ = State::Idle;
            if (lo < 0 || std::uint8_t(check_hi_ << 4 | lo) != std::uint8_t(sum_))
                events.push_back({RspEvent::Kind::BadPacket, {}});
            else
                events.push_back({RspEvent::Kind::Packet, std::move(body_)});
            body_.clear();
            break;
        }
        }
    }
    return events;
}

// ---------------------------------------------------------------------------

Reply CommandHandler::handle(std::string_view cmd) {
    if (cmd.empty())
        return {"", Resume::None};
    const char op = cmd.front();
    const std::string_view args = cmd.substr(1);

    if (cmd.starts_with("qSupported"))
        return {"PacketSize=4096", Resume::None};
    if (cmd == "qAttached")
        return {"1", Resume::None};

    switch (op) {
    case '?':
        return {"S05", Resume::None};
    case 'g': {
        std::string out;
        for (auto v : target_.read_registers())
            out += hex_u32_le(v);
        return {out, Resume::None};
    }
    case 'G': {
        if (args.size() != 33 * 8)
            return kMalformed;
        std::array<std::uint32_t, 33> values{};
        for (unsigned i = 0; i < 33; ++i) {
            auto v = parse_u32_le(args.substr(i * 8, 8));
            if (!v)
                return kMalformed;
            values[i] = *v;
        }
        for (unsigned i = 0; i < 33; ++i)
            target_.write_register(i, values[i]);
        return kOk;
    }
    case 'p': {
        auto idx = parse_hex(args);
        if (!idx || *idx > 32)
            return kMalformed;
        return {hex_u32_le(target_.read_registers()[*idx]), Resume::None};
    }
    case 'P': {
        auto eq = args.find('=');
        if (eq == std::string_view::npos)
            return kMalformed;
        auto idx = parse_hex(args.substr(0, eq));
        auto value = parse_u32_le(args.substr(eq + 1));
        if (!idx || !value || *idx > 32)
            return kMalformed;
        target_.write_register(unsigned(*idx), *value);
        return kOk;
    }
    case 'm':
        return read_memory(args);
    case 'M':
        return write_memory(args);
    case 'Z':
    case 'z':
        return breakpoint(args, op == 'Z');
    case 's':
        return resume(args, Resume::Step);
    case 'c':
        return resume(args, Resume::Continue);
    case 'D':
        return {"OK", Resume::Detach};
    case 'k':
        return {std::nullopt, Resume::Kill};
    case 'H':
        return kOk;
    default:
        return {"", Resume::None};
    }
}

Reply CommandHandler::read_memory(std::string_view args) {
    auto comma = args.find(',');
    if (comma == std::string_view::npos)
        return kMalformed;
    auto addr = parse_hex(args.substr(0, comma));
    auto len = parse_hex(args.substr(comma + 1));
    if (!addr || !len || *len > kMaxMemoryRead)
        return kMalformed;
    std::vector<std::uint8_t> buf(*len);
    if (!target_.read_memory(*addr, buf))
        return kAccessError;
    std::string out;
    out.reserve(buf.size() * 2);
    for (auto b : buf) {
        out += kHex[b >> 4];
        out += kHex[b & 0xf];
    }
    return {out, Resume::None};
}

Reply CommandHandler::write_memory(std::string_view args) {
    auto comma = args.find(',');
    auto colon = args.find(':');
    if (comma == std::string_view::npos || colon == std::string_view::npos || colon < comma)
        return kMalformed;
    auto addr = parse_hex(args.substr(0, comma));
    auto len = parse_hex(args.substr(comma + 1, colon - comma - 1));
    auto bytes = parse_hex_bytes(args.substr(colon + 1));
    if (!addr || !len || !bytes || bytes->size() != *len)
        return kMalformed;
    if (!target_.write_memory(*addr, *bytes))
        return kAccessError;
    return kOk;
}

Reply CommandHandler::breakpoint(std::string_view args, bool insert) {
    // Z0 (software) and Z1 (hardware) both map to the address set.
    if (args.size() < 2 || (args[0] != '0' && args[0] != '1'))
        return {"", Resume::None};
    if (args[1] != ',')
        return kMalformed;
    auto rest = args.substr(2);
    auto comma = rest.find(',');
    if (comma == std::string_view::npos)
        return kMalformed;
    auto addr = parse_hex(rest.substr(0, comma));
    auto kind = parse_hex(rest.substr(comma + 1));
    if (!addr || !kind || *addr > UINT32_MAX)
        return kMalformed;
    if (insert)
        target_.add_breakpoint(std::uint32_t(*addr));
    else
        target_.remove_breakpoint(std::uint32_t(*addr));
    return kOk;
}

Reply CommandHandler::resume(std::string_view args, Resume how) {
    if (!args.empty()) {
        auto addr = parse_hex(args);
        if (!addr || *addr > UINT32_MAX)
            return kMalformed;
        target_.write_register(32, std::uint32_t(*addr));
    }
    return {std::nullopt, how};
}

// ---------------------------------------------------------------------------

Server::Server(std::uint16_t port, DebugTarget& target) : listener_(port), handler_(target) {}

void Server::send_packet(const std::string& payload) {
    last_sent_ = rsp_encode(payload);
    if (client_.valid() && !client_.send_all(last_sent_)) {
        spdlog::warn("gdb: client write failed");
        drop_client();
    }
}

void Server::drop_client() {
    client_.close();
    decoder_ = RspDecoder{};
    backlog_.clear();
}

bool Server::refuse_extra_connections() {
    using namespace std::chrono_literals;
    bool refused = false;
    while (auto extra = listener_.accept(0ms)) {
        extra->close();
        refused = true;
    }
    return refused;
}

bool Server::pump(std::chrono::milliseconds timeout, std::vector<RspEvent>& events) {
    std::string buf;
    switch (client_.read_some(buf, timeout)) {
    case net::Socket::ReadStatus::Closed:
        return false;
    case net::Socket::ReadStatus::Timeout:
        return true;
    case net::Socket::ReadStatus::Data:
        for (auto& e : decoder_.feed(buf))
            events.push_back(std::move(e));
        return true;
    }
    return true;
}

bool Server::wait_for_client(const std::atomic<bool>& abort) {
    using namespace std::chrono_literals;
    while (!abort) {
        if (auto s = listener_.accept(100ms)) {
            client_ = std::move(*s);
            state_ = SessionState::Paused;
            return true;
        }
    }
    return false;
}

Server::Poll Server::poll_running() {
    using namespace std::chrono_literals;
    if (!client_.valid()) {
        if (auto s = listener_.accept(0ms)) {
            client_ = std::move(*s);
            state_ = SessionState::Paused;
            return Poll::Attached;
        }
        return Poll::Nothing;
    }
    refuse_extra_connections();
    std::vector<RspEvent> events;
    if (!pump(0ms, events)) {
        drop_client();
        state_ = SessionState::Detached;
        return Poll::Nothing;
    }
    bool interrupted = false;
    for (auto& e : events) {
        if (e.kind == RspEvent::Kind::Interrupt)
            interrupted = true;
        else
            backlog_.push_back(std::move(e));
    }
    if (interrupted) {
        state_ = SessionState::Paused;
        return Poll::Interrupted;
    }
    return Poll::Nothing;
}

Resume Server::serve_paused(const std::atomic<bool>& abort) {
    using namespace std::chrono_literals;
    state_ = SessionState::Paused;
    while (!abort) {
        if (!client_.valid()) {
            state_ = SessionState::Detached;
            return Resume::Detach;
        }
        if (backlog_.empty()) {
            refuse_extra_connections();
            if (!pump(100ms, backlog_)) {
                drop_client();
                state_ = SessionState::Detached;
                return Resume::Detach;
            }
            continue;
        }
        auto event = std::move(backlog_.front());
        backlog_.erase(backlog_.begin());
        switch (event.kind) {
        case RspEvent::Kind::Packet: {
            client_.send_all(std::string_view("+"));
            auto reply = handler_.handle(event.payload);
            if (reply.payload)
                send_packet(*reply.payload);
            switch (reply.resume) {
            case Resume::None:
                break;
            case Resume::Step:
            case Resume::Continue:
                state_ = SessionState::Running;
                return reply.resume;
            case Resume::Detach:
                drop_client();
                state_ = SessionState::Detached;
                return Resume::Detach;
            case Resume::Kill:
                drop_client();
                state_ = SessionState::Detached;
                return Resume::Kill;
            }
            break;
        }
        case RspEvent::Kind::BadPacket:
            client_.send_all(std::string_view("-"));
            break;
        case RspEvent::Kind::Nack:
            if (!last_sent_.empty())
                client_.send_all(last_sent_);
            break;
        case RspEvent::Kind::Ack:
        case RspEvent::Kind::Interrupt:
            break;
        }
    }
    return Resume::Kill;
}

void Server::report_stop(const std::string& reply) {
    send_packet(reply);
    state_ = SessionState::Paused;
}

void Server::report_exit(const std::string& reply) {
    send_packet(reply);
    drop_client();
    state_ = SessionState::Detached;
}

} // namespace vp::gdb
