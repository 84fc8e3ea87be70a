#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vp {

enum class Command : std::uint8_t { Read, Write };
enum class Response : std::uint8_t { Incomplete, Ok, AddressError, CommandError };

const char* to_string(Response r);

/// One blocking bus access. Payload is stored inline; only naturally aligned
/// 1, 2 and 4 byte accesses exist on this fabric.
struct Transaction {
    std::uint64_t address = 0;
    Command command = Command::Read;
    std::array<std::uint8_t, 4> data{};
    std::uint8_t length = 4;
    Response response = Response::Incomplete;
    std::uint64_t latency_cycles = 0;

    static Transaction read(std::uint64_t addr, std::uint8_t len = 4);
    static Transaction write(std::uint64_t addr, std::uint32_t value, std::uint8_t len = 4);

    std::span<std::uint8_t> bytes() { return {data.data(), length}; }
    std::span<const std::uint8_t> bytes() const { return {data.data(), length}; }

    /// Little-endian view of the payload, zero-extended.
    std::uint32_t value() const;
    void set_value(std::uint32_t v);

    bool well_formed() const;
    bool ok() const { return response == Response::Ok; }
};

class MappingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Anything that can sit behind an address range.
class Target {
public:
    virtual ~Target() = default;
    virtual std::string_view name() const = 0;
    /// Handles `txn` at `offset` relative to the mapped base. Must set the
    /// response; must not touch latency.
    virtual void access(Transaction& txn, std::uint64_t offset) = 0;
};

struct MapEntry {
    std::uint64_t base;
    std::uint64_t size;
    Target* target;
};

struct Route {
    Target* target;
    std::uint64_t offset;
};

class AddressMap {
public:
    void map(std::uint64_t base, std::uint64_t size, Target& target);
    /// Returns nullopt-like Route{nullptr,0} for unmapped addresses.
    Route route(std::uint64_t address) const;
    const std::vector<MapEntry>& entries() const { return entries_; }

private:
    std::vector<MapEntry> entries_; // sorted by base
};

/// Interconnect with a flat per-access latency.
class Bus {
public:
    explicit Bus(std::uint64_t access_cycles = 0) : access_cycles_(access_cycles) {}

    AddressMap& address_map() { return map_; }
    const AddressMap& address_map() const { return map_; }
    void map(std::uint64_t base, std::uint64_t size, Target& target) { map_.map(base, size, target); }

    std::uint64_t access_cycles() const { return access_cycles_; }
    void set_access_cycles(std::uint64_t c) { access_cycles_ = c; }

    void transport(Transaction& txn);
    /// Same routing as transport() but accumulates no latency.
    void transport_debug(Transaction& txn);

private:
    void dispatch(Transaction& txn);

    AddressMap map_;
    std::uint64_t access_cycles_;
};

enum class Access : std::uint8_t { ReadOnly, WriteOnly, ReadWrite };

struct Register {
    std::string name;
    std::uint32_t offset = 0;
    Access access = Access::ReadWrite;
    std::uint32_t reset_value = 0;
    /// Returns the value a read observes; receives the stored value.
    std::function<std::uint32_t(std::uint32_t stored)> read_hook;
    /// Called after the written value has been stored.
    std::function<void(std::uint32_t written)> write_hook;

    std::uint32_t value = 0;
};

/// A bank of 32-bit registers accessed with 4-byte aligned transactions.
class RegisterFile {
public:
    Register& add(Register reg);
    Register& at(std::uint32_t offset);
    const Register& at(std::uint32_t offset) const;
    std::uint32_t& value(std::uint32_t offset) { return at(offset).value; }

    void reset();
    void access(Transaction& txn, std::uint64_t offset);

private:
    std::map<std::uint32_t, Register> regs_;
};

} // namespace vp
