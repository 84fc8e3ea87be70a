#include "vp/tlm.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace vp {

const char* to_string(Response r) {
    switch (r) {
    case Response::Incomplete: return "incomplete";
    case Response::Ok: return "ok";
    case Response::AddressError: return "address-error";
    case Response::CommandError: return "command-error";
    }
    return "?";
}

Transaction Transaction::read(std::uint64_t addr, std::uint8_t len) {
    Transaction t;
    t.address = addr;
    t.command = Command::Read;
    t.length = len;
    return t;
}

Transaction Transaction::write(std::uint64_t addr, std::uint32_t value, std::uint8_t len) {
    Transaction t;
    t.address = addr;
    t.command = Command::Write;
    t.length = len;
    t.set_value(value);
    return t;
}

std::uint32_t Transaction::value() const {
    std::uint32_t v = 0;
    for (unsigned i = 0; i < length; ++i)
        v |= std::uint32_t(data[i]) << (8 * i);
    return v;
}

void Transaction::set_value(std::uint32_t v) {
    for (unsigned i = 0; i < 4; ++i)
        data[i] = i < length ? std::uint8_t(v >> (8 * i)) : 0;
}

bool Transaction::well_formed() const {
    if (length != 1 && length != 2 && length != 4)
        return false;
    return address % length == 0;
}

void AddressMap::map(std::uint64_t base, std::uint64_t size, Target& target) {
    if (size == 0)
        throw MappingError(fmt::format("{}: zero-sized mapping at {:#x}", target.name(), base));
    if (base + size < base)
        throw MappingError(fmt::format("{}: range at {:#x} overflows", target.name(), base));
    for (const auto& e : entries_) {
        if (base < e.base + e.size && e.base < base + size)
            throw MappingError(fmt::format("{} [{:#x}, {:#x}) overlaps {} [{:#x}, {:#x})",
                                           target.name(), base, base + size, e.target->name(),
                                           e.base, e.base + e.size));
    }
    auto pos = std::lower_bound(entries_.begin(), entries_.end(), base,
                                [](const MapEntry& e, std::uint64_t b) { return e.base < b; });
    entries_.insert(pos, MapEntry{base, size, &target});
}

Route AddressMap::route(std::uint64_t address) const {
    for (const auto& e : entries_) {
        if (address >= e.base && address - e.base < e.size)
            return {e.target, address - e.base};
    }
    return {nullptr, 0};
}

void Bus::dispatch(Transaction& txn) {
    if (!txn.well_formed()) {
        txn.response = Response::CommandError;
        return;
    }
    auto r = map_.route(txn.address);
    if (!r.target) {
        txn.response = Response::AddressError;
        return;
    }
    txn.response = Response::Incomplete;
    r.target->access(txn, r.offset);
    if (txn.response == Response::Incomplete)
        txn.response = Response::Ok;
}

void Bus::transport(Transaction& txn) {
    dispatch(txn);
    txn.latency_cycles += access_cycles_;
}

void Bus::transport_debug(Transaction& txn) {
    dispatch(txn);
}

Register& RegisterFile::add(Register reg) {
    if (reg.offset % 4 != 0)
        throw MappingError(fmt::format("register {} at unaligned offset {:#x}", reg.name, reg.offset));
    if (regs_.contains(reg.offset))
        throw MappingError(fmt::format("register {} duplicates offset {:#x}", reg.name, reg.offset));
    reg.value = reg.reset_value;
    auto off = reg.offset;
    return regs_.emplace(off, std::move(reg)).first->second;
}

Register& RegisterFile::at(std::uint32_t offset) {
    return regs_.at(offset);
}

const Register& RegisterFile::at(std::uint32_t offset) const {
    return regs_.at(offset);
}

void RegisterFile::reset() {
    for (auto& [_, r] : regs_)
        r.value = r.reset_value;
}

void RegisterFile::access(Transaction& txn, std::uint64_t offset) {
    if (txn.length != 4 || offset % 4 != 0) {
        txn.response = Response::CommandError;
        return;
    }
    auto it = regs_.find(std::uint32_t(offset));
    if (offset > UINT32_MAX || it == regs_.end()) {
        txn.response = Response::AddressError;
        return;
    }
    Register& reg = it->second;
    if (txn.command == Command::Read) {
        if (reg.access == Access::WriteOnly) {
            txn.response = Response::CommandError;
            return;
        }
        txn.set_value(reg.read_hook ? reg.read_hook(reg.value) : reg.value);
    } else {
        if (reg.access == Access::ReadOnly) {
            txn.response = Response::CommandError;
            return;
        }
        auto v = txn.value();
        reg.value = v;
        if (reg.write_hook)
            reg.write_hook(v);
    }
    txn.response = Response::Ok;
}

} // namespace vp
