#include "irdb/memory.hpp"

#include <algorithm>
#include <cstdio>

namespace irdb {

const char* regionName(Region region) {
  switch (region) {
    case Region::Code: return "code";
    case Region::Global: return "global";
    case Region::Heap: return "heap";
    case Region::Stack: return "stack";
    case Region::Foreign: return "foreign";
    case Region::Invalid: return "invalid";
  }
  return "invalid";
}

std::uint64_t truncateBits(std::uint64_t value, unsigned bits) {
  if (bits >= 64) return value;
  return value & ((std::uint64_t{1} << bits) - 1);
}

std::int64_t signExtend(std::uint64_t value, unsigned bits) {
  if (bits == 0) return 0;
  if (bits >= 64) return static_cast<std::int64_t>(value);
  const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
  value = truncateBits(value, bits);
  return static_cast<std::int64_t>((value ^ sign) - sign);
}

RuntimeValue RuntimeValue::integer(std::uint64_t value, unsigned bits) {
  RuntimeValue v;
  v.kind = Kind::Integer;
  v.bits = bits;
  v.raw = truncateBits(value, bits);
  return v;
}

RuntimeValue RuntimeValue::pointer(std::uint64_t address) {
  RuntimeValue v;
  v.bits = 64;
  v.raw = address;
  switch (Memory::regionOf(address)) {
    case Region::Code: v.kind = Kind::Function; break;
    case Region::Foreign: v.kind = Kind::Foreign; break;
    default: v.kind = Kind::Pointer; break;
  }
  return v;
}

RuntimeValue RuntimeValue::aggregate(std::vector<std::uint8_t> bytes) {
  RuntimeValue v;
  v.kind = Kind::Aggregate;
  v.bits = static_cast<unsigned>(bytes.size() * 8);
  v.bytes = std::move(bytes);
  return v;
}

std::int64_t RuntimeValue::asSigned() const { return signExtend(raw, bits); }

Region Memory::regionOf(std::uint64_t address) {
  if (address >= kForeignBase) return Region::Foreign;
  if (address >= kStackBase) return Region::Stack;
  if (address >= kHeapBase) return Region::Heap;
  if (address >= kGlobalBase) return Region::Global;
  if (address >= kCodeBase) return Region::Code;
  return Region::Invalid;
}

std::uint64_t Memory::allocate(Region region, std::uint64_t size, std::uint64_t align, bool readOnly) {
  static const std::map<Region, std::uint64_t> bases = {
      {Region::Global, kGlobalBase}, {Region::Heap, kHeapBase}, {Region::Stack, kStackBase}};
  auto baseIt = bases.find(region);
  if (baseIt == bases.end()) throw InterpreterBug(std::string("cannot allocate in region ") + regionName(region));
  auto [it, inserted] = next_.emplace(region, baseIt->second);
  align = std::max<std::uint64_t>(align, 1);
  std::uint64_t address = (it->second + align - 1) / align * align;
  const std::uint64_t span = std::max<std::uint64_t>(size, 1);
  // A small gap keeps one-past-the-end accesses from landing in a neighbour.
  it->second = address + span + 16;
  Allocation a;
  a.base = address;
  a.size = size;
  a.region = region;
  a.readOnly = readOnly;
  a.bytes.assign(size, 0);
  live_.emplace(address, std::move(a));
  return address;
}

void Memory::release(std::uint64_t base) { live_.erase(base); }

void Memory::freeHeap(std::uint64_t address) {
  if (address == 0) return;
  auto it = live_.find(address);
  if (it == live_.end() || it->second.region != Region::Heap) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "free of invalid pointer 0x%llx", static_cast<unsigned long long>(address));
    throw Trap(buf);
  }
  live_.erase(it);
}

void Memory::markReadOnly(std::uint64_t base) {
  if (auto it = live_.find(base); it != live_.end()) it->second.readOnly = true;
}

const Allocation* Memory::locate(std::uint64_t address, std::uint64_t count) const {
  auto it = live_.upper_bound(address);
  if (it == live_.begin()) return nullptr;
  --it;
  const Allocation& a = it->second;
  if (address < a.base || address - a.base > a.size || count > a.size - (address - a.base)) return nullptr;
  if (count == 0 && address - a.base >= std::max<std::uint64_t>(a.size, 1)) return nullptr;
  return &a;
}

Allocation* Memory::locate(std::uint64_t address, std::uint64_t count) {
  return const_cast<Allocation*>(std::as_const(*this).locate(address, count));
}

namespace {

[[noreturn]] void accessTrap(const char* what, std::uint64_t address, std::uint64_t count) {
  char buf[128];
  if (address == 0) {
    std::snprintf(buf, sizeof buf, "null pointer %s of %llu bytes", what, static_cast<unsigned long long>(count));
  } else {
    std::snprintf(buf, sizeof buf, "invalid %s of %llu bytes at 0x%llx", what, static_cast<unsigned long long>(count),
                  static_cast<unsigned long long>(address));
  }
  throw Trap(buf);
}

}  // namespace

std::vector<std::uint8_t> Memory::read(std::uint64_t address, std::uint64_t count) const {
  const Allocation* a = locate(address, count);
  if (!a) accessTrap("read", address, count);
  const auto off = static_cast<std::ptrdiff_t>(address - a->base);
  return {a->bytes.begin() + off, a->bytes.begin() + off + static_cast<std::ptrdiff_t>(count)};
}

void Memory::write(std::uint64_t address, std::span<const std::uint8_t> bytes) {
  Allocation* a = locate(address, bytes.size());
  if (!a) accessTrap("write", address, bytes.size());
  if (a->readOnly) accessTrap("write to constant", address, bytes.size());
  std::copy(bytes.begin(), bytes.end(), a->bytes.begin() + static_cast<std::ptrdiff_t>(address - a->base));
}

std::optional<std::vector<std::uint8_t>> Memory::tryRead(std::uint64_t address, std::uint64_t count) const {
  const Allocation* a = locate(address, count);
  if (!a) return std::nullopt;
  const auto off = static_cast<std::ptrdiff_t>(address - a->base);
  return std::vector<std::uint8_t>(a->bytes.begin() + off, a->bytes.begin() + off + static_cast<std::ptrdiff_t>(count));
}

bool Memory::isLive(std::uint64_t address, std::uint64_t count) const { return locate(address, count) != nullptr; }

const Allocation* Memory::find(std::uint64_t address) const { return locate(address, 0); }

std::size_t Memory::liveCount(Region region) const {
  return static_cast<std::size_t>(
      std::count_if(live_.begin(), live_.end(), [&](const auto& kv) { return kv.second.region == region; }));
}

}  // namespace irdb
