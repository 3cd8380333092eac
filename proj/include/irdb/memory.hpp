#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace irdb {

// A guest-visible fault: null or wild access, division by zero, unreachable...
class Trap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken interpreter invariants (reading an unwritten register and the like).
class InterpreterBug : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Region : std::uint8_t { Code, Global, Heap, Stack, Foreign, Invalid };

const char* regionName(Region region);

struct RuntimeValue {
  enum class Kind : std::uint8_t { Integer, Pointer, Function, Foreign, Aggregate };
  Kind kind = Kind::Integer;
  unsigned bits = 0;       // integer width; 64 for pointers
  std::uint64_t raw = 0;   // integer bits (reduced mod 2^bits) or address
  std::vector<std::uint8_t> bytes;  // Aggregate

  static RuntimeValue integer(std::uint64_t value, unsigned bits);
  // Classifies the address: code addresses become Function, foreign ones Foreign.
  static RuntimeValue pointer(std::uint64_t address);
  static RuntimeValue aggregate(std::vector<std::uint8_t> bytes);

  bool isPointerLike() const { return kind == Kind::Pointer || kind == Kind::Function || kind == Kind::Foreign; }
  std::int64_t asSigned() const;
  friend bool operator==(const RuntimeValue&, const RuntimeValue&) = default;
};

std::uint64_t truncateBits(std::uint64_t value, unsigned bits);
std::int64_t signExtend(std::uint64_t value, unsigned bits);

struct Allocation {
  std::uint64_t base = 0;
  std::uint64_t size = 0;
  Region region = Region::Invalid;
  bool readOnly = false;
  std::vector<std::uint8_t> bytes;
};

// Flat 64-bit address space split into regions. Addresses are never reused,
// so any access through a pointer into a released allocation traps.
class Memory {
 public:
  static constexpr std::uint64_t kCodeBase = 0x1000;
  static constexpr std::uint64_t kGlobalBase = 0x100000;
  static constexpr std::uint64_t kHeapBase = 0x10000000;
  static constexpr std::uint64_t kStackBase = 0x7ff000000000;
  static constexpr std::uint64_t kForeignBase = 0xf00000000000;

  static Region regionOf(std::uint64_t address);

  std::uint64_t allocate(Region region, std::uint64_t size, std::uint64_t align, bool readOnly = false);
  // Releases a stack or heap allocation by its base address.
  void release(std::uint64_t base);
  // free(): traps on anything but the base of a live heap allocation.
  void freeHeap(std::uint64_t address);
  void markReadOnly(std::uint64_t base);

  std::vector<std::uint8_t> read(std::uint64_t address, std::uint64_t count) const;
  void write(std::uint64_t address, std::span<const std::uint8_t> bytes);
  // Inspection-side access: never traps.
  std::optional<std::vector<std::uint8_t>> tryRead(std::uint64_t address, std::uint64_t count) const;
  bool isLive(std::uint64_t address, std::uint64_t count = 1) const;
  const Allocation* find(std::uint64_t address) const;
  std::size_t liveCount(Region region) const;

 private:
  const Allocation* locate(std::uint64_t address, std::uint64_t count) const;
  Allocation* locate(std::uint64_t address, std::uint64_t count);

  std::map<std::uint64_t, Allocation> live_;
  std::map<Region, std::uint64_t> next_;
};

}  // namespace irdb
