#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "irdb/bindings.hpp"
#include "irdb/debug_meta.hpp"
#include "irdb/interpreter.hpp"
#include "irdb/ir_parser.hpp"

namespace irdb {

// Bit-addressable read view over runtime storage. Reads never mutate state
// and never trap; anything unreadable comes back as nullopt.
class AbstractValue {
 public:
  enum class Backing : std::uint8_t { Bits, Memory, Foreign, Unavailable };

  AbstractValue() = default;
  static AbstractValue fromRuntime(const RuntimeValue& value);
  static AbstractValue fromMemory(const Memory& memory, std::uint64_t address, std::uint64_t bitSize);
  static AbstractValue unavailable();

  Backing backing() const { return backing_; }
  std::uint64_t bitSize() const { return bitSize_; }
  // Up to 64 bits starting at bitOffset, little-endian bit order.
  std::optional<std::uint64_t> readBits(std::uint64_t bitOffset, std::uint64_t bitCount) const;
  std::optional<std::vector<std::uint8_t>> readBytes() const;
  AbstractValue slice(std::uint64_t bitOffset, std::uint64_t bitSize) const;
  // Base address of a byte-aligned memory window.
  std::optional<std::uint64_t> address() const;
  const Memory* memory() const { return memory_; }

 private:
  Backing backing_ = Backing::Unavailable;
  std::vector<std::uint8_t> bytes_;  // Bits / Foreign
  const Memory* memory_ = nullptr;
  std::uint64_t address_ = 0;
  std::uint64_t bitOffset_ = 0;
  std::uint64_t bitSize_ = 0;
};

struct SourceValue {
  const TypeDescriptor* type = nullptr;
  AbstractValue storage;
};

struct DisplayNode {
  std::string display;
  std::string typeName;
  std::vector<std::pair<std::string, SourceValue>> children;  // rendered on demand
};

inline constexpr const char* kNotAvailable = "<not available>";
inline constexpr const char* kInteropValue = "<interop value>";

// Pure: depends only on the type, the storage bits and memory contents.
DisplayNode render(const SourceValue& value, const Memory& memory);

struct StaticSymbol {
  const SymbolDescriptor* symbol = nullptr;
  std::uint64_t address = 0;
};

// Per-session symbol tracking: records dbg.declare/dbg.value effects into
// frame bindings and resolves symbols to source values.
class ValueTracker {
 public:
  ValueTracker(Interpreter& interpreter, DescriptorBuilder& builder);

  // Installs itself as the interpreter's dbg-intrinsic observer.
  void attach();

  void recordBinding(Frame& frame, const DbgIntrinsic& intrinsic);
  void recordBinding(Frame& frame, const Instruction& call);

  // Exactly one dbg intrinsic for the variable in the whole function, and it
  // sits in the entry block.
  bool isEffectivelyFinal(const IrFunction& fn, MetadataId variable);

  std::optional<SourceValue> resolveSymbol(const Frame& frame, const SymbolDescriptor& symbol) const;
  const std::vector<StaticSymbol>& statics() const { return statics_; }
  const StaticSymbol* findStatic(const SymbolDescriptor* symbol) const;

 private:
  struct FunctionFacts {
    std::map<MetadataId, int> intrinsicCount;
    std::set<MetadataId> inEntryBlock;
  };
  const FunctionFacts& factsFor(const IrFunction& fn);

  Interpreter& interpreter_;
  DescriptorBuilder& builder_;
  std::vector<StaticSymbol> statics_;
  std::map<const IrFunction*, FunctionFacts> facts_;
};

}  // namespace irdb
