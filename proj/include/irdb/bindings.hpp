#pragma once

#include <cstdint>
#include <map>

#include "irdb/debug_meta.hpp"
#include "irdb/ir_model.hpp"
#include "irdb/memory.hpp"

namespace irdb {

// Where a source symbol currently lives.
struct Binding {
  enum class Kind : std::uint8_t { Constant, Register, Memory, Undefined };
  Kind kind = Kind::Undefined;
  RuntimeValue constant;       // Constant, and snapshots of effectively-final registers
  Register reg;                // Register
  std::uint64_t address = 0;   // Memory
};

struct BindingMap {
  std::map<const SymbolDescriptor*, Binding> entries;

  const Binding* find(const SymbolDescriptor* symbol) const {
    auto it = entries.find(symbol);
    return it == entries.end() ? nullptr : &it->second;
  }
  void clear() { entries.clear(); }
};

}  // namespace irdb
