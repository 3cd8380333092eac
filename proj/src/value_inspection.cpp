#include "irdb/value_inspection.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

namespace irdb {

// --- abstract values --------------------------------------------------------

AbstractValue AbstractValue::fromRuntime(const RuntimeValue& value) {
  AbstractValue v;
  v.backing_ = value.kind == RuntimeValue::Kind::Foreign ? Backing::Foreign : Backing::Bits;
  if (value.kind == RuntimeValue::Kind::Aggregate) {
    v.bytes_ = value.bytes;
  } else {
    v.bytes_.resize(8);
    for (std::size_t i = 0; i < 8; ++i) v.bytes_[i] = static_cast<std::uint8_t>(value.raw >> (8 * i));
  }
  v.bitSize_ = v.bytes_.size() * 8;
  return v;
}

AbstractValue AbstractValue::fromMemory(const Memory& memory, std::uint64_t address, std::uint64_t bitSize) {
  AbstractValue v;
  v.backing_ = Backing::Memory;
  v.memory_ = &memory;
  v.address_ = address;
  v.bitSize_ = bitSize;
  return v;
}

AbstractValue AbstractValue::unavailable() { return {}; }

std::optional<std::uint64_t> AbstractValue::readBits(std::uint64_t bitOffset, std::uint64_t bitCount) const {
  if (backing_ == Backing::Unavailable || bitCount > 64 || bitOffset + bitCount > bitSize_) return std::nullopt;
  if (bitCount == 0) return 0;
  const std::uint64_t absolute = bitOffset_ + bitOffset;
  const std::uint64_t first = absolute / 8;
  const std::uint64_t last = (absolute + bitCount - 1) / 8;
  std::vector<std::uint8_t> raw;
  if (backing_ == Backing::Memory) {
    auto bytes = memory_->tryRead(address_ + first, last - first + 1);
    if (!bytes) return std::nullopt;
    raw = std::move(*bytes);
  } else {
    if (last >= bytes_.size()) return std::nullopt;
    raw.assign(bytes_.begin() + static_cast<std::ptrdiff_t>(first), bytes_.begin() + static_cast<std::ptrdiff_t>(last + 1));
  }
  std::uint64_t result = 0;
  for (std::uint64_t i = 0; i < bitCount; ++i) {
    const std::uint64_t bit = absolute - first * 8 + i;
    if ((raw[bit / 8] >> (bit % 8)) & 1) result |= std::uint64_t{1} << i;
  }
  return result;
}

std::optional<std::vector<std::uint8_t>> AbstractValue::readBytes() const {
  std::vector<std::uint8_t> out;
  for (std::uint64_t i = 0; i + 8 <= bitSize_; i += 8) {
    auto b = readBits(i, 8);
    if (!b) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>(*b));
  }
  return out;
}

AbstractValue AbstractValue::slice(std::uint64_t bitOffset, std::uint64_t bitSize) const {
  if (backing_ == Backing::Unavailable || bitOffset + bitSize > bitSize_) return unavailable();
  AbstractValue v = *this;
  v.bitOffset_ += bitOffset;
  v.bitSize_ = bitSize;
  return v;
}

std::optional<std::uint64_t> AbstractValue::address() const {
  if (backing_ != Backing::Memory || bitOffset_ % 8 != 0) return std::nullopt;
  return address_ + bitOffset_ / 8;
}

// --- rendering --------------------------------------------------------------

namespace {

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string charLiteral(std::uint64_t code) {
  const auto c = static_cast<unsigned char>(code);
  switch (c) {
    case '\n': return "'\\n'";
    case '\t': return "'\\t'";
    case '\r': return "'\\r'";
    case '\0': return "'\\0'";
    case '\'': return "'\\''";
    case '\\': return "'\\\\'";
    default: break;
  }
  if (c >= 0x20 && c < 0x7f) return std::string("'") + static_cast<char>(c) + "'";
  char buf[16];
  std::snprintf(buf, sizeof buf, "'\\x%02x'", c);
  return buf;
}

std::string formatPrimitive(const PrimitiveType& p, std::uint64_t bits, std::uint64_t size) {
  switch (p.encoding) {
    case Encoding::Bool:
      return bits != 0 ? "true" : "false";
    case Encoding::SignedInt:
      return std::to_string(signExtend(bits, static_cast<unsigned>(size)));
    case Encoding::UnsignedInt:
      return std::to_string(bits);
    case Encoding::SignedChar:
      return std::to_string(signExtend(bits, static_cast<unsigned>(size))) + " " + charLiteral(bits);
    case Encoding::UnsignedChar:
      return std::to_string(bits) + " " + charLiteral(bits);
    case Encoding::Float: {
      char buf[64];
      if (size == 32) {
        std::snprintf(buf, sizeof buf, "%g", static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits))));
      } else if (size == 64) {
        std::snprintf(buf, sizeof buf, "%g", std::bit_cast<double>(bits));
      } else {
        return kNotAvailable;
      }
      return buf;
    }
  }
  return kNotAvailable;
}

std::uint64_t byteSize(const TypeDescriptor& t) { return (t.bitSize + 7) / 8; }

void addMembers(DisplayNode& node, const TypeDescriptor& structType, const AbstractValue& storage) {
  const auto& s = *structType.unqualified().as<StructureType>();
  for (const auto& m : s.members) {
    if (!m.type) continue;
    const std::uint64_t size = m.bitSize ? m.bitSize : m.type->bitSize;
    node.children.emplace_back(m.name, SourceValue{m.type, storage.slice(m.bitOffset, size)});
  }
}

bool liveWindow(const Memory& memory, const AbstractValue& storage, const TypeDescriptor& type) {
  if (storage.backing() != AbstractValue::Backing::Memory) return true;
  auto addr = storage.address();
  return addr && memory.isLive(*addr, std::max<std::uint64_t>(byteSize(type), 1));
}

}  // namespace

DisplayNode render(const SourceValue& value, const Memory& memory) {
  DisplayNode node;
  if (!value.type) {
    node.display = kNotAvailable;
    return node;
  }
  const TypeDescriptor& t = *value.type;
  const TypeDescriptor& u = t.unqualified();
  node.typeName = t.name;
  if (u.as<ForeignType>() || value.storage.backing() == AbstractValue::Backing::Foreign) {
    node.display = kInteropValue;
    return node;
  }
  if (value.storage.backing() == AbstractValue::Backing::Unavailable) {
    node.display = kNotAvailable;
    return node;
  }

  // Bit-field slices are narrower than their declared type.
  const std::uint64_t width = std::min<std::uint64_t>({u.bitSize, value.storage.bitSize(), 64});
  if (const auto* p = u.as<PrimitiveType>()) {
    const auto bits = value.storage.readBits(0, width);
    node.display = bits ? formatPrimitive(*p, *bits, width) : kNotAvailable;
    return node;
  }
  if (const auto* e = u.as<EnumerationType>()) {
    const auto bits = value.storage.readBits(0, width);
    if (!bits) {
      node.display = kNotAvailable;
      return node;
    }
    const std::int64_t v = e->isUnsigned ? static_cast<std::int64_t>(*bits)
                                         : signExtend(*bits, static_cast<unsigned>(width));
    auto it = e->labelFor.find(v);
    node.display = it != e->labelFor.end() ? it->second
                                           : (e->isUnsigned ? std::to_string(*bits) : std::to_string(v));
    return node;
  }
  if (const auto* p = u.as<PointerType>()) {
    const auto raw = value.storage.readBits(0, 64);
    if (!raw) {
      node.display = kNotAvailable;
      return node;
    }
    if (Memory::regionOf(*raw) == Region::Foreign) {
      node.display = kInteropValue;
      return node;
    }
    const TypeDescriptor* pointee = p->pointee;
    const bool derefable = pointee && !pointee->unqualified().as<FunctionTypeDesc>() && pointee->bitSize > 0 &&
                           *raw != 0 && memory.isLive(*raw, byteSize(*pointee));
    if (p->reference) {
      if (!derefable) {
        node.display = kNotAvailable;
        return node;
      }
      DisplayNode inner = render(SourceValue{pointee, AbstractValue::fromMemory(memory, *raw, pointee->bitSize)}, memory);
      inner.typeName = t.name;
      return inner;
    }
    node.display = hex(*raw);
    if (derefable) {
      SourceValue target{pointee, AbstractValue::fromMemory(memory, *raw, pointee->bitSize)};
      if (pointee->unqualified().as<StructureType>()) {
        addMembers(node, *pointee, target.storage);
      } else {
        node.children.emplace_back("*", target);
      }
    }
    return node;
  }
  if (u.as<StructureType>() || u.as<ArrayType>()) {
    if (!liveWindow(memory, value.storage, u)) {
      node.display = kNotAvailable;
      return node;
    }
    const auto addr = value.storage.address();
    node.display = addr ? hex(*addr) : t.name;
    if (u.as<StructureType>()) {
      addMembers(node, u, value.storage);
    } else {
      const auto& a = *u.as<ArrayType>();
      const std::uint64_t elementBits = a.element ? a.element->bitSize : 0;
      for (std::uint64_t i = 0; a.element && i < a.length; ++i) {
        node.children.emplace_back("[" + std::to_string(i) + "]",
                                   SourceValue{a.element, value.storage.slice(i * elementBits, elementBits)});
      }
    }
    return node;
  }
  node.display = t.name;
  return node;
}

// --- tracking ---------------------------------------------------------------

ValueTracker::ValueTracker(Interpreter& interpreter, DescriptorBuilder& builder)
    : interpreter_(interpreter), builder_(builder) {
  const IrModule& module = interpreter_.module();
  for (const auto& g : module.globals) {
    for (const auto& ref : g.dbgRefs) {
      try {
        statics_.push_back({&builder_.buildSymbol(module, ref), interpreter_.globalAddress(g.name)});
      } catch (const std::exception&) {
      }
    }
  }
}

void ValueTracker::attach() {
  interpreter_.setDbgObserver([this](Frame& frame, const Instruction& call) { recordBinding(frame, call); });
}

const StaticSymbol* ValueTracker::findStatic(const SymbolDescriptor* symbol) const {
  for (const auto& s : statics_) {
    if (s.symbol == symbol) return &s;
  }
  return nullptr;
}

const ValueTracker::FunctionFacts& ValueTracker::factsFor(const IrFunction& fn) {
  auto it = facts_.find(&fn);
  if (it != facts_.end()) return it->second;
  FunctionFacts facts;
  const IrModule& module = interpreter_.module();
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    for (const auto& inst : fn.blocks[b].body) {
      if (inst.op != Opcode::Call) continue;
      try {
        if (auto intr = parseIntrinsicCall(module, inst)) {
          ++facts.intrinsicCount[intr->variableRef];
          if (b == 0) facts.inEntryBlock.insert(intr->variableRef);
        }
      } catch (const MalformedIntrinsicError&) {
      }
    }
  }
  return facts_.emplace(&fn, std::move(facts)).first->second;
}

bool ValueTracker::isEffectivelyFinal(const IrFunction& fn, MetadataId variable) {
  const auto& facts = factsFor(fn);
  auto it = facts.intrinsicCount.find(variable);
  return it != facts.intrinsicCount.end() && it->second == 1 && facts.inEntryBlock.count(variable) > 0;
}

void ValueTracker::recordBinding(Frame& frame, const Instruction& call) {
  try {
    if (auto intr = parseIntrinsicCall(interpreter_.module(), call)) recordBinding(frame, *intr);
  } catch (const MalformedIntrinsicError&) {
  }
}

void ValueTracker::recordBinding(Frame& frame, const DbgIntrinsic& intrinsic) {
  const SymbolDescriptor* symbol = nullptr;
  try {
    symbol = &builder_.buildSymbol(interpreter_.module(), intrinsic.variableRef);
  } catch (const std::exception&) {
    return;
  }
  const bool final = isEffectivelyFinal(*frame.function, intrinsic.variableRef);
  if (final && frame.bindings.find(symbol)) return;

  Binding binding;
  const bool declare = intrinsic.kind == DbgIntrinsic::Kind::Declare;
  const ValueRef& v = intrinsic.valueOperand.value;
  if (!intrinsic.expressionEmpty || v.kind == ValueRef::Kind::Undef) {
    binding.kind = Binding::Kind::Undefined;
  } else {
    try {
      const RuntimeValue rv = interpreter_.evaluate(&frame, intrinsic.valueOperand);
      if (declare) {
        binding.kind = Binding::Kind::Memory;
        binding.address = rv.raw;
      } else if (v.kind == ValueRef::Kind::Register && !final) {
        binding.kind = Binding::Kind::Register;
        binding.reg = v.reg;
      } else {
        binding.kind = Binding::Kind::Constant;
        binding.constant = rv;
      }
    } catch (const std::exception&) {
      binding.kind = Binding::Kind::Undefined;
    }
  }
  frame.bindings.entries[symbol] = std::move(binding);
}

std::optional<SourceValue> ValueTracker::resolveSymbol(const Frame& frame, const SymbolDescriptor& symbol) const {
  const Memory& memory = interpreter_.memory();
  if (symbol.staticness == Staticness::Static) {
    const StaticSymbol* s = findStatic(&symbol);
    if (!s) return std::nullopt;
    return SourceValue{symbol.type, AbstractValue::fromMemory(memory, s->address, symbol.type->bitSize)};
  }
  const Binding* b = frame.bindings.find(&symbol);
  if (!b) {
    // Parameters read the frame's incoming arguments until their intrinsic runs.
    const auto arg = static_cast<std::size_t>(symbol.argumentNumber);
    if (arg == 0 || arg > frame.arguments.size() || frame.arguments[arg - 1].kind == RuntimeValue::Kind::Aggregate)
      return std::nullopt;
    if (symbol.enclosingScope != builder_.functionScope(interpreter_.module(), *frame.function)) return std::nullopt;
    return SourceValue{symbol.type, AbstractValue::fromRuntime(frame.arguments[arg - 1])};
  }
  switch (b->kind) {
    case Binding::Kind::Memory:
      return SourceValue{symbol.type, AbstractValue::fromMemory(memory, b->address, symbol.type->bitSize)};
    case Binding::Kind::Constant:
      return SourceValue{symbol.type, AbstractValue::fromRuntime(b->constant)};
    case Binding::Kind::Register:
      try {
        return SourceValue{symbol.type, AbstractValue::fromRuntime(interpreter_.registerValue(frame, b->reg))};
      } catch (const std::exception&) {
        return std::nullopt;
      }
    case Binding::Kind::Undefined:
      break;
  }
  return std::nullopt;
}

}  // namespace irdb
