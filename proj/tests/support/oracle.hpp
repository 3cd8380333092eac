#pragma once

// Reference decoder for memory-resident variables. Works straight from the
// raw DI metadata nodes and memory bytes, without the descriptor builder or
// the renderer, so it can be used to cross-check them.

#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irdb/ir_model.hpp"
#include "irdb/memory.hpp"

namespace oracle {

using irdb::IrModule;
using irdb::Memory;
using irdb::MetadataId;
using irdb::MetadataNode;
using irdb::MetadataValue;

inline const MetadataValue* field(const MetadataNode& n, const std::string& name) {
  for (const auto& [k, v] : n.attributes) {
    if (k == name) return &v;
  }
  // short spellings
  if (name == "column") return field(n, "col");
  return nullptr;
}

inline std::optional<std::int64_t> integer(const MetadataNode& n, const std::string& name) {
  const auto* v = field(n, name);
  if (!v) return std::nullopt;
  if (v->kind == MetadataValue::Kind::Integer) return v->integer;
  if (v->kind == MetadataValue::Kind::Typed && v->node == nullptr) {
    try {
      return std::stoll(v->text.substr(v->text.rfind(' ') + 1));
    } catch (...) {
    }
  }
  return std::nullopt;
}

inline std::string text(const MetadataNode& n, const std::string& name) {
  const auto* v = field(n, name);
  return v && (v->kind == MetadataValue::Kind::String || v->kind == MetadataValue::Kind::Symbol) ? v->text : "";
}

inline const MetadataNode* ref(const IrModule& m, const MetadataNode& n, const std::string& name) {
  const auto* v = field(n, name);
  if (!v) return nullptr;
  if (v->kind == MetadataValue::Kind::Ref) return m.findMetadata(v->ref);
  if (v->kind == MetadataValue::Kind::Node) return v->node.get();
  return nullptr;
}

inline std::vector<const MetadataNode*> elements(const IrModule& m, const MetadataNode& n) {
  std::vector<const MetadataNode*> out;
  const MetadataNode* tuple = ref(m, n, "elements");
  if (!tuple) return out;
  for (const auto& [k, v] : tuple->attributes) {
    if (v.kind == MetadataValue::Kind::Ref) {
      if (const auto* e = m.findMetadata(v.ref)) out.push_back(e);
    } else if (v.kind == MetadataValue::Kind::Node && v.node) {
      out.push_back(v.node.get());
    }
  }
  return out;
}

inline bool flagSet(const MetadataNode& n, const std::string& name, const std::string& flag) {
  const auto* v = field(n, name);
  return v && v->text.find(flag) != std::string::npos;
}

// Drops typedef and cv-qualifier wrappers.
inline const MetadataNode* strip(const IrModule& m, const MetadataNode* t) {
  while (t && t->kind.find("DerivedType") != std::string::npos) {
    const auto tag = text(*t, "tag");
    if (tag != "DW_TAG_typedef" && tag != "DW_TAG_const_type" && tag != "DW_TAG_volatile_type" &&
        tag != "DW_TAG_restrict_type")
      break;
    t = ref(m, *t, "baseType");
  }
  return t;
}

inline std::uint64_t bitSize(const IrModule& m, const MetadataNode* t) {
  t = strip(m, t);
  if (!t) return 0;
  if (auto s = integer(*t, "size")) return static_cast<std::uint64_t>(*s);
  return 0;
}

struct Expected {
  std::string display;
  std::vector<std::pair<std::string, std::string>> children;  // member name -> display
};

inline std::optional<std::uint64_t> bits(const Memory& mem, std::uint64_t address, std::uint64_t bitOffset,
                                         std::uint64_t count) {
  if (count == 0 || count > 64) return std::nullopt;
  const std::uint64_t first = bitOffset / 8, last = (bitOffset + count - 1) / 8;
  auto bytes = mem.tryRead(address + first, last - first + 1);
  if (!bytes) return std::nullopt;
  std::uint64_t v = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t b = bitOffset - first * 8 + i;
    if (((*bytes)[b / 8] >> (b % 8)) & 1) v |= std::uint64_t{1} << i;
  }
  return v;
}

inline std::int64_t sext(std::uint64_t v, std::uint64_t n) {
  if (n == 0 || n >= 64) return static_cast<std::int64_t>(v);
  const std::uint64_t sign = std::uint64_t{1} << (n - 1);
  v &= (sign << 1) - 1;
  return static_cast<std::int64_t>((v ^ sign) - sign);
}

inline std::string charText(std::uint64_t c) {
  c &= 0xff;
  switch (c) {
    case '\n': return "'\\n'";
    case '\t': return "'\\t'";
    case '\r': return "'\\r'";
    case 0: return "'\\0'";
    case '\'': return "'\\''";
    case '\\': return "'\\\\'";
  }
  char buf[16];
  if (c >= 0x20 && c < 0x7f) {
    std::snprintf(buf, sizeof buf, "'%c'", static_cast<char>(c));
  } else {
    std::snprintf(buf, sizeof buf, "'\\x%02x'", static_cast<unsigned>(c));
  }
  return buf;
}

inline std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

inline const char* kNA = "<not available>";

// Display text of a value of DI type `type` at address + bitOffset.
inline std::string decodeScalar(const IrModule& m, const MetadataNode* type, const Memory& mem, std::uint64_t address,
                                std::uint64_t bitOffset, std::uint64_t sizeOverride = 0) {
  const MetadataNode* t = strip(m, type);
  if (!t) return kNA;
  const std::uint64_t size = sizeOverride ? sizeOverride : bitSize(m, t);
  const auto tag = text(*t, "tag");
  if (t->kind.find("BasicType") != std::string::npos) {
    auto v = bits(mem, address, bitOffset, size);
    if (!v) return kNA;
    const auto enc = text(*t, "encoding");
    if (enc == "DW_ATE_boolean") return *v ? "true" : "false";
    if (enc == "DW_ATE_signed") return std::to_string(sext(*v, size));
    if (enc == "DW_ATE_unsigned") return std::to_string(*v);
    if (enc == "DW_ATE_signed_char") return std::to_string(sext(*v, size)) + " " + charText(*v);
    if (enc == "DW_ATE_unsigned_char") return std::to_string(*v) + " " + charText(*v);
    if (enc == "DW_ATE_float") {
      char buf[64];
      if (size == 32) {
        float f;
        const auto u = static_cast<std::uint32_t>(*v);
        std::memcpy(&f, &u, 4);
        std::snprintf(buf, sizeof buf, "%g", static_cast<double>(f));
      } else {
        double d;
        std::memcpy(&d, &*v, 8);
        std::snprintf(buf, sizeof buf, "%g", d);
      }
      return buf;
    }
    return kNA;
  }
  if (tag == "DW_TAG_enumeration_type") {
    auto v = bits(mem, address, bitOffset, size);
    if (!v) return kNA;
    const MetadataNode* under = strip(m, ref(m, *t, "baseType"));
    const bool isUnsigned = under && text(*under, "encoding").find("unsigned") != std::string::npos;
    const std::int64_t value = isUnsigned ? static_cast<std::int64_t>(*v) : sext(*v, size);
    for (const auto* e : elements(m, *t)) {
      if (integer(*e, "value") == value) return text(*e, "name");
    }
    return std::to_string(value);
  }
  if (tag == "DW_TAG_pointer_type") {
    auto v = bits(mem, address, bitOffset, 64);
    if (!v) return kNA;
    if (Memory::regionOf(*v) == irdb::Region::Foreign) return "<interop value>";
    return hex(*v);
  }
  if (tag == "DW_TAG_reference_type" || tag == "DW_TAG_rvalue_reference_type") {
    auto v = bits(mem, address, bitOffset, 64);
    if (!v) return kNA;
    const MetadataNode* target = ref(m, *t, "baseType");
    if (!target || !mem.isLive(*v, std::max<std::uint64_t>((bitSize(m, target) + 7) / 8, 1))) return kNA;
    return decodeScalar(m, target, mem, *v, 0);
  }
  if (tag == "DW_TAG_structure_type" || tag == "DW_TAG_class_type" || tag == "DW_TAG_union_type" ||
      tag == "DW_TAG_array_type") {
    if (bitOffset % 8 != 0 || !mem.isLive(address + bitOffset / 8, std::max<std::uint64_t>((size + 7) / 8, 1)))
      return kNA;
    return hex(address + bitOffset / 8);
  }
  return kNA;
}

// Flattened data members (base classes inlined) with absolute bit offsets.
struct Member {
  std::string name;
  const MetadataNode* type;
  std::uint64_t offset;
  std::uint64_t size;  // bit-field width or 0
};

inline void members(const IrModule& m, const MetadataNode* t, std::uint64_t base, std::vector<Member>& out) {
  t = strip(m, t);
  if (!t) return;
  for (const auto* e : elements(m, *t)) {
    const auto tag = text(*e, "tag");
    const std::uint64_t off = base + static_cast<std::uint64_t>(integer(*e, "offset").value_or(0));
    if (tag == "DW_TAG_inheritance") {
      members(m, ref(m, *e, "baseType"), off, out);
    } else if (tag == "DW_TAG_member" && !flagSet(*e, "flags", "DIFlagStaticMember")) {
      const bool bitfield = flagSet(*e, "flags", "DIFlagBitField");
      out.push_back({text(*e, "name"), ref(m, *e, "baseType"), off,
                     bitfield ? static_cast<std::uint64_t>(integer(*e, "size").value_or(0)) : 0});
    }
  }
}

inline Expected decode(const IrModule& m, const MetadataNode* type, const Memory& mem, std::uint64_t address) {
  Expected e;
  e.display = decodeScalar(m, type, mem, address, 0);
  const MetadataNode* t = strip(m, type);
  if (!t || e.display == kNA) return e;
  const auto tag = text(*t, "tag");
  if (tag == "DW_TAG_structure_type" || tag == "DW_TAG_class_type" || tag == "DW_TAG_union_type") {
    std::vector<Member> list;
    members(m, t, 0, list);
    for (const auto& mm : list) e.children.emplace_back(mm.name, decodeScalar(m, mm.type, mem, address, mm.offset, mm.size));
  } else if (tag == "DW_TAG_array_type") {
    const MetadataNode* element = ref(m, *t, "baseType");
    const std::uint64_t elementBits = bitSize(m, element);
    std::uint64_t count = 0;
    for (const auto* s : elements(m, *t)) count = static_cast<std::uint64_t>(integer(*s, "count").value_or(0));
    for (std::uint64_t i = 0; i < count; ++i)
      e.children.emplace_back("[" + std::to_string(i) + "]", decodeScalar(m, element, mem, address, i * elementBits));
  }
  return e;
}

inline const MetadataNode* variableType(const IrModule& m, MetadataId variable) {
  const MetadataNode* v = m.findMetadata(variable);
  if (!v) return nullptr;
  if (v->kind.find("GlobalVariableExpression") != std::string::npos) v = ref(m, *v, "var");
  return v ? ref(m, *v, "type") : nullptr;
}

}  // namespace oracle
