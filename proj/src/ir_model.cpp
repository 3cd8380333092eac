#include "irdb/ir_model.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

namespace irdb {

struct Type::Node {
  Kind kind = Kind::Void;
  unsigned bits = 0;
  std::optional<Type> element;
  std::uint64_t length = 0;
  std::vector<Type> members;
  bool packed = false;
  bool varargs = false;
  std::string name;
};

namespace {

// Names outside [-a-zA-Z$._0-9] are printed quoted.
std::string ident(const std::string& name) {
  const bool plain = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '$' || c == '.' || c == '_';
  });
  return plain ? name : "\"" + name + "\"";
}

}  // namespace

Type::Type() {
  static const auto voidNode = std::make_shared<const Node>();
  node_ = voidNode;
}
Type::Type(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Type Type::voidType() { return Type(); }

Type Type::integer(unsigned bits) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Integer;
  n->bits = bits;
  return Type(std::move(n));
}

Type Type::pointer(std::optional<Type> pointee) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Pointer;
  n->element = std::move(pointee);
  return Type(std::move(n));
}

Type Type::array(std::uint64_t length, Type element) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Array;
  n->length = length;
  n->element = std::move(element);
  return Type(std::move(n));
}

Type Type::structure(std::vector<Type> fields, bool packed) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Structure;
  n->members = std::move(fields);
  n->packed = packed;
  return Type(std::move(n));
}

Type Type::named(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Named;
  n->name = std::move(name);
  return Type(std::move(n));
}

Type Type::function(Type result, std::vector<Type> params, bool varargs) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Function;
  n->element = std::move(result);
  n->members = std::move(params);
  n->varargs = varargs;
  return Type(std::move(n));
}

Type Type::label() {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Label;
  return Type(std::move(n));
}

Type Type::metadata() {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Metadata;
  return Type(std::move(n));
}

Type::Kind Type::kind() const { return node_->kind; }
unsigned Type::bits() const { return node_->bits; }
std::optional<Type> Type::element() const { return node_->element; }
std::uint64_t Type::length() const { return node_->length; }
const std::vector<Type>& Type::members() const { return node_->members; }
bool Type::packed() const { return node_->packed; }
bool Type::varargs() const { return node_->varargs; }
const std::string& Type::name() const { return node_->name; }

bool operator==(const Type& a, const Type& b) {
  if (a.node_ == b.node_) return true;
  const auto& x = *a.node_;
  const auto& y = *b.node_;
  return x.kind == y.kind && x.bits == y.bits && x.length == y.length && x.packed == y.packed &&
         x.varargs == y.varargs && x.name == y.name && x.element == y.element && x.members == y.members;
}

std::string Type::str() const { return printType(*this); }

std::string printType(const Type& type) {
  switch (type.kind()) {
    case Type::Kind::Void:
      return "void";
    case Type::Kind::Integer:
      return "i" + std::to_string(type.bits());
    case Type::Kind::Pointer:
      return type.element() ? printType(*type.element()) + "*" : "ptr";
    case Type::Kind::Array:
      return "[" + std::to_string(type.length()) + " x " + printType(*type.element()) + "]";
    case Type::Kind::Structure: {
      std::string out = type.packed() ? "<{" : "{";
      for (std::size_t i = 0; i < type.members().size(); ++i) {
        out += i == 0 ? " " : ", ";
        out += printType(type.members()[i]);
      }
      out += type.members().empty() ? "" : " ";
      out += type.packed() ? "}>" : "}";
      return out;
    }
    case Type::Kind::Named:
      return "%" + ident(type.name());
    case Type::Kind::Function: {
      std::string out = printType(*type.element()) + " (";
      for (std::size_t i = 0; i < type.members().size(); ++i) {
        if (i) out += ", ";
        out += printType(type.members()[i]);
      }
      if (type.varargs()) out += type.members().empty() ? "..." : ", ...";
      return out + ")";
    }
    case Type::Kind::Label:
      return "label";
    case Type::Kind::Metadata:
      return "metadata";
  }
  return "void";
}

ValueRef ValueRef::makeInteger(std::uint64_t value, unsigned bits) {
  ValueRef v;
  v.kind = Kind::Integer;
  v.bits = bits;
  v.integer = bits >= 64 ? value : (value & ((std::uint64_t{1} << bits) - 1));
  return v;
}

ValueRef ValueRef::makeNull() {
  ValueRef v;
  v.kind = Kind::Null;
  return v;
}

ValueRef ValueRef::makeUndef() { return ValueRef{}; }

ValueRef ValueRef::makeRegister(Register reg) {
  ValueRef v;
  v.kind = Kind::Register;
  v.reg = std::move(reg);
  return v;
}

ValueRef ValueRef::makeGlobal(std::string name) {
  ValueRef v;
  v.kind = Kind::Global;
  v.name = std::move(name);
  return v;
}

ValueRef ValueRef::makeFunction(std::string name) {
  ValueRef v;
  v.kind = Kind::Function;
  v.name = std::move(name);
  return v;
}

ValueRef ValueRef::makeMetadata(MetadataId id) {
  ValueRef v;
  v.kind = Kind::Metadata;
  v.metadata = id;
  return v;
}

std::int64_t ValueRef::signedInteger() const {
  if (bits == 0 || bits >= 64) return static_cast<std::int64_t>(integer);
  const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
  return static_cast<std::int64_t>((integer ^ sign) - sign);
}

namespace {

template <typename T>
bool samePointee(const std::shared_ptr<const T>& a, const std::shared_ptr<const T>& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

}  // namespace

bool operator==(const ValueRef& a, const ValueRef& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case ValueRef::Kind::Integer:
      return a.integer == b.integer && a.bits == b.bits;
    case ValueRef::Kind::Null:
    case ValueRef::Kind::Undef:
    case ValueRef::Kind::Zero:
      return true;
    case ValueRef::Kind::Register:
      return a.reg == b.reg;
    case ValueRef::Kind::Global:
    case ValueRef::Kind::Function:
    case ValueRef::Kind::Bytes:
      return a.name == b.name;
    case ValueRef::Kind::Metadata:
      return a.metadata == b.metadata;
    case ValueRef::Kind::InlineMetadata:
      return samePointee(a.inlineNode, b.inlineNode);
    case ValueRef::Kind::MetadataValue:
      return samePointee(a.wrapped, b.wrapped);
    case ValueRef::Kind::ConstantExpr:
      return samePointee(a.expr, b.expr);
    case ValueRef::Kind::Aggregate:
      return a.elements == b.elements;
  }
  return false;
}

bool operator==(const MetadataValue& a, const MetadataValue& b) {
  return a.kind == b.kind && a.text == b.text && a.integer == b.integer && a.ref == b.ref &&
         samePointee(a.node, b.node) && a.items == b.items;
}

const char* opcodeName(Opcode op) {
  switch (op) {
    case Opcode::Alloca: return "alloca";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Add: return "add";
    case Opcode::Sub: return "sub";
    case Opcode::Mul: return "mul";
    case Opcode::SDiv: return "sdiv";
    case Opcode::UDiv: return "udiv";
    case Opcode::SRem: return "srem";
    case Opcode::URem: return "urem";
    case Opcode::And: return "and";
    case Opcode::Or: return "or";
    case Opcode::Xor: return "xor";
    case Opcode::Shl: return "shl";
    case Opcode::AShr: return "ashr";
    case Opcode::LShr: return "lshr";
    case Opcode::ICmp: return "icmp";
    case Opcode::Call: return "call";
    case Opcode::GetElementPtr: return "getelementptr";
    case Opcode::ZExt: return "zext";
    case Opcode::SExt: return "sext";
    case Opcode::Trunc: return "trunc";
    case Opcode::BitCast: return "bitcast";
    case Opcode::PtrToInt: return "ptrtoint";
    case Opcode::IntToPtr: return "inttoptr";
    case Opcode::Select: return "select";
  }
  return "?";
}

const char* predicateName(ICmpPredicate pred) {
  switch (pred) {
    case ICmpPredicate::Eq: return "eq";
    case ICmpPredicate::Ne: return "ne";
    case ICmpPredicate::Slt: return "slt";
    case ICmpPredicate::Sle: return "sle";
    case ICmpPredicate::Sgt: return "sgt";
    case ICmpPredicate::Sge: return "sge";
    case ICmpPredicate::Ult: return "ult";
    case ICmpPredicate::Ule: return "ule";
    case ICmpPredicate::Ugt: return "ugt";
    case ICmpPredicate::Uge: return "uge";
  }
  return "?";
}

bool isBinaryOp(Opcode op) {
  switch (op) {
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::SDiv:
    case Opcode::UDiv:
    case Opcode::SRem:
    case Opcode::URem:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
    case Opcode::Shl:
    case Opcode::AShr:
    case Opcode::LShr:
      return true;
    default:
      return false;
  }
}

bool isCast(Opcode op) {
  switch (op) {
    case Opcode::ZExt:
    case Opcode::SExt:
    case Opcode::Trunc:
    case Opcode::BitCast:
    case Opcode::PtrToInt:
    case Opcode::IntToPtr:
      return true;
    default:
      return false;
  }
}

const ValueRef* PhiInstruction::incomingFrom(const std::string& predecessor) const {
  for (const auto& in : incoming) {
    if (in.predecessor == predecessor) return &in.value;
  }
  return nullptr;
}

std::optional<std::size_t> IrFunction::blockIndex(const std::string& label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].label == label) return i;
  }
  return std::nullopt;
}

const MetadataValue* MetadataNode::find(std::string_view name) const {
  for (const auto& [key, value] : attributes) {
    if (key == name) return &value;
  }
  return nullptr;
}

const IrFunction* IrModule::findFunction(std::string_view name) const {
  for (const auto& f : functions) {
    if (f.irName == name) return &f;
  }
  return nullptr;
}

const GlobalVariable* IrModule::findGlobal(std::string_view name) const {
  for (const auto& g : globals) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

const MetadataNode* IrModule::findMetadata(MetadataId id) const {
  auto it = metadata.find(id);
  return it == metadata.end() ? nullptr : &it->second;
}

const MetadataNode& IrModule::lookupMetadata(MetadataId id) const {
  if (const auto* node = findMetadata(id)) return *node;
  throw UnknownMetadataError(id);
}

Type IrModule::resolve(const Type& t) const {
  Type current = t;
  // Named types may alias each other; bound the walk to the table size.
  for (std::size_t hops = 0; current.is(Type::Kind::Named) && hops <= namedTypes.size(); ++hops) {
    auto it = namedTypes.find(current.name());
    if (it == namedTypes.end() || !it->second) return current;
    current = *it->second;
  }
  return current;
}

bool operator==(const IrModule& a, const IrModule& b) {
  return a.sourceFilename == b.sourceFilename && a.namedTypes == b.namedTypes && a.globals == b.globals &&
         a.functions == b.functions && a.metadata == b.metadata && a.namedMetadata == b.namedMetadata;
}

UnknownMetadataError::UnknownMetadataError(MetadataId missing)
    : std::out_of_range("unknown metadata id !" + std::to_string(missing.value)), id(missing) {}

// ---------------------------------------------------------------------------
// Canonical printer

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    if (c == '"' || c == '\\' || c < 0x20 || c >= 0x7f) {
      char buf[4];
      std::snprintf(buf, sizeof buf, "\\%02X", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out + "\"";
}

std::string printNodeBody(const MetadataNode& node);

std::string printMetadataValue(const MetadataValue& v, bool inTuple) {
  switch (v.kind) {
    case MetadataValue::Kind::String:
      return (inTuple ? "!" : "") + quote(v.text);
    case MetadataValue::Kind::Integer:
      return std::to_string(v.integer);
    case MetadataValue::Kind::Symbol:
      return v.text;
    case MetadataValue::Kind::Ref:
      return "!" + std::to_string(v.ref.value);
    case MetadataValue::Kind::Null:
      return "null";
    case MetadataValue::Kind::Node:
      return printNodeBody(*v.node);
    case MetadataValue::Kind::Tuple: {
      std::string out = "!{";
      for (std::size_t i = 0; i < v.items.size(); ++i) {
        if (i) out += ", ";
        out += printMetadataValue(v.items[i], true);
      }
      return out + "}";
    }
    case MetadataValue::Kind::Typed:
      return v.text + " " + std::to_string(v.integer);
  }
  return "null";
}

std::string printNodeBody(const MetadataNode& node) {
  std::string out = node.distinct ? "distinct " : "";
  if (node.isTuple()) {
    out += "!{";
    for (std::size_t i = 0; i < node.attributes.size(); ++i) {
      if (i) out += ", ";
      out += printMetadataValue(node.attributes[i].second, true);
    }
    return out + "}";
  }
  out += "!" + node.kind + "(";
  for (std::size_t i = 0; i < node.attributes.size(); ++i) {
    if (i) out += ", ";
    const auto& [name, value] = node.attributes[i];
    if (!name.empty()) out += name + ": ";
    out += printMetadataValue(value, false);
  }
  return out + ")";
}

std::string printOperand(const Operand& op);
std::string printInstructionBody(const Instruction& inst);

std::string printValue(const Type& type, const ValueRef& v) {
  switch (v.kind) {
    case ValueRef::Kind::Integer:
      if (v.bits == 1) return v.integer ? "true" : "false";
      return std::to_string(v.signedInteger());
    case ValueRef::Kind::Null:
      return "null";
    case ValueRef::Kind::Undef:
      return "undef";
    case ValueRef::Kind::Zero:
      return "zeroinitializer";
    case ValueRef::Kind::Register:
      return "%" + ident(v.reg.name);
    case ValueRef::Kind::Global:
    case ValueRef::Kind::Function:
      return "@" + ident(v.name);
    case ValueRef::Kind::Metadata:
      return "!" + std::to_string(v.metadata.value);
    case ValueRef::Kind::InlineMetadata:
      return printNodeBody(*v.inlineNode);
    case ValueRef::Kind::MetadataValue:
      return printOperand(*v.wrapped);
    case ValueRef::Kind::ConstantExpr:
      return printInstructionBody(*v.expr);
    case ValueRef::Kind::Bytes: {
      std::string out = "c\"";
      for (unsigned char c : v.name) {
        if (c == '"' || c == '\\' || c < 0x20 || c >= 0x7f) {
          char buf[4];
          std::snprintf(buf, sizeof buf, "\\%02X", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
      }
      return out + "\"";
    }
    case ValueRef::Kind::Aggregate: {
      const bool isArray = type.is(Type::Kind::Array);
      const bool packed = type.is(Type::Kind::Structure) && type.packed();
      std::string out = isArray ? "[" : (packed ? "<{ " : "{ ");
      for (std::size_t i = 0; i < v.elements.size(); ++i) {
        if (i) out += ", ";
        out += printOperand(v.elements[i]);
      }
      out += isArray ? "]" : (packed ? " }>" : " }");
      return out;
    }
  }
  return "undef";
}

std::string printOperand(const Operand& op) { return printType(op.type) + " " + printValue(op.type, op.value); }

std::string printDbg(const std::optional<MetadataId>& dbg) {
  return dbg ? ", !dbg !" + std::to_string(dbg->value) : "";
}

// Instruction text without result assignment or !dbg suffix. Also used for
// constant expressions, which print with parentheses around their operands.
std::string printInstructionBody(const Instruction& inst) {
  const bool constExpr = !inst.result && inst.op != Opcode::Store && inst.op != Opcode::Call;
  std::ostringstream out;
  out << opcodeName(inst.op) << ' ';
  if (isBinaryOp(inst.op)) {
    out << printType(inst.resultType) << ' ' << printValue(inst.operands[0].type, inst.operands[0].value) << ", "
        << printValue(inst.operands[1].type, inst.operands[1].value);
  } else if (inst.op == Opcode::ICmp) {
    out << predicateName(inst.predicate) << ' ' << printOperand(inst.operands[0]) << ", "
        << printValue(inst.operands[1].type, inst.operands[1].value);
  } else if (isCast(inst.op)) {
    if (constExpr) out << '(';
    out << printOperand(inst.operands[0]) << " to " << printType(inst.resultType);
    if (constExpr) out << ')';
  } else if (inst.op == Opcode::GetElementPtr) {
    if (constExpr) out << '(';
    out << printType(inst.elementType);
    for (const auto& op : inst.operands) out << ", " << printOperand(op);
    if (constExpr) out << ')';
  } else if (inst.op == Opcode::Alloca) {
    out << printType(inst.elementType);
  } else if (inst.op == Opcode::Load) {
    out << printType(inst.resultType) << ", " << printOperand(inst.operands[0]);
  } else if (inst.op == Opcode::Store) {
    out << printOperand(inst.operands[0]) << ", " << printOperand(inst.operands[1]);
  } else if (inst.op == Opcode::Select) {
    out << printOperand(inst.operands[0]) << ", " << printOperand(inst.operands[1]) << ", "
        << printOperand(inst.operands[2]);
  } else if (inst.op == Opcode::Call) {
    const Type& sig = inst.elementType;
    if (sig.is(Type::Kind::Function) && sig.varargs()) {
      out << printType(sig);
    } else {
      out << printType(inst.resultType);
    }
    out << ' ' << printValue(inst.operands[0].type, inst.operands[0].value) << '(';
    for (std::size_t i = 1; i < inst.operands.size(); ++i) {
      if (i > 1) out << ", ";
      out << printOperand(inst.operands[i]);
    }
    out << ')';
  }
  return out.str();
}

}  // namespace

std::string printModule(const IrModule& module) {
  std::ostringstream out;
  out << "source_filename = " << quote(module.sourceFilename) << "\n\n";
  for (const auto& [name, body] : module.namedTypes) {
    out << '%' << ident(name) << " = type " << (body ? printType(*body) : "opaque") << '\n';
  }
  if (!module.namedTypes.empty()) out << '\n';
  for (const auto& g : module.globals) {
    out << '@' << ident(g.name) << " = ";
    if (!g.initializer) out << "external ";
    out << (g.isConstant ? "constant " : "global ") << printType(g.valueType);
    if (g.initializer) out << ' ' << printValue(g.initializer->type, g.initializer->value);
    for (const auto& ref : g.dbgRefs) out << ", !dbg !" << ref.value;
    out << '\n';
  }
  if (!module.globals.empty()) out << '\n';
  for (const auto& f : module.functions) {
    out << (f.isDeclaration() ? "declare " : "define ") << printType(f.returnType) << " @" << ident(f.irName) << '(';
    for (std::size_t i = 0; i < f.params.size(); ++i) {
      if (i) out << ", ";
      out << printType(f.params[i].type);
      if (!f.isDeclaration()) out << " %" << ident(f.params[i].reg.name);
    }
    if (f.varargs) out << (f.params.empty() ? "..." : ", ...");
    out << ')';
    if (f.subprogramRef) out << " !dbg !" << f.subprogramRef->value;
    if (f.isDeclaration()) {
      out << "\n\n";
      continue;
    }
    out << " {\n";
    for (const auto& bb : f.blocks) {
      out << ident(bb.label) << ":\n";
      for (const auto& phi : bb.phis) {
        out << "  %" << ident(phi.result.name) << " = phi " << printType(phi.type);
        for (std::size_t i = 0; i < phi.incoming.size(); ++i) {
          out << (i ? ", " : " ") << "[ " << printValue(phi.type, phi.incoming[i].value) << ", %"
              << ident(phi.incoming[i].predecessor) << " ]";
        }
        out << printDbg(phi.dbg) << '\n';
      }
      for (const auto& inst : bb.body) {
        out << "  ";
        if (inst.result) out << '%' << ident(inst.result->name) << " = ";
        out << printInstructionBody(inst) << printDbg(inst.dbg) << '\n';
      }
      const auto& t = bb.terminator;
      out << "  ";
      switch (t.kind) {
        case Terminator::Kind::Branch:
          out << "br label %" << ident(t.targets[0]);
          break;
        case Terminator::Kind::CondBranch:
          out << "br " << printOperand(*t.value) << ", label %" << ident(t.targets[0]) << ", label %" << ident(t.targets[1]);
          break;
        case Terminator::Kind::Switch:
          out << "switch " << printOperand(*t.value) << ", label %" << ident(t.targets[0]) << " [";
          for (std::size_t i = 0; i < t.cases.size(); ++i) {
            out << "\n    " << printOperand(t.cases[i]) << ", label %" << ident(t.targets[i + 1]);
          }
          out << "\n  ]";
          break;
        case Terminator::Kind::Return:
          out << "ret " << (t.value ? printOperand(*t.value) : "void");
          break;
        case Terminator::Kind::Unreachable:
          out << "unreachable";
          break;
      }
      out << printDbg(t.dbg) << '\n';
    }
    out << "}\n\n";
  }
  for (const auto& [name, ids] : module.namedMetadata) {
    out << '!' << name << " = !{";
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? ", !" : "!") << ids[i].value;
    out << "}\n";
  }
  for (const auto& [id, node] : module.metadata) {
    out << '!' << id.value << " = " << printNodeBody(node) << '\n';
  }
  return out.str();
}

}  // namespace irdb
