#pragma once

// In-memory form of a parsed textual LLVM-IR module. Everything here is
// immutable once the parser hands the module out.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace irdb {

struct MetadataId {
  std::int64_t value = -1;
  friend auto operator<=>(const MetadataId&, const MetadataId&) = default;
};

struct MetadataIdHash {
  std::size_t operator()(MetadataId id) const noexcept { return std::hash<std::int64_t>{}(id.value); }
};

// Position inside the .ll text. Deliberately excluded from structural equality
// so that a printed-and-reparsed module compares equal to the original.
struct TextPos {
  std::uint32_t line = 0;
  std::uint32_t column = 0;
  friend bool operator==(const TextPos&, const TextPos&) { return true; }
};

class Type {
 public:
  enum class Kind : std::uint8_t { Void, Integer, Pointer, Array, Structure, Named, Function, Label, Metadata };

  Type();  // void

  static Type voidType();
  static Type integer(unsigned bits);
  // A null pointee makes an opaque `ptr`.
  static Type pointer(std::optional<Type> pointee);
  static Type array(std::uint64_t length, Type element);
  static Type structure(std::vector<Type> fields, bool packed);
  static Type named(std::string name);
  static Type function(Type result, std::vector<Type> params, bool varargs);
  static Type label();
  static Type metadata();

  Kind kind() const;
  bool is(Kind k) const { return kind() == k; }
  bool isVoid() const { return is(Kind::Void); }
  bool isInteger() const { return is(Kind::Integer); }
  bool isPointer() const { return is(Kind::Pointer); }

  unsigned bits() const;
  // Pointee for typed pointers (nullopt for opaque), element for arrays,
  // result type for functions.
  std::optional<Type> element() const;
  std::uint64_t length() const;
  // Struct fields or function parameters.
  const std::vector<Type>& members() const;
  bool packed() const;
  bool varargs() const;
  const std::string& name() const;

  std::string str() const;

  friend bool operator==(const Type& a, const Type& b);

 private:
  struct Node;
  explicit Type(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

struct Register {
  std::string name;         // without the leading '%'
  std::uint32_t slot = 0;   // dense per-function index
  friend bool operator==(const Register&, const Register&) = default;
};

struct Instruction;
struct MetadataNode;
struct Operand;

struct ValueRef {
  enum class Kind : std::uint8_t {
    Integer,
    Null,
    Register,
    Global,
    Function,
    Metadata,       // reference to a numbered metadata node, e.g. `!14`
    InlineMetadata, // `!DIExpression()` written in place
    MetadataValue,  // `metadata i32* %2`
    Undef,
    ConstantExpr,   // getelementptr/bitcast/ptrtoint/inttoptr over constants
    Aggregate,      // `{ i32 1, i32 2 }` or `[2 x i32] [...]` (global initializers)
    Bytes,          // c"..." (global initializers)
    Zero,           // zeroinitializer
  };

  Kind kind = Kind::Undef;
  std::uint64_t integer = 0;   // Integer: two's complement bits, reduced to `bits`
  unsigned bits = 0;
  std::string name;            // Register/Global/Function name; Bytes payload
  Register reg;
  MetadataId metadata;
  std::shared_ptr<const MetadataNode> inlineNode;
  std::shared_ptr<const Operand> wrapped;               // MetadataValue
  std::shared_ptr<const Instruction> expr;              // ConstantExpr
  std::vector<Operand> elements;                        // Aggregate

  static ValueRef makeInteger(std::uint64_t value, unsigned bits);
  static ValueRef makeNull();
  static ValueRef makeUndef();
  static ValueRef makeRegister(Register reg);
  static ValueRef makeGlobal(std::string name);
  static ValueRef makeFunction(std::string name);
  static ValueRef makeMetadata(MetadataId id);

  std::int64_t signedInteger() const;

  friend bool operator==(const ValueRef& a, const ValueRef& b);
};

struct Operand {
  Type type;
  ValueRef value;
  friend bool operator==(const Operand&, const Operand&) = default;
};

enum class Opcode : std::uint8_t {
  Alloca,
  Load,
  Store,
  Add,
  Sub,
  Mul,
  SDiv,
  UDiv,
  SRem,
  URem,
  And,
  Or,
  Xor,
  Shl,
  AShr,
  LShr,
  ICmp,
  Call,
  GetElementPtr,
  ZExt,
  SExt,
  Trunc,
  BitCast,
  PtrToInt,
  IntToPtr,
  Select,
};

enum class ICmpPredicate : std::uint8_t { Eq, Ne, Slt, Sle, Sgt, Sge, Ult, Ule, Ugt, Uge };

const char* opcodeName(Opcode op);
const char* predicateName(ICmpPredicate pred);
bool isBinaryOp(Opcode op);
bool isCast(Opcode op);

struct Instruction {
  Opcode op = Opcode::Add;
  ICmpPredicate predicate = ICmpPredicate::Eq;
  // Call: operands[0] is the callee, the rest are arguments.
  // Store: operands = {value, address}. GEP: operands = {base, indices...}.
  std::vector<Operand> operands;
  std::optional<Register> result;
  Type resultType;
  // Alloca: allocated type. GEP: source element type. Call: callee signature.
  Type elementType;
  std::optional<MetadataId> dbg;
  TextPos pos;

  bool producesValue() const { return result.has_value(); }
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct PhiIncoming {
  std::string predecessor;
  ValueRef value;
  friend bool operator==(const PhiIncoming&, const PhiIncoming&) = default;
};

struct PhiInstruction {
  Register result;
  Type type;
  std::vector<PhiIncoming> incoming;
  std::optional<MetadataId> dbg;
  TextPos pos;

  const ValueRef* incomingFrom(const std::string& predecessor) const;
  friend bool operator==(const PhiInstruction&, const PhiInstruction&) = default;
};

struct Terminator {
  enum class Kind : std::uint8_t { Branch, CondBranch, Switch, Return, Unreachable };
  Kind kind = Kind::Unreachable;
  std::optional<Operand> value;          // condition, switch selector or return value
  std::vector<std::string> targets;      // Branch: {dest}; CondBranch: {ifTrue, ifFalse}; Switch: {default, cases...}
  std::vector<Operand> cases;            // Switch: case values, parallel to targets[1..]
  std::vector<std::size_t> targetIndex;  // resolved block indices, parallel to targets
  std::optional<MetadataId> dbg;
  TextPos pos;
  friend bool operator==(const Terminator&, const Terminator&) = default;
};

struct BasicBlock {
  std::string label;
  std::vector<PhiInstruction> phis;
  std::vector<Instruction> body;
  Terminator terminator;
  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

struct Parameter {
  Register reg;
  Type type;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct IrFunction {
  std::string irName;
  Type returnType;
  std::vector<Parameter> params;
  bool varargs = false;
  std::vector<BasicBlock> blocks;  // empty for declarations
  std::optional<MetadataId> subprogramRef;
  std::uint32_t registerCount = 0;

  bool isDeclaration() const { return blocks.empty(); }
  std::optional<std::size_t> blockIndex(const std::string& label) const;
  friend bool operator==(const IrFunction&, const IrFunction&) = default;
};

struct GlobalVariable {
  std::string name;
  Type valueType;
  std::optional<Operand> initializer;  // absent for external declarations
  bool isConstant = false;
  std::vector<MetadataId> dbgRefs;     // DIGlobalVariableExpression attachments
  TextPos pos;
  friend bool operator==(const GlobalVariable&, const GlobalVariable&) = default;
};

struct MetadataValue {
  enum class Kind : std::uint8_t { String, Integer, Symbol, Ref, Null, Node, Tuple, Typed };
  Kind kind = Kind::Null;
  std::string text;       // String payload, Symbol spelling (DW_ATE_signed, a | b), Typed type
  std::int64_t integer = 0;
  MetadataId ref;
  std::shared_ptr<const MetadataNode> node;
  std::vector<MetadataValue> items;
  friend bool operator==(const MetadataValue& a, const MetadataValue& b);
};

struct MetadataNode {
  std::string kind;  // verbatim, e.g. "DILocation" or "Location"; empty for `!{...}` tuples
  bool distinct = false;
  // Verbatim attribute names in source order. Positional arguments (as in
  // DIExpression) have an empty name. Tuples keep their elements here too.
  std::vector<std::pair<std::string, MetadataValue>> attributes;

  const MetadataValue* find(std::string_view name) const;
  bool isTuple() const { return kind.empty(); }
  friend bool operator==(const MetadataNode&, const MetadataNode&) = default;
};

struct IrModule {
  std::string sourceFilename;
  std::string originName;
  std::map<std::string, std::optional<Type>> namedTypes;  // nullopt = opaque
  std::vector<GlobalVariable> globals;
  std::vector<IrFunction> functions;
  std::map<MetadataId, MetadataNode> metadata;
  std::map<std::string, std::vector<MetadataId>> namedMetadata;

  const IrFunction* findFunction(std::string_view name) const;
  const GlobalVariable* findGlobal(std::string_view name) const;
  // Throws UnknownMetadataError when absent.
  const MetadataNode& lookupMetadata(MetadataId id) const;
  const MetadataNode* findMetadata(MetadataId id) const;
  // Follows Named types to their bodies.
  Type resolve(const Type& t) const;

  friend bool operator==(const IrModule& a, const IrModule& b);
};

class UnknownMetadataError : public std::out_of_range {
 public:
  explicit UnknownMetadataError(MetadataId id);
  MetadataId id;
};

// Canonical textual form; parseModule(printModule(m)) is structurally equal to m.
std::string printModule(const IrModule& module);
std::string printType(const Type& type);

}  // namespace irdb
