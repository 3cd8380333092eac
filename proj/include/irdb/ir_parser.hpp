#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "irdb/ir_model.hpp"

namespace irdb {

// Syntax, SSA, or unsupported-construct error. line/column index the .ll text
// (1-based) and point at the offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::uint32_t line, std::uint32_t column, std::string message, std::string snippet);

  std::uint32_t line;
  std::uint32_t column;
  std::string message;
  std::string snippet;  // the offending source line
};

// Throws ParseError on the first violation.
IrModule parseModule(std::string_view source, std::string originName);
IrModule parseModuleFile(const std::string& path);

struct DbgIntrinsic {
  enum class Kind { Declare, Value };
  Kind kind = Kind::Value;
  Operand valueOperand;         // unwrapped `metadata <ty> <val>`
  MetadataId variableRef;
  std::optional<MetadataId> expressionRef;            // numbered DIExpression
  std::shared_ptr<const MetadataNode> expressionNode; // inline or resolved DIExpression
  bool expressionEmpty = true;
};

class MalformedIntrinsicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool isDbgIntrinsicName(std::string_view callee);

// Classifies calls to llvm.dbg.declare / llvm.dbg.value. Returns nullopt for
// any other instruction.
std::optional<DbgIntrinsic> parseIntrinsicCall(const IrModule& module, const Instruction& instr);

}  // namespace irdb
