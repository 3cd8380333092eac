#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "irdb/bindings.hpp"
#include "irdb/debug_meta.hpp"
#include "irdb/ir_model.hpp"
#include "irdb/memory.hpp"

namespace irdb {

// x86-64-like layout: little-endian, integers aligned to their size,
// 8-byte pointers, struct fields padded to member alignment.
class DataLayout {
 public:
  explicit DataLayout(const IrModule& module) : module_(module) {}

  std::uint64_t sizeOf(const Type& type) const;
  std::uint64_t alignOf(const Type& type) const;
  std::uint64_t fieldOffset(const Type& structType, std::size_t field) const;
  // Bytes used to store an integer of `bits` width.
  static std::uint64_t integerBytes(unsigned bits) { return bits <= 8 ? 1 : bits <= 16 ? 2 : bits <= 32 ? 4 : 8; }

 private:
  const IrModule& module_;
};

struct Frame {
  int id = 0;
  const IrFunction* function = nullptr;
  std::vector<RuntimeValue> arguments;  // as passed; restart re-uses them
  std::vector<std::optional<RuntimeValue>> registers;
  std::vector<std::uint64_t> allocations;
  std::size_t block = 0;
  std::size_t index = 0;  // index into body; body.size() means the terminator
  std::optional<std::size_t> previousBlock;
  BindingMap bindings;
  std::optional<MetadataId> lastLocation;  // most recent executed !dbg

  const BasicBlock& currentBlock() const { return function->blocks[block]; }
  bool atTerminator() const { return index >= currentBlock().body.size(); }
  const Instruction* currentInstruction() const { return atTerminator() ? nullptr : &currentBlock().body[index]; }
  std::optional<MetadataId> currentDbg() const;
};

struct StackEntry {
  std::string function;  // source name when debug info exists, IR name otherwise
  std::optional<LocationDescriptor> location;
};

struct ExecutionOutcome {
  enum class Kind : std::uint8_t { Returned, Trapped };
  Kind kind = Kind::Returned;
  std::optional<RuntimeValue> value;  // empty for void returns
  std::string message;
  std::vector<StackEntry> stack;  // callee first

  bool trapped() const { return kind == Kind::Trapped; }
  // Process exit status: low 8 bits of the returned integer, 1 for traps.
  int exitCode() const;
};

class Interpreter;

struct HostCallResult {
  std::optional<RuntimeValue> value;
  // Set when the host function hands control to a guest function; its return
  // value becomes the result of the host call.
  std::optional<std::uint64_t> guestCallee;
  std::vector<RuntimeValue> guestArgs;
  std::optional<int> exitCode;
};

using HostFunction = std::function<HostCallResult(Interpreter&, std::vector<RuntimeValue>& args)>;

class HostRegistry {
 public:
  void add(std::string name, HostFunction fn) { functions_[std::move(name)] = std::move(fn); }
  const HostFunction* find(const std::string& name) const;
  // printf/puts/putchar, malloc/calloc/realloc/free, abort/exit, and the
  // foreign-value producers used to simulate cross-language values.
  static HostRegistry standard();

 private:
  std::unordered_map<std::string, HostFunction> functions_;
};

class Interpreter {
 public:
  enum class State : std::uint8_t { Idle, Running, Finished, Trapped };
  using OutputSink = std::function<void(std::string_view)>;
  using DbgObserver = std::function<void(Frame&, const Instruction&)>;
  using FrameObserver = std::function<void(Frame&)>;

  Interpreter(const IrModule& module, DescriptorBuilder& builder, HostRegistry host = HostRegistry::standard());
  Interpreter(const Interpreter&) = delete;
  Interpreter& operator=(const Interpreter&) = delete;

  void setOutput(OutputSink sink) { output_ = std::move(sink); }
  void setDbgObserver(DbgObserver observer) { dbgObserver_ = std::move(observer); }
  // Invoked before a frame is popped (return or restart of a frame above).
  void setFrameExitObserver(FrameObserver observer) { frameExit_ = std::move(observer); }

  const IrModule& module() const { return module_; }
  DescriptorBuilder& builder() { return builder_; }
  Memory& memory() { return memory_; }
  const Memory& memory() const { return memory_; }
  const DataLayout& layout() const { return layout_; }
  State state() const { return state_; }
  const ExecutionOutcome& outcome() const { return outcome_; }

  // Pushes the entry frame. main(argc, argv) receives `programArgs` as argv.
  void start(const std::string& entry, std::vector<RuntimeValue> args);
  void startMain(const std::string& entry, const std::vector<std::string>& programArgs);
  // Executes the instruction (or terminator) at the top frame's position.
  void step();
  ExecutionOutcome run();
  ExecutionOutcome callFunction(const std::string& name, std::vector<RuntimeValue> args);

  // Frames bottom first; pointers stay valid until the frame is popped.
  const std::vector<std::unique_ptr<Frame>>& frames() const { return frames_; }
  Frame& top() { return *frames_.back(); }
  Frame* frameById(int id);
  // Discards frames above `index`, resets it and re-enters at its first block.
  void restartFrame(std::size_t index);

  void blockTransfer(Frame& frame, std::size_t from, std::size_t to);

  RuntimeValue registerValue(const Frame& frame, const Register& reg) const;
  RuntimeValue evaluate(const Frame* frame, const Operand& operand);
  RuntimeValue decode(const Type& type, std::span<const std::uint8_t> bytes) const;
  std::vector<std::uint8_t> encode(const Type& type, const RuntimeValue& value) const;
  RuntimeValue load(const Type& type, std::uint64_t address) const;
  void store(const Type& type, std::uint64_t address, const RuntimeValue& value);
  RuntimeValue zeroOf(const Type& type) const;

  std::uint64_t globalAddress(const std::string& name) const;
  std::uint64_t functionAddress(const std::string& name) const;
  const IrFunction* functionAt(std::uint64_t address) const;
  std::uint64_t newForeignHandle();
  std::string readCString(std::uint64_t address, std::size_t limit = 1 << 20) const;
  void emitOutput(std::string_view text);

  std::string sourceName(const IrFunction& fn);
  std::optional<LocationDescriptor> locationOf(std::optional<MetadataId> dbg);
  std::vector<StackEntry> stackTrace();

 private:
  void initializeGlobals();
  void writeConstant(std::uint64_t address, const Type& type, const ValueRef& value);
  RuntimeValue evaluateExpression(const Frame* frame, const Instruction& inst);
  void execute(Frame& frame, const Instruction& inst);
  void executeTerminator(Frame& frame);
  void executeCall(Frame& frame, const Instruction& inst);
  bool executeBuiltin(Frame& frame, const Instruction& inst, const std::string& name, std::vector<RuntimeValue>& args);
  void pushFrame(const IrFunction& fn, std::vector<RuntimeValue> args);
  void resetFrame(Frame& frame);
  void popFrame(std::optional<RuntimeValue> result);
  void finish(std::optional<RuntimeValue> value);
  void trap(const std::string& message);
  RuntimeValue binary(Opcode op, const RuntimeValue& a, const RuntimeValue& b, unsigned bits);
  RuntimeValue cast(Opcode op, const RuntimeValue& v, const Type& from, const Type& to) const;
  std::uint64_t gep(const Frame* frame, const Instruction& inst);

  const IrModule& module_;
  DescriptorBuilder& builder_;
  HostRegistry host_;
  DataLayout layout_;
  Memory memory_;
  std::unordered_map<std::string, std::uint64_t> globals_;
  std::unordered_map<std::string, std::uint64_t> functionAddresses_;
  std::vector<const IrFunction*> functionsByIndex_;
  std::uint64_t nextForeign_ = Memory::kForeignBase + 0x10;
  std::vector<std::unique_ptr<Frame>> frames_;
  int nextFrameId_ = 1;
  State state_ = State::Idle;
  ExecutionOutcome outcome_;
  OutputSink output_;
  DbgObserver dbgObserver_;
  FrameObserver frameExit_;
};

}  // namespace irdb
