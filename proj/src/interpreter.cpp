#include "irdb/interpreter.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "irdb/ir_parser.hpp"

namespace irdb {

// --- layout -----------------------------------------------------------------

std::uint64_t DataLayout::sizeOf(const Type& type) const {
  const Type t = module_.resolve(type);
  switch (t.kind()) {
    case Type::Kind::Integer:
      return integerBytes(t.bits());
    case Type::Kind::Pointer:
      return 8;
    case Type::Kind::Array:
      return t.length() * sizeOf(*t.element());
    case Type::Kind::Structure: {
      std::uint64_t offset = 0;
      for (const auto& m : t.members()) {
        if (!t.packed()) {
          const auto a = alignOf(m);
          offset = (offset + a - 1) / a * a;
        }
        offset += sizeOf(m);
      }
      const auto a = alignOf(t);
      return (offset + a - 1) / a * a;
    }
    case Type::Kind::Named:
      throw InterpreterBug("size of opaque type %" + t.name());
    default:
      throw InterpreterBug("type " + printType(t) + " has no size");
  }
}

std::uint64_t DataLayout::alignOf(const Type& type) const {
  const Type t = module_.resolve(type);
  switch (t.kind()) {
    case Type::Kind::Integer:
      return integerBytes(t.bits());
    case Type::Kind::Pointer:
      return 8;
    case Type::Kind::Array:
      return alignOf(*t.element());
    case Type::Kind::Structure: {
      if (t.packed()) return 1;
      std::uint64_t a = 1;
      for (const auto& m : t.members()) a = std::max(a, alignOf(m));
      return a;
    }
    default:
      throw InterpreterBug("type " + printType(t) + " has no alignment");
  }
}

std::uint64_t DataLayout::fieldOffset(const Type& structType, std::size_t field) const {
  const Type t = module_.resolve(structType);
  if (!t.is(Type::Kind::Structure) || field >= t.members().size()) {
    throw InterpreterBug("field " + std::to_string(field) + " of " + printType(t));
  }
  std::uint64_t offset = 0;
  for (std::size_t i = 0;; ++i) {
    const auto& m = t.members()[i];
    if (!t.packed()) {
      const auto a = alignOf(m);
      offset = (offset + a - 1) / a * a;
    }
    if (i == field) return offset;
    offset += sizeOf(m);
  }
}

// --- frames and outcomes ----------------------------------------------------

std::optional<MetadataId> Frame::currentDbg() const {
  if (atTerminator()) return currentBlock().terminator.dbg;
  return currentBlock().body[index].dbg;
}

int ExecutionOutcome::exitCode() const {
  if (trapped()) return 1;
  return value ? static_cast<int>(value->raw & 0xff) : 0;
}

const HostFunction* HostRegistry::find(const std::string& name) const {
  auto it = functions_.find(name);
  return it == functions_.end() ? nullptr : &it->second;
}

namespace {

bool isDbgCall(const Instruction& inst) {
  return inst.op == Opcode::Call && inst.operands[0].value.kind == ValueRef::Kind::Function &&
         isDbgIntrinsicName(inst.operands[0].value.name);
}

std::uint64_t readLittleEndian(std::span<const std::uint8_t> bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = std::min<std::size_t>(bytes.size(), 8); i-- > 0;) v = (v << 8) | bytes[i];
  return v;
}

void writeLittleEndian(std::uint8_t* out, std::uint64_t value, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::uint8_t>(value & 0xff);
    value >>= 8;
  }
}

}  // namespace

// --- interpreter ------------------------------------------------------------

Interpreter::Interpreter(const IrModule& module, DescriptorBuilder& builder, HostRegistry host)
    : module_(module), builder_(builder), host_(std::move(host)), layout_(module) {
  for (std::size_t i = 0; i < module_.functions.size(); ++i) {
    functionAddresses_[module_.functions[i].irName] = Memory::kCodeBase + 16 * i;
    functionsByIndex_.push_back(&module_.functions[i]);
  }
  initializeGlobals();
}

void Interpreter::initializeGlobals() {
  for (const auto& g : module_.globals) {
    globals_[g.name] = memory_.allocate(Region::Global, layout_.sizeOf(g.valueType), layout_.alignOf(g.valueType));
  }
  for (const auto& g : module_.globals) {
    if (!g.initializer) continue;
    writeConstant(globals_[g.name], g.valueType, g.initializer->value);
  }
  for (const auto& g : module_.globals) {
    if (g.isConstant) memory_.markReadOnly(globals_[g.name]);
  }
}

void Interpreter::writeConstant(std::uint64_t address, const Type& type, const ValueRef& value) {
  const Type t = module_.resolve(type);
  switch (value.kind) {
    case ValueRef::Kind::Null:
    case ValueRef::Kind::Zero:
    case ValueRef::Kind::Undef:
      return;  // storage starts zeroed
    case ValueRef::Kind::Bytes: {
      std::vector<std::uint8_t> bytes(value.name.begin(), value.name.end());
      bytes.resize(layout_.sizeOf(t), 0);
      memory_.write(address, bytes);
      return;
    }
    case ValueRef::Kind::Aggregate:
      for (std::size_t i = 0; i < value.elements.size(); ++i) {
        const auto& el = value.elements[i];
        const std::uint64_t offset = t.is(Type::Kind::Structure) ? layout_.fieldOffset(t, i)
                                                                 : i * layout_.sizeOf(*t.element());
        writeConstant(address + offset, el.type, el.value);
      }
      return;
    default:
      store(t, address, evaluate(nullptr, Operand{t, value}));
  }
}

std::uint64_t Interpreter::globalAddress(const std::string& name) const {
  auto it = globals_.find(name);
  if (it != globals_.end()) return it->second;
  if (auto f = functionAddresses_.find(name); f != functionAddresses_.end()) return f->second;
  throw InterpreterBug("unknown global @" + name);
}

std::uint64_t Interpreter::functionAddress(const std::string& name) const {
  auto it = functionAddresses_.find(name);
  if (it == functionAddresses_.end()) throw InterpreterBug("unknown function @" + name);
  return it->second;
}

const IrFunction* Interpreter::functionAt(std::uint64_t address) const {
  if (Memory::regionOf(address) != Region::Code || (address - Memory::kCodeBase) % 16 != 0) return nullptr;
  const auto index = (address - Memory::kCodeBase) / 16;
  return index < functionsByIndex_.size() ? functionsByIndex_[index] : nullptr;
}

std::uint64_t Interpreter::newForeignHandle() {
  const auto h = nextForeign_;
  nextForeign_ += 16;
  return h;
}

std::string Interpreter::readCString(std::uint64_t address, std::size_t limit) const {
  std::string out;
  for (std::size_t i = 0; i < limit; ++i) {
    const auto b = memory_.read(address + i, 1)[0];
    if (b == 0) break;
    out.push_back(static_cast<char>(b));
  }
  return out;
}

void Interpreter::emitOutput(std::string_view text) {
  if (output_) {
    output_(text);
  } else {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
  }
}

Frame* Interpreter::frameById(int id) {
  for (auto& f : frames_) {
    if (f->id == id) return f.get();
  }
  return nullptr;
}

std::string Interpreter::sourceName(const IrFunction& fn) {
  if (fn.subprogramRef) {
    try {
      return builder_.buildScope(module_, *fn.subprogramRef).name;
    } catch (const std::exception&) {
    }
  }
  return fn.irName;
}

std::optional<LocationDescriptor> Interpreter::locationOf(std::optional<MetadataId> dbg) {
  if (!dbg) return std::nullopt;
  try {
    return builder_.buildLocation(module_, *dbg);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<StackEntry> Interpreter::stackTrace() {
  std::vector<StackEntry> out;
  for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
    const Frame& f = **it;
    auto dbg = f.currentDbg();
    if (!dbg) dbg = f.lastLocation;
    out.push_back({sourceName(*f.function), locationOf(dbg)});
  }
  return out;
}

// --- values -----------------------------------------------------------------

RuntimeValue Interpreter::registerValue(const Frame& frame, const Register& reg) const {
  if (reg.slot >= frame.registers.size() || !frame.registers[reg.slot]) {
    throw InterpreterBug("register %" + reg.name + " read before it was written");
  }
  return *frame.registers[reg.slot];
}

RuntimeValue Interpreter::zeroOf(const Type& type) const {
  const Type t = module_.resolve(type);
  if (t.isInteger()) return RuntimeValue::integer(0, t.bits());
  if (t.isPointer()) return RuntimeValue::pointer(0);
  if (t.is(Type::Kind::Array) || t.is(Type::Kind::Structure)) {
    return RuntimeValue::aggregate(std::vector<std::uint8_t>(layout_.sizeOf(t), 0));
  }
  return RuntimeValue::integer(0, 0);
}

RuntimeValue Interpreter::evaluate(const Frame* frame, const Operand& operand) {
  const ValueRef& v = operand.value;
  switch (v.kind) {
    case ValueRef::Kind::Integer: {
      const Type t = module_.resolve(operand.type);
      if (t.isPointer()) return RuntimeValue::pointer(v.integer);
      return RuntimeValue::integer(v.integer, t.isInteger() ? t.bits() : v.bits);
    }
    case ValueRef::Kind::Null:
      return RuntimeValue::pointer(0);
    case ValueRef::Kind::Register:
      if (!frame) throw InterpreterBug("register operand outside a frame");
      return registerValue(*frame, v.reg);
    case ValueRef::Kind::Global:
      return RuntimeValue::pointer(globalAddress(v.name));
    case ValueRef::Kind::Function:
      return RuntimeValue::pointer(functionAddress(v.name));
    case ValueRef::Kind::Undef:
    case ValueRef::Kind::Zero:
      return zeroOf(operand.type);
    case ValueRef::Kind::ConstantExpr:
      return evaluateExpression(frame, *v.expr);
    case ValueRef::Kind::MetadataValue:
      return evaluate(frame, *v.wrapped);
    case ValueRef::Kind::Aggregate:
    case ValueRef::Kind::Bytes: {
      // Materialize through a scratch global so nested constants share one path.
      const auto size = layout_.sizeOf(operand.type);
      const auto scratch = memory_.allocate(Region::Global, size, layout_.alignOf(operand.type));
      writeConstant(scratch, operand.type, v);
      auto bytes = memory_.read(scratch, size);
      memory_.release(scratch);
      return RuntimeValue::aggregate(std::move(bytes));
    }
    case ValueRef::Kind::Metadata:
    case ValueRef::Kind::InlineMetadata:
      break;
  }
  throw InterpreterBug("metadata used as a runtime value");
}

RuntimeValue Interpreter::evaluateExpression(const Frame* frame, const Instruction& inst) {
  if (inst.op == Opcode::GetElementPtr) return RuntimeValue::pointer(gep(frame, inst));
  if (isCast(inst.op)) {
    return cast(inst.op, evaluate(frame, inst.operands[0]), inst.operands[0].type, inst.resultType);
  }
  throw InterpreterBug(std::string("unsupported constant expression ") + opcodeName(inst.op));
}

RuntimeValue Interpreter::decode(const Type& type, std::span<const std::uint8_t> bytes) const {
  const Type t = module_.resolve(type);
  if (t.isInteger()) return RuntimeValue::integer(readLittleEndian(bytes), t.bits());
  if (t.isPointer()) return RuntimeValue::pointer(readLittleEndian(bytes));
  return RuntimeValue::aggregate({bytes.begin(), bytes.end()});
}

std::vector<std::uint8_t> Interpreter::encode(const Type& type, const RuntimeValue& value) const {
  const Type t = module_.resolve(type);
  const auto size = layout_.sizeOf(t);
  std::vector<std::uint8_t> out(size, 0);
  if (value.kind == RuntimeValue::Kind::Aggregate) {
    std::copy_n(value.bytes.begin(), std::min<std::size_t>(size, value.bytes.size()), out.begin());
  } else {
    writeLittleEndian(out.data(), value.raw, std::min<std::size_t>(size, 8));
  }
  return out;
}

RuntimeValue Interpreter::load(const Type& type, std::uint64_t address) const {
  const auto bytes = memory_.read(address, layout_.sizeOf(type));
  return decode(type, bytes);
}

void Interpreter::store(const Type& type, std::uint64_t address, const RuntimeValue& value) {
  memory_.write(address, encode(type, value));
}

// --- execution --------------------------------------------------------------

void Interpreter::start(const std::string& entry, std::vector<RuntimeValue> args) {
  const IrFunction* fn = module_.findFunction(entry);
  if (!fn || fn->isDeclaration()) throw std::invalid_argument("no function @" + entry + " defined in the module");
  while (!frames_.empty()) {
    for (auto a : frames_.back()->allocations) memory_.release(a);
    frames_.pop_back();
  }
  outcome_ = {};
  state_ = State::Running;
  pushFrame(*fn, std::move(args));
}

void Interpreter::startMain(const std::string& entry, const std::vector<std::string>& programArgs) {
  const IrFunction* fn = module_.findFunction(entry);
  if (!fn || fn->isDeclaration()) throw std::invalid_argument("no function @" + entry + " defined in the module");
  std::vector<RuntimeValue> args;
  for (const auto& p : fn->params) args.push_back(zeroOf(p.type));
  if (fn->params.size() >= 2 && module_.resolve(fn->params[0].type).isInteger() &&
      module_.resolve(fn->params[1].type).isPointer()) {
    std::vector<std::string> argv{module_.originName.empty() ? "program" : module_.originName};
    argv.insert(argv.end(), programArgs.begin(), programArgs.end());
    const auto table = memory_.allocate(Region::Heap, 8 * (argv.size() + 1), 8);
    for (std::size_t i = 0; i < argv.size(); ++i) {
      const auto s = memory_.allocate(Region::Heap, argv[i].size() + 1, 1);
      memory_.write(s, std::vector<std::uint8_t>(argv[i].begin(), argv[i].end()));
      std::uint8_t ptr[8];
      writeLittleEndian(ptr, s, 8);
      memory_.write(table + 8 * i, ptr);
    }
    args[0] = RuntimeValue::integer(argv.size(), module_.resolve(fn->params[0].type).bits());
    args[1] = RuntimeValue::pointer(table);
  } else {
    // Other entry points take their integer parameters from the program arguments.
    for (std::size_t i = 0; i < fn->params.size() && i < programArgs.size(); ++i) {
      const Type& t = module_.resolve(fn->params[i].type);
      if (!t.isInteger()) throw std::invalid_argument("entry parameter " + std::to_string(i + 1) + " is not an integer");
      args[i] = RuntimeValue::integer(static_cast<std::uint64_t>(std::stoll(programArgs[i], nullptr, 0)), t.bits());
    }
  }
  start(entry, std::move(args));
}

ExecutionOutcome Interpreter::run() {
  while (state_ == State::Running) step();
  return outcome_;
}

ExecutionOutcome Interpreter::callFunction(const std::string& name, std::vector<RuntimeValue> args) {
  start(name, std::move(args));
  return run();
}

void Interpreter::step() {
  if (state_ != State::Running) throw std::logic_error("the program is not running");
  try {
    Frame& f = top();
    if (f.atTerminator()) {
      executeTerminator(f);
    } else {
      execute(f, *f.currentInstruction());
    }
  } catch (const Trap& t) {
    trap(t.what());
  }
}

void Interpreter::trap(const std::string& message) {
  outcome_ = {};
  outcome_.kind = ExecutionOutcome::Kind::Trapped;
  outcome_.message = message;
  outcome_.stack = stackTrace();
  state_ = State::Trapped;
}

void Interpreter::finish(std::optional<RuntimeValue> value) {
  while (!frames_.empty()) {
    if (frameExit_) frameExit_(*frames_.back());
    for (auto a : frames_.back()->allocations) memory_.release(a);
    frames_.pop_back();
  }
  outcome_ = {};
  outcome_.value = std::move(value);
  state_ = State::Finished;
}

void Interpreter::pushFrame(const IrFunction& fn, std::vector<RuntimeValue> args) {
  if (frames_.size() >= 20000) throw Trap("stack overflow in @" + fn.irName);
  if (args.size() < fn.params.size()) throw Trap("too few arguments in call to @" + fn.irName);
  auto frame = std::make_unique<Frame>();
  frame->id = nextFrameId_++;
  frame->function = &fn;
  frame->arguments = std::move(args);
  resetFrame(*frame);
  frames_.push_back(std::move(frame));
}

void Interpreter::resetFrame(Frame& frame) {
  for (auto a : frame.allocations) memory_.release(a);
  frame.allocations.clear();
  frame.registers.assign(frame.function->registerCount, std::nullopt);
  for (std::size_t i = 0; i < frame.function->params.size(); ++i) {
    frame.registers[frame.function->params[i].reg.slot] = frame.arguments[i];
  }
  frame.bindings.clear();
  frame.block = 0;
  frame.index = 0;
  frame.previousBlock.reset();
  frame.lastLocation.reset();
}

void Interpreter::popFrame(std::optional<RuntimeValue> result) {
  if (frames_.size() == 1) {
    finish(std::move(result));
    return;
  }
  if (frameExit_) frameExit_(*frames_.back());
  for (auto a : frames_.back()->allocations) memory_.release(a);
  frames_.pop_back();
  Frame& caller = top();
  const Instruction* call = caller.currentInstruction();
  if (call && call->result) {
    const Type t = module_.resolve(call->resultType);
    RuntimeValue v = result ? *result : zeroOf(t);
    if (t.isInteger() && v.kind == RuntimeValue::Kind::Integer) v = RuntimeValue::integer(v.raw, t.bits());
    caller.registers[call->result->slot] = v;
  }
  ++caller.index;
}

void Interpreter::restartFrame(std::size_t index) {
  if (index >= frames_.size()) throw std::out_of_range("no frame at depth " + std::to_string(index));
  while (frames_.size() > index + 1) {
    if (frameExit_) frameExit_(*frames_.back());
    for (auto a : frames_.back()->allocations) memory_.release(a);
    frames_.pop_back();
  }
  if (frameExit_) frameExit_(*frames_.back());
  resetFrame(*frames_.back());
  outcome_ = {};
  state_ = State::Running;
}

void Interpreter::blockTransfer(Frame& frame, std::size_t from, std::size_t to) {
  const auto& target = frame.function->blocks.at(to);
  const auto& fromLabel = frame.function->blocks.at(from).label;
  // All incoming values are read before any phi is written.
  std::vector<RuntimeValue> values;
  values.reserve(target.phis.size());
  for (const auto& phi : target.phis) {
    const ValueRef* in = phi.incomingFrom(fromLabel);
    if (!in) throw InterpreterBug("phi %" + phi.result.name + " has no incoming value for %" + fromLabel);
    values.push_back(evaluate(&frame, Operand{phi.type, *in}));
  }
  for (std::size_t i = 0; i < target.phis.size(); ++i) frame.registers[target.phis[i].result.slot] = values[i];
  frame.previousBlock = from;
  frame.block = to;
  frame.index = 0;
}

void Interpreter::executeTerminator(Frame& frame) {
  const Terminator& t = frame.currentBlock().terminator;
  if (t.dbg) frame.lastLocation = t.dbg;
  switch (t.kind) {
    case Terminator::Kind::Branch:
      blockTransfer(frame, frame.block, t.targetIndex[0]);
      return;
    case Terminator::Kind::CondBranch: {
      const bool taken = (evaluate(&frame, *t.value).raw & 1) != 0;
      blockTransfer(frame, frame.block, t.targetIndex[taken ? 0 : 1]);
      return;
    }
    case Terminator::Kind::Switch: {
      const auto selector = evaluate(&frame, *t.value).raw;
      std::size_t target = t.targetIndex[0];
      for (std::size_t i = 0; i < t.cases.size(); ++i) {
        if (evaluate(&frame, t.cases[i]).raw == selector) {
          target = t.targetIndex[i + 1];
          break;
        }
      }
      blockTransfer(frame, frame.block, target);
      return;
    }
    case Terminator::Kind::Return: {
      std::optional<RuntimeValue> value;
      if (t.value) value = evaluate(&frame, *t.value);
      popFrame(std::move(value));
      return;
    }
    case Terminator::Kind::Unreachable:
      throw Trap("unreachable code reached in @" + frame.function->irName);
  }
}

void Interpreter::execute(Frame& frame, const Instruction& inst) {
  if (inst.op == Opcode::Call) {
    if (inst.dbg && !isDbgCall(inst)) frame.lastLocation = inst.dbg;
    executeCall(frame, inst);
    return;
  }
  if (inst.dbg) frame.lastLocation = inst.dbg;
  RuntimeValue result;
  switch (inst.op) {
    case Opcode::Alloca: {
      std::uint64_t count = 1;
      if (!inst.operands.empty()) count = evaluate(&frame, inst.operands[0]).raw;
      const auto address = memory_.allocate(Region::Stack, layout_.sizeOf(inst.elementType) * count,
                                            layout_.alignOf(inst.elementType));
      frame.allocations.push_back(address);
      result = RuntimeValue::pointer(address);
      break;
    }
    case Opcode::Load:
      result = load(inst.resultType, evaluate(&frame, inst.operands[0]).raw);
      break;
    case Opcode::Store:
      store(inst.operands[0].type, evaluate(&frame, inst.operands[1]).raw, evaluate(&frame, inst.operands[0]));
      break;
    case Opcode::ICmp: {
      const auto a = evaluate(&frame, inst.operands[0]);
      const auto b = evaluate(&frame, inst.operands[1]);
      const unsigned bits = a.isPointerLike() ? 64 : a.bits;
      const auto sa = signExtend(a.raw, bits), sb = signExtend(b.raw, bits);
      bool r = false;
      switch (inst.predicate) {
        case ICmpPredicate::Eq: r = a.raw == b.raw; break;
        case ICmpPredicate::Ne: r = a.raw != b.raw; break;
        case ICmpPredicate::Slt: r = sa < sb; break;
        case ICmpPredicate::Sle: r = sa <= sb; break;
        case ICmpPredicate::Sgt: r = sa > sb; break;
        case ICmpPredicate::Sge: r = sa >= sb; break;
        case ICmpPredicate::Ult: r = a.raw < b.raw; break;
        case ICmpPredicate::Ule: r = a.raw <= b.raw; break;
        case ICmpPredicate::Ugt: r = a.raw > b.raw; break;
        case ICmpPredicate::Uge: r = a.raw >= b.raw; break;
      }
      result = RuntimeValue::integer(r ? 1 : 0, 1);
      break;
    }
    case Opcode::GetElementPtr:
      result = RuntimeValue::pointer(gep(&frame, inst));
      break;
    case Opcode::Select: {
      const bool c = (evaluate(&frame, inst.operands[0]).raw & 1) != 0;
      result = evaluate(&frame, inst.operands[c ? 1 : 2]);
      break;
    }
    default:
      if (isBinaryOp(inst.op)) {
        result = binary(inst.op, evaluate(&frame, inst.operands[0]), evaluate(&frame, inst.operands[1]),
                        module_.resolve(inst.resultType).bits());
      } else if (isCast(inst.op)) {
        result = cast(inst.op, evaluate(&frame, inst.operands[0]), inst.operands[0].type, inst.resultType);
      } else {
        throw InterpreterBug(std::string("unhandled opcode ") + opcodeName(inst.op));
      }
  }
  if (inst.result) frame.registers[inst.result->slot] = std::move(result);
  ++frame.index;
}

RuntimeValue Interpreter::binary(Opcode op, const RuntimeValue& a, const RuntimeValue& b, unsigned bits) {
  const std::uint64_t ua = a.raw, ub = b.raw;
  const std::int64_t sa = signExtend(ua, bits), sb = signExtend(ub, bits);
  const std::int64_t minValue = bits >= 64 ? std::numeric_limits<std::int64_t>::min()
                                           : -(std::int64_t{1} << (bits - 1));
  auto r = [bits](std::uint64_t v) { return RuntimeValue::integer(v, bits); };
  switch (op) {
    case Opcode::Add: return r(ua + ub);
    case Opcode::Sub: return r(ua - ub);
    case Opcode::Mul: return r(ua * ub);
    case Opcode::SDiv:
    case Opcode::SRem:
      if (sb == 0) throw Trap("division by zero");
      if (sa == minValue && sb == -1) throw Trap("signed division overflow");
      return r(static_cast<std::uint64_t>(op == Opcode::SDiv ? sa / sb : sa % sb));
    case Opcode::UDiv:
    case Opcode::URem:
      if (ub == 0) throw Trap("division by zero");
      return r(op == Opcode::UDiv ? ua / ub : ua % ub);
    case Opcode::And: return r(ua & ub);
    case Opcode::Or: return r(ua | ub);
    case Opcode::Xor: return r(ua ^ ub);
    case Opcode::Shl: return r(ub >= bits ? 0 : ua << ub);
    case Opcode::LShr: return r(ub >= bits ? 0 : ua >> ub);
    case Opcode::AShr:
      return r(static_cast<std::uint64_t>(ub >= bits ? (sa < 0 ? -1 : 0) : sa >> ub));
    default:
      throw InterpreterBug(std::string("not a binary operation: ") + opcodeName(op));
  }
}

RuntimeValue Interpreter::cast(Opcode op, const RuntimeValue& v, const Type& from, const Type& to) const {
  const Type target = module_.resolve(to);
  const unsigned fromBits = v.isPointerLike() ? 64 : v.bits;
  (void)from;
  switch (op) {
    case Opcode::ZExt:
    case Opcode::Trunc:
    case Opcode::PtrToInt:
      return RuntimeValue::integer(truncateBits(v.raw, fromBits), target.bits());
    case Opcode::SExt:
      return RuntimeValue::integer(static_cast<std::uint64_t>(signExtend(v.raw, fromBits)), target.bits());
    case Opcode::IntToPtr:
      return RuntimeValue::pointer(truncateBits(v.raw, fromBits));
    case Opcode::BitCast:
      if (target.isPointer()) return RuntimeValue::pointer(v.raw);
      if (target.isInteger()) return RuntimeValue::integer(v.raw, target.bits());
      return v;
    default:
      throw InterpreterBug(std::string("not a cast: ") + opcodeName(op));
  }
}

std::uint64_t Interpreter::gep(const Frame* frame, const Instruction& inst) {
  std::uint64_t address = evaluate(frame, inst.operands[0]).raw;
  Type current = inst.elementType;
  for (std::size_t k = 1; k < inst.operands.size(); ++k) {
    const auto idxValue = evaluate(frame, inst.operands[k]);
    const auto idx = signExtend(idxValue.raw, idxValue.bits);
    if (k == 1) {
      address += static_cast<std::uint64_t>(idx) * layout_.sizeOf(current);
      continue;
    }
    const Type t = module_.resolve(current);
    if (t.is(Type::Kind::Structure)) {
      address += layout_.fieldOffset(t, static_cast<std::size_t>(idx));
      current = t.members()[static_cast<std::size_t>(idx)];
    } else if (t.is(Type::Kind::Array)) {
      current = *t.element();
      address += static_cast<std::uint64_t>(idx) * layout_.sizeOf(current);
    } else {
      throw InterpreterBug("getelementptr index into " + printType(t));
    }
  }
  return address;
}

void Interpreter::executeCall(Frame& frame, const Instruction& inst) {
  const Operand& calleeOp = inst.operands[0];
  const IrFunction* fn = nullptr;
  if (calleeOp.value.kind == ValueRef::Kind::Function) {
    fn = module_.findFunction(calleeOp.value.name);
  } else {
    const auto target = evaluate(&frame, calleeOp);
    if (target.kind == RuntimeValue::Kind::Foreign) {
      // A foreign callable: the simulated foreign function does nothing.
      if (inst.result) frame.registers[inst.result->slot] = zeroOf(inst.resultType);
      ++frame.index;
      return;
    }
    fn = functionAt(target.raw);
    if (!fn) {
      char buf[80];
      std::snprintf(buf, sizeof buf, "call through invalid function pointer 0x%llx",
                    static_cast<unsigned long long>(target.raw));
      throw Trap(buf);
    }
  }
  if (!fn) throw Trap("call to undefined function @" + calleeOp.value.name);

  if (isDbgIntrinsicName(fn->irName)) {
    if (dbgObserver_) dbgObserver_(frame, inst);
    ++frame.index;
    return;
  }
  std::vector<RuntimeValue> args;
  args.reserve(inst.operands.size() - 1);
  for (std::size_t i = 1; i < inst.operands.size(); ++i) args.push_back(evaluate(&frame, inst.operands[i]));

  if (!fn->isDeclaration()) {
    pushFrame(*fn, std::move(args));
    return;
  }
  if (executeBuiltin(frame, inst, fn->irName, args)) {
    ++frame.index;
    return;
  }
  const HostFunction* host = host_.find(fn->irName);
  if (!host) throw Trap("call to undefined function @" + fn->irName);
  HostCallResult r = (*host)(*this, args);
  if (r.exitCode) {
    finish(RuntimeValue::integer(static_cast<std::uint64_t>(*r.exitCode), 32));
    return;
  }
  if (r.guestCallee) {
    const IrFunction* guest = functionAt(*r.guestCallee);
    if (!guest || guest->isDeclaration()) throw Trap("host callback to a non-guest function");
    pushFrame(*guest, std::move(r.guestArgs));
    return;
  }
  if (inst.result) {
    const Type t = module_.resolve(inst.resultType);
    RuntimeValue v = r.value ? *r.value : zeroOf(t);
    if (t.isInteger()) v = RuntimeValue::integer(v.raw, t.bits());
    if (t.isPointer()) v = RuntimeValue::pointer(v.raw);
    frame.registers[inst.result->slot] = v;
  }
  ++frame.index;
}

bool Interpreter::executeBuiltin(Frame&, const Instruction&, const std::string& name,
                                 std::vector<RuntimeValue>& args) {
  if (name.rfind("llvm.lifetime.", 0) == 0) return true;
  if (name.rfind("llvm.memcpy.", 0) == 0 || name.rfind("llvm.memmove.", 0) == 0) {
    if (args[2].raw == 0) return true;
    const auto bytes = memory_.read(args[1].raw, args[2].raw);
    memory_.write(args[0].raw, bytes);
    return true;
  }
  if (name.rfind("llvm.memset.", 0) == 0) {
    if (args[2].raw == 0) return true;
    const std::vector<std::uint8_t> bytes(args[2].raw, static_cast<std::uint8_t>(args[1].raw));
    memory_.write(args[0].raw, bytes);
    return true;
  }
  return false;
}

}  // namespace irdb
