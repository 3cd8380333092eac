#include "irdb/debug_engine.hpp"

#include <algorithm>
#include <set>

namespace irdb {

const char* resumeModeName(ResumeMode mode) {
  switch (mode) {
    case ResumeMode::Continue: return "continue";
    case ResumeMode::StepExpr: return "stepExpr";
    case ResumeMode::StepInto: return "stepInto";
    case ResumeMode::StepOver: return "stepOver";
    case ResumeMode::StepOut: return "stepOut";
  }
  return "continue";
}

const char* stopReasonName(StopEvent::Reason reason) {
  switch (reason) {
    case StopEvent::Reason::Entry: return "entry";
    case StopEvent::Reason::Breakpoint: return "breakpoint";
    case StopEvent::Reason::Step: return "step";
    case StopEvent::Reason::Pause: return "pause";
    case StopEvent::Reason::Trap: return "trap";
    case StopEvent::Reason::Exited: return "exited";
  }
  return "step";
}

bool sameLocation(const LocationDescriptor& a, const LocationDescriptor& b) {
  return a.line == b.line && a.column == b.column && a.file == b.file;
}

namespace {

bool pathMatches(const std::string& have, const std::string& requested) {
  if (have.empty() || requested.empty()) return false;
  if (have == requested) return true;
  const auto a = std::filesystem::path(have).lexically_normal().generic_string();
  const auto b = std::filesystem::path(requested).lexically_normal().generic_string();
  if (a == b) return true;
  auto endsWith = [](const std::string& s, const std::string& suffix) {
    return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0 &&
           s[s.size() - suffix.size() - 1] == '/';
  };
  return endsWith(a, b) || endsWith(b, a);
}

bool isDbgCall(const Instruction& inst) {
  return inst.op == Opcode::Call && inst.operands[0].value.kind == ValueRef::Kind::Function &&
         isDbgIntrinsicName(inst.operands[0].value.name);
}

bool isSourceLevelCall(const IrModule& module, const Instruction& inst) {
  if (inst.op != Opcode::Call) return false;
  const auto& callee = inst.operands[0].value;
  if (callee.kind != ValueRef::Kind::Function) return true;  // indirect: may reach guest code
  if (callee.name == "foreign_invoke") return true;
  const IrFunction* fn = module.findFunction(callee.name);
  return fn && !fn->isDeclaration() && fn->subprogramRef.has_value();
}

}  // namespace

bool fileMatches(const LocationDescriptor& location, const std::string& requested) {
  if (pathMatches(location.file, requested)) return true;
  return location.resolvedSource && pathMatches(location.resolvedSource->file->path(), requested);
}

// --- tags -------------------------------------------------------------------

TagTable::TagTable(const IrModule& module, DescriptorBuilder& builder) {
  for (const auto& fn : module.functions) {
    if (fn.isDeclaration()) continue;
    auto& blocks = table_[&fn];
    blocks.resize(fn.blocks.size());
    for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
      const auto& bb = fn.blocks[b];
      auto& infos = blocks[b];
      infos.resize(bb.body.size() + 1);
      const LocationDescriptor* previous = nullptr;
      auto mark = [&](std::size_t i, const std::optional<MetadataId>& dbg) {
        if (!dbg) return;
        const LocationDescriptor* loc = nullptr;
        try {
          loc = &builder.buildLocation(module, *dbg);
        } catch (const std::exception&) {
          return;
        }
        // Consecutive instructions of one expression form a single statement.
        if (!previous || !sameLocation(*previous, *loc)) {
          infos[i].tags |= kStatement;
          infos[i].location = loc;
          all_.push_back(loc);
        }
        previous = loc;
      };
      for (std::size_t i = 0; i < bb.body.size(); ++i) {
        const auto& inst = bb.body[i];
        if (isDbgCall(inst)) continue;
        if (isSourceLevelCall(module, inst)) infos[i].tags |= kCall;
        mark(i, inst.dbg);
      }
      mark(bb.body.size(), bb.terminator.dbg);
    }
    blocks[0][0].tags |= kRoot;
  }
}

const StatementInfo* TagTable::at(const IrFunction* fn, std::size_t block, std::size_t index) const {
  auto it = table_.find(fn);
  if (it == table_.end() || block >= it->second.size() || index >= it->second[block].size()) return nullptr;
  return &it->second[block][index];
}

bool TagTable::hasTag(const IrFunction* fn, std::size_t block, std::size_t index, TagBits tag) const {
  const auto* info = at(fn, block, index);
  return info && (info->tags & tag) != 0;
}

// --- engine -----------------------------------------------------------------

DebugEngine::DebugEngine(SourceRegistry& registry) : registry_(registry), builder_(registry) {}

DebugEngine::~DebugEngine() = default;

StopEvent DebugEngine::launch(std::shared_ptr<const IrModule> module, const std::string& entry,
                              const std::vector<std::string>& programArgs, bool stopOnEntry) {
  if (state_ != State::Idle) throw InvalidStateError("a program is already launched");
  module_ = std::move(module);
  builder_.indexModule(*module_);
  tags_ = std::make_unique<TagTable>(*module_, builder_);
  interpreter_ = std::make_unique<Interpreter>(*module_, builder_);
  interpreter_->setOutput([this](std::string_view text) {
    if (output_) {
      output_(text);
    } else {
      std::fwrite(text.data(), 1, text.size(), stdout);
    }
  });
  tracker_ = std::make_unique<ValueTracker>(*interpreter_, builder_);
  tracker_->attach();
  for (auto& bp : breakpoints_) resolve(bp);
  interpreter_->startMain(entry, programArgs);
  state_ = State::Running;
  return stopOnEntry ? runUntil(Target::AnyStatement, true, StopEvent::Reason::Entry)
                     : runUntil(Target::Continue, true, StopEvent::Reason::Step);
}

bool DebugEngine::canStep() {
  return state_ == State::Suspended && stopLocation_ && stopLocation_->hasSource();
}

StopEvent DebugEngine::resume(ResumeMode mode) {
  if (state_ != State::Suspended) throw InvalidStateError("the program is not suspended");
  if (mode != ResumeMode::Continue && !canStep()) {
    throw CannotStepError("no source is available for the current location; stepping is not possible");
  }
  if (interpreter_->state() == Interpreter::State::Trapped) {
    // Nothing can run after a trap; the session ends like a crashed process.
    state_ = State::Exited;
    lastStop_ = {};
    lastStop_.reason = StopEvent::Reason::Exited;
    lastStop_.exitCode = 1;
    return lastStop_;
  }
  state_ = State::Running;
  switch (mode) {
    case ResumeMode::Continue: return runUntil(Target::Continue, false, StopEvent::Reason::Step);
    case ResumeMode::StepExpr:
    case ResumeMode::StepInto: return runUntil(Target::StepExpr, false, StopEvent::Reason::Step);
    case ResumeMode::StepOver: return runUntil(Target::StepOver, false, StopEvent::Reason::Step);
    case ResumeMode::StepOut: return runUntil(Target::StepOut, false, StopEvent::Reason::Step);
  }
  return lastStop_;
}

StopEvent DebugEngine::restartFrame(int frameId) {
  if (state_ != State::Suspended) throw InvalidStateError("the program is not suspended");
  const auto& frames = interpreter_->frames();
  std::optional<std::size_t> index;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i]->id == frameId) index = i;
  }
  if (!index) throw InvalidFrameError("no frame with id " + std::to_string(frameId));
  interpreter_->restartFrame(*index);
  stopLocation_.reset();
  state_ = State::Running;
  return runUntil(Target::AnyStatement, true, StopEvent::Reason::Step);
}

const StatementInfo* DebugEngine::currentStatement() {
  const Frame& f = interpreter_->top();
  const StatementInfo* info = tags_->at(f.function, f.block, f.index);
  return info && (info->tags & kStatement) ? info : nullptr;
}

StopEvent DebugEngine::runUntil(Target target, bool checkCurrent, StopEvent::Reason stopReason) {
  const std::size_t startDepth = interpreter_->frames().size();
  const std::optional<LocationDescriptor> start = stopLocation_;
  bool first = !checkCurrent;
  for (;;) {
    switch (interpreter_->state()) {
      case Interpreter::State::Finished: {
        state_ = State::Exited;
        stopLocation_.reset();
        lastStop_ = {};
        lastStop_.reason = StopEvent::Reason::Exited;
        lastStop_.exitCode = interpreter_->outcome().exitCode();
        return lastStop_;
      }
      case Interpreter::State::Trapped: {
        StopEvent e;
        e.reason = StopEvent::Reason::Trap;
        e.description = interpreter_->outcome().message;
        const Frame& f = interpreter_->top();
        stopLocation_ = frameLocation(f);
        return suspend(e);
      }
      default:
        break;
    }
    if (!first) {
      if (const StatementInfo* s = currentStatement()) {
        const LocationDescriptor& loc = *s->location;
        if (const Breakpoint* bp = breakpointAt(loc)) {
          StopEvent e;
          e.reason = StopEvent::Reason::Breakpoint;
          e.breakpointId = bp->id;
          stopLocation_ = loc;
          return suspend(e);
        }
        if (pauseRequested_.exchange(false)) {
          StopEvent e;
          e.reason = StopEvent::Reason::Pause;
          stopLocation_ = loc;
          return suspend(e);
        }
        const std::size_t depth = interpreter_->frames().size();
        const bool moved = !start || !sameLocation(*start, loc);
        bool stop = false;
        switch (target) {
          case Target::AnyStatement: stop = true; break;
          case Target::Continue: break;
          case Target::StepExpr: stop = moved && loc.hasSource(); break;
          case Target::StepOver: stop = moved && depth <= startDepth && loc.hasSource(); break;
          case Target::StepOut: stop = depth < startDepth && loc.hasSource(); break;
        }
        if (stop) {
          StopEvent e;
          e.reason = stopReason;
          stopLocation_ = loc;
          return suspend(e);
        }
      }
    }
    first = false;
    interpreter_->step();
  }
}

StopEvent DebugEngine::suspend(StopEvent event) {
  state_ = State::Suspended;
  lastStop_ = std::move(event);
  return lastStop_;
}

void DebugEngine::resolve(Breakpoint& bp) {
  bp.resolvedTo.reset();
  if (!tags_) return;
  const LocationDescriptor* best = nullptr;
  for (const LocationDescriptor* loc : tags_->statementLocations()) {
    if (loc->line != bp.line || !fileMatches(*loc, bp.file)) continue;
    if (bp.column && loc->column < *bp.column) continue;
    if (!best || loc->column < best->column) best = loc;
  }
  if (best) bp.resolvedTo = *best;
}

const Breakpoint* DebugEngine::breakpointAt(const LocationDescriptor& location) const {
  for (const auto& bp : breakpoints_) {
    if (bp.enabled && bp.resolvedTo && sameLocation(*bp.resolvedTo, location)) return &bp;
  }
  return nullptr;
}

std::vector<Breakpoint> DebugEngine::setBreakpoints(const std::string& file,
                                                    const std::vector<BreakpointRequest>& requests) {
  std::vector<Breakpoint> previous;
  for (const auto& bp : breakpoints_) {
    if (bp.file == file) previous.push_back(bp);
  }
  std::erase_if(breakpoints_, [&](const Breakpoint& bp) { return bp.file == file; });
  std::vector<Breakpoint> out;
  for (const auto& r : requests) {
    Breakpoint bp;
    // A request repeating an existing position keeps that breakpoint's id.
    auto same = std::find_if(previous.begin(), previous.end(),
                             [&](const Breakpoint& p) { return p.line == r.line && p.column == r.column; });
    if (same != previous.end()) {
      bp.id = same->id;
      previous.erase(same);
    } else {
      bp.id = nextBreakpointId_++;
    }
    bp.file = file;
    bp.line = r.line;
    bp.column = r.column;
    bp.enabled = r.enabled;
    resolve(bp);
    breakpoints_.push_back(bp);
    out.push_back(bp);
  }
  return out;
}

std::optional<Breakpoint> DebugEngine::enableBreakpoint(int id, bool enabled) {
  for (auto& bp : breakpoints_) {
    if (bp.id == id) {
      bp.enabled = enabled;
      return bp;
    }
  }
  return std::nullopt;
}

std::optional<LocationDescriptor> DebugEngine::frameLocation(const Frame& frame) {
  auto dbg = frame.currentDbg();
  if (!dbg) dbg = frame.lastLocation;
  return interpreter_->locationOf(dbg);
}

std::vector<StackFrameView> DebugEngine::buildStack() {
  std::vector<StackFrameView> out;
  if (!interpreter_ || state_ != State::Suspended) return out;
  const auto& frames = interpreter_->frames();
  for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
    const Frame& f = **it;
    StackFrameView v;
    v.frameId = f.id;
    v.functionSourceName = interpreter_->sourceName(*f.function);
    v.irName = f.function->irName;
    v.location = it == frames.rbegin() && stopLocation_ ? stopLocation_ : frameLocation(f);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<DebugScope> DebugEngine::collectScopes(int frameId) {
  if (state_ != State::Suspended) throw InvalidStateError("the program is not suspended");
  Frame* frame = interpreter_->frameById(frameId);
  if (!frame) throw InvalidFrameError("no frame with id " + std::to_string(frameId));
  const bool isTop = frame == &interpreter_->top();
  const auto location = isTop && stopLocation_ ? stopLocation_ : frameLocation(*frame);
  const ScopeDescriptor* fnScope = builder_.functionScope(*module_, *frame->function);
  const ScopeDescriptor* scope = location && location->scope ? location->scope : fnScope;

  DebugScope local{"Local", {}};
  std::vector<DebugScope> named;
  const ScopeDescriptor* unit = nullptr;
  std::set<std::string> seen;

  auto addVariable = [&](DebugScope& target, const SymbolDescriptor* sym) {
    if (sym->staticness == Staticness::Dynamic) {
      // Declared before the suspension point and bound to a value.
      if (!location || !lexicallyPrecedesOrEquals(sym->declaredAt, *location)) return;
    }
    if (&target == &local && !seen.insert(sym->name).second) return;  // inner declarations shadow outer ones
    if (auto value = tracker_->resolveSymbol(*frame, *sym)) target.variables.emplace_back(sym->name, *value);
  };

  for (const ScopeDescriptor* s = scope; s; s = s->parent) {
    switch (s->kind) {
      case ScopeDescriptor::Kind::Block:
      case ScopeDescriptor::Kind::Function: {
        std::vector<const SymbolDescriptor*> members(s->members.begin(), s->members.end());
        // Parameters first, then in declaration order.
        std::stable_sort(members.begin(), members.end(), [](const SymbolDescriptor* a, const SymbolDescriptor* b) {
          const bool pa = a->argumentNumber > 0, pb = b->argumentNumber > 0;
          if (pa != pb) return pa;
          if (pa) return a->argumentNumber < b->argumentNumber;
          return std::pair(a->declaredAt.line, a->declaredAt.column) < std::pair(b->declaredAt.line, b->declaredAt.column);
        });
        for (const auto* sym : members) addVariable(local, sym);
        if (s->kind == ScopeDescriptor::Kind::Function && s->compilationUnit) unit = s->compilationUnit;
        break;
      }
      case ScopeDescriptor::Kind::Named: {
        DebugScope ns{s->name, {}};
        for (const auto* sym : s->members) addVariable(ns, sym);
        named.push_back(std::move(ns));
        break;
      }
      case ScopeDescriptor::Kind::CompilationUnit:
        unit = s;
        break;
      default:
        break;
    }
  }
  std::vector<DebugScope> out;
  out.push_back(std::move(local));
  for (auto& ns : named) out.push_back(std::move(ns));
  DebugScope statics{"<static>", {}};
  if (unit) {
    for (const auto* sym : unit->members) addVariable(statics, sym);
  }
  out.push_back(std::move(statics));
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> DebugEngine::statementLocations(const std::string& file) const {
  std::set<std::pair<std::uint32_t, std::uint32_t>> found;
  if (tags_) {
    for (const auto* loc : tags_->statementLocations()) {
      if (fileMatches(*loc, file)) found.emplace(loc->line, loc->column);
    }
  }
  return {found.begin(), found.end()};
}

std::shared_ptr<const SourceFile> DebugEngine::sourceFor(const std::string& file) {
  if (tags_) {
    for (const auto* loc : tags_->statementLocations()) {
      if (fileMatches(*loc, file) && loc->resolvedSource) return loc->resolvedSource->file;
    }
  }
  return registry_.resolveFileName(file);
}

}  // namespace irdb
