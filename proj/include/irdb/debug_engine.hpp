#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "irdb/debug_meta.hpp"
#include "irdb/interpreter.hpp"
#include "irdb/ir_model.hpp"
#include "irdb/value_inspection.hpp"

namespace irdb {

enum TagBits : std::uint8_t { kStatement = 1, kRoot = 2, kCall = 4 };

struct StatementInfo {
  std::uint8_t tags = 0;
  const LocationDescriptor* location = nullptr;  // set for Statement positions
};

// Tags for every executable position: body instructions and, at index
// body.size(), the terminator.
class TagTable {
 public:
  TagTable(const IrModule& module, DescriptorBuilder& builder);

  const StatementInfo* at(const IrFunction* fn, std::size_t block, std::size_t index) const;
  bool hasTag(const IrFunction* fn, std::size_t block, std::size_t index, TagBits tag) const;
  // Every Statement location, in module order.
  const std::vector<const LocationDescriptor*>& statementLocations() const { return all_; }

 private:
  std::map<const IrFunction*, std::vector<std::vector<StatementInfo>>> table_;
  std::vector<const LocationDescriptor*> all_;
};

bool sameLocation(const LocationDescriptor& a, const LocationDescriptor& b);
// "fact.c" matches "/home/u/src/fact.c"; absolute paths match exactly.
bool fileMatches(const LocationDescriptor& location, const std::string& requested);

struct BreakpointRequest {
  std::uint32_t line = 0;
  std::optional<std::uint32_t> column;
  bool enabled = true;
};

struct Breakpoint {
  int id = 0;
  std::string file;
  std::uint32_t line = 0;
  std::optional<std::uint32_t> column;
  bool enabled = true;
  std::optional<LocationDescriptor> resolvedTo;  // empty while pending
};

enum class ResumeMode : std::uint8_t { Continue, StepExpr, StepInto, StepOver, StepOut };

const char* resumeModeName(ResumeMode mode);

struct StopEvent {
  enum class Reason : std::uint8_t { Entry, Breakpoint, Step, Pause, Trap, Exited };
  Reason reason = Reason::Step;
  int breakpointId = 0;
  std::string description;
  int exitCode = 0;
};

const char* stopReasonName(StopEvent::Reason reason);

struct StackFrameView {
  int frameId = 0;
  std::string functionSourceName;
  std::string irName;
  std::optional<LocationDescriptor> location;
};

struct DebugScope {
  std::string name;  // "Local", "<static>", or a namespace name
  std::vector<std::pair<std::string, SourceValue>> variables;
};

class InvalidFrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InvalidStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// Stepping needs source: raised when the current location has none.
class CannotStepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DebugEngine {
 public:
  enum class State : std::uint8_t { Idle, Suspended, Running, Exited };

  explicit DebugEngine(SourceRegistry& registry);
  ~DebugEngine();

  void setOutput(Interpreter::OutputSink sink) { output_ = std::move(sink); }

  // Takes ownership of the module. Pending breakpoints are resolved here.
  StopEvent launch(std::shared_ptr<const IrModule> module, const std::string& entry,
                   const std::vector<std::string>& programArgs, bool stopOnEntry);
  StopEvent resume(ResumeMode mode);
  StopEvent restartFrame(int frameId);
  // Safe to call from any thread; honoured at the next Statement. The flag
  // survives until a Statement consumes it or clearPause() is called.
  void requestPause() { pauseRequested_.store(true); }
  void clearPause() { pauseRequested_.store(false); }

  // Replaces the breakpoints of `file`. Requests matching an existing
  // (line, column) keep its id.
  std::vector<Breakpoint> setBreakpoints(const std::string& file, const std::vector<BreakpointRequest>& requests);
  std::optional<Breakpoint> enableBreakpoint(int id, bool enabled);
  const std::vector<Breakpoint>& breakpoints() const { return breakpoints_; }

  std::vector<StackFrameView> buildStack();
  std::vector<DebugScope> collectScopes(int frameId);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> statementLocations(const std::string& file) const;
  std::shared_ptr<const SourceFile> sourceFor(const std::string& file);

  State state() const { return state_; }
  bool canStep();
  const StopEvent& lastStop() const { return lastStop_; }
  const IrModule* module() const { return module_.get(); }
  Interpreter* interpreter() { return interpreter_.get(); }
  ValueTracker* tracker() { return tracker_.get(); }
  DescriptorBuilder& builder() { return builder_; }
  const TagTable* tags() const { return tags_.get(); }
  // Location of a frame: the current statement for the top frame, the call
  // site for callers.
  std::optional<LocationDescriptor> frameLocation(const Frame& frame);

 private:
  enum class Target : std::uint8_t { AnyStatement, Continue, StepExpr, StepOver, StepOut };
  StopEvent runUntil(Target target, bool checkCurrent, StopEvent::Reason stopReason);
  StopEvent suspend(StopEvent event);
  void resolve(Breakpoint& bp);
  const Breakpoint* breakpointAt(const LocationDescriptor& location) const;
  const StatementInfo* currentStatement();

  SourceRegistry& registry_;
  DescriptorBuilder builder_;
  std::shared_ptr<const IrModule> module_;
  std::unique_ptr<Interpreter> interpreter_;
  std::unique_ptr<ValueTracker> tracker_;
  std::unique_ptr<TagTable> tags_;
  std::vector<Breakpoint> breakpoints_;
  int nextBreakpointId_ = 1;
  std::atomic<bool> pauseRequested_{false};
  State state_ = State::Idle;
  StopEvent lastStop_;
  std::optional<LocationDescriptor> stopLocation_;
  Interpreter::OutputSink output_;
};

}  // namespace irdb
