#include "irdb/session_server.hpp"

#include <set>

#include "irdb/ir_parser.hpp"

namespace irdb {

namespace {

const std::set<std::string> kResumeCommands = {"launch", "continue", "stepExpr", "stepInto",
                                               "stepOver", "stepOut", "restartFrame"};
const std::set<std::string> kCommands = {"launch",     "setBreakpoints", "enableBreakpoint", "continue",
                                         "stepExpr",   "stepInto",       "stepOver",         "stepOut",
                                         "pause",      "stackTrace",     "scopes",           "variables",
                                         "restartFrame", "statementLocations", "source",     "disconnect"};

struct ProtocolError : std::runtime_error {
  ProtocolError(std::string c, const std::string& message) : std::runtime_error(message), code(std::move(c)) {}
  std::string code;
};

const json& argument(const json& args, const char* name) {
  if (!args.is_object() || !args.contains(name)) throw ProtocolError("invalid-arguments", std::string("missing argument '") + name + "'");
  return args.at(name);
}

}  // namespace

Session::Session(SessionOptions options, Writer writer)
    : options_(std::move(options)), writer_(std::move(writer)) {
  registry_ = std::make_unique<SourceRegistry>(options_.sourceRoots);
  engine_ = std::make_unique<DebugEngine>(*registry_);
  engine_->setOutput([this](std::string_view text) { emit("output", {{"text", std::string(text)}}); });
}

Session::~Session() { shutdown(); }

void Session::start() {
  if (options_.preset && options_.preset->stopOnEntry) {
    busy_ = true;
    std::lock_guard lock(queueMutex_);
    queue_.push_back({nullptr, "launch", json::object()});
  }
  controller_ = std::thread([this] { controllerLoop(); });
}

void Session::write(const json& message) {
  const auto text = message.dump(-1, ' ', false, json::error_handler_t::replace);
  std::lock_guard lock(writeMutex_);
  writer_(text);
}

void Session::respond(const Request& request, const json& body) {
  write({{"type", "response"}, {"seq", request.seq}, {"command", request.command}, {"success", true}, {"body", body}});
}

void Session::fail(const json& seq, const std::string& command, const std::string& code, const std::string& message) {
  write({{"type", "response"},
         {"seq", seq},
         {"command", command},
         {"success", false},
         {"error", {{"code", code}, {"message", message}}}});
}

void Session::emit(const std::string& event, const json& body) {
  write({{"type", "event"}, {"event", event}, {"body", body}});
}

void Session::handleLine(const std::string& line) {
  if (line.find_first_not_of(" \t\r") == std::string::npos) return;
  json message;
  try {
    message = json::parse(line);
  } catch (const json::exception& e) {
    fail(nullptr, "", "malformed", std::string("not a JSON document: ") + e.what());
    return;
  }
  if (!message.is_object() || !message.contains("command") || !message["command"].is_string()) {
    fail(message.is_object() && message.contains("seq") ? message["seq"] : json(nullptr), "", "malformed",
         "a request needs a string 'command'");
    return;
  }
  Request request{message.value("seq", json(nullptr)), message["command"].get<std::string>(),
                  message.value("arguments", json::object())};
  if (!kCommands.count(request.command)) {
    fail(request.seq, request.command, "unknown-command", "unknown command '" + request.command + "'");
    return;
  }
  if (finished_) {
    fail(request.seq, request.command, "invalid-state", "the session has ended");
    return;
  }
  if (request.command == "pause") {
    const bool running = busy_.load();
    if (running) engine_->requestPause();
    respond(request, {{"running", running}});
    return;
  }
  if (request.command == "disconnect") {
    respond(request, json::object());
    shutdown();
    return;
  }
  if (busy_) {
    fail(request.seq, request.command, "invalid-state", "the program is running");
    return;
  }
  if (kResumeCommands.count(request.command)) {
    engine_->clearPause();
    busy_ = true;
  }
  {
    std::lock_guard lock(queueMutex_);
    queue_.push_back(std::move(request));
  }
  queueReady_.notify_one();
}

void Session::shutdown() {
  if (stopping_.exchange(true)) {
    if (controller_.joinable() && std::this_thread::get_id() != controller_.get_id()) controller_.join();
    return;
  }
  engine_->requestPause();
  queueReady_.notify_all();
  idle_.notify_all();
  if (controller_.joinable() && std::this_thread::get_id() != controller_.get_id()) controller_.join();
  finished_ = true;
  std::lock_guard lock(finishMutex_);
  finishCv_.notify_all();
}

void Session::drain() {
  std::unique_lock lock(queueMutex_);
  idle_.wait(lock, [this] { return stopping_ || (queue_.empty() && !executing_); });
}

void Session::waitFinished() {
  std::unique_lock lock(finishMutex_);
  finishCv_.wait(lock, [this] { return finished_.load(); });
}

void Session::controllerLoop() {
  for (;;) {
    Request request;
    {
      std::unique_lock lock(queueMutex_);
      queueReady_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      request = std::move(queue_.front());
      queue_.pop_front();
      executing_ = true;
    }
    const bool resumes = kResumeCommands.count(request.command) > 0;
    auto failed = [&](const std::string& code, const char* message) {
      if (resumes) busy_ = false;
      fail(request.seq, request.command, code, message);
    };
    try {
      execute(request);
    } catch (const ProtocolError& e) {
      failed(e.code, e.what());
    } catch (const InvalidStateError& e) {
      failed("invalid-state", e.what());
    } catch (const InvalidFrameError& e) {
      failed("invalid-frame", e.what());
    } catch (const CannotStepError& e) {
      failed("cannot-step", e.what());
    } catch (const ParseError& e) {
      failed("parse-error", e.what());
    } catch (const std::exception& e) {
      failed("failed", e.what());
    }
    {
      std::lock_guard lock(queueMutex_);
      executing_ = false;
    }
    idle_.notify_all();
  }
}

void Session::execute(const Request& r) {
  const auto& c = r.command;
  if (c == "launch") return doLaunch(r);
  if (c == "continue") return doResume(r, ResumeMode::Continue);
  if (c == "stepExpr") return doResume(r, ResumeMode::StepExpr);
  if (c == "stepInto") return doResume(r, ResumeMode::StepInto);
  if (c == "stepOver") return doResume(r, ResumeMode::StepOver);
  if (c == "stepOut") return doResume(r, ResumeMode::StepOut);
  if (c == "restartFrame") return doRestart(r);
  if (c == "setBreakpoints") return doSetBreakpoints(r);
  if (c == "enableBreakpoint") return doEnableBreakpoint(r);
  if (c == "stackTrace") return doStackTrace(r);
  if (c == "scopes") return doScopes(r);
  if (c == "variables") return doVariables(r);
  if (c == "statementLocations") return doStatementLocations(r);
  if (c == "source") return doSource(r);
  throw ProtocolError("unknown-command", "unknown command '" + c + "'");
}

// --- execution control ------------------------------------------------------

void Session::doLaunch(const Request& r) {
  if (engine_->state() != DebugEngine::State::Idle) throw InvalidStateError("a program is already launched");
  LaunchConfig config = options_.preset.value_or(LaunchConfig{});
  const json& a = r.arguments;
  if (a.contains("program")) config.program = a["program"].get<std::string>();
  if (a.contains("entry")) config.entry = a["entry"].get<std::string>();
  if (a.contains("args")) config.args = a["args"].get<std::vector<std::string>>();
  if (a.contains("stopOnEntry")) config.stopOnEntry = a["stopOnEntry"].get<bool>();
  if (config.program.empty()) throw ProtocolError("invalid-arguments", "missing argument 'program'");

  auto module = std::make_shared<IrModule>(parseModuleFile(config.program));
  const IrFunction* entry = module->findFunction(config.entry);
  if (!entry || entry->isDeclaration()) {
    throw ProtocolError("invalid-arguments", "no function @" + config.entry + " defined in " + config.program);
  }
  registry_->addSearchRoot(std::filesystem::absolute(config.program).parent_path());
  if (!r.seq.is_null()) respond(r, {{"program", config.program}, {"entry", config.entry}});
  report(engine_->launch(std::move(module), config.entry, config.args, config.stopOnEntry));
}

void Session::doResume(const Request& r, ResumeMode mode) {
  if (engine_->state() != DebugEngine::State::Suspended) throw InvalidStateError("the program is not suspended");
  if (mode != ResumeMode::Continue && !engine_->canStep()) {
    throw CannotStepError("no source is available for the current location; stepping is not possible");
  }
  variables_.clear();
  respond(r, json::object());
  report(engine_->resume(mode));
}

void Session::doRestart(const Request& r) {
  if (engine_->state() != DebugEngine::State::Suspended) throw InvalidStateError("the program is not suspended");
  const int frameId = argument(r.arguments, "frameId").get<int>();
  const auto stack = engine_->buildStack();
  if (std::none_of(stack.begin(), stack.end(), [&](const StackFrameView& f) { return f.frameId == frameId; })) {
    throw InvalidFrameError("no frame with id " + std::to_string(frameId));
  }
  variables_.clear();
  respond(r, json::object());
  report(engine_->restartFrame(frameId));
}

void Session::report(const StopEvent& stop) {
  // clients may send the next request as soon as they see the event
  busy_ = false;
  if (stop.reason == StopEvent::Reason::Exited) {
    emit("exited", {{"code", stop.exitCode}});
    return;
  }
  json body = {{"reason", stopReasonName(stop.reason)}, {"description", stop.description}};
  if (stop.reason == StopEvent::Reason::Breakpoint) body["breakpointId"] = stop.breakpointId;
  const auto stack = engine_->buildStack();
  if (!stack.empty()) {
    body["topFrame"] = {{"id", stack[0].frameId}, {"name", stack[0].functionSourceName}};
    body["topFrame"].update(locationJson(stack[0].location));
  }
  emit("stopped", body);
}

// --- breakpoints ------------------------------------------------------------

json Session::breakpointJson(const Breakpoint& bp) const {
  json j = {{"id", bp.id},
            {"file", bp.file},
            {"line", bp.line},
            {"column", bp.column ? json(*bp.column) : json(nullptr)},
            {"enabled", bp.enabled},
            {"verified", bp.resolvedTo.has_value()}};
  if (bp.resolvedTo) j["resolved"] = {{"line", bp.resolvedTo->line}, {"column", bp.resolvedTo->column}};
  return j;
}

void Session::doSetBreakpoints(const Request& r) {
  const auto file = argument(r.arguments, "file").get<std::string>();
  std::vector<BreakpointRequest> requests;
  for (const auto& b : r.arguments.value("breakpoints", json::array())) {
    BreakpointRequest req;
    req.line = argument(b, "line").get<std::uint32_t>();
    if (b.contains("column") && !b["column"].is_null()) req.column = b["column"].get<std::uint32_t>();
    req.enabled = b.value("enabled", true);
    requests.push_back(req);
  }
  json out = json::array();
  for (const auto& bp : engine_->setBreakpoints(file, requests)) out.push_back(breakpointJson(bp));
  respond(r, {{"breakpoints", out}});
}

void Session::doEnableBreakpoint(const Request& r) {
  const int id = argument(r.arguments, "id").get<int>();
  const bool enabled = argument(r.arguments, "enabled").get<bool>();
  auto bp = engine_->enableBreakpoint(id, enabled);
  if (!bp) throw ProtocolError("invalid-breakpoint", "no breakpoint with id " + std::to_string(id));
  respond(r, {{"breakpoint", breakpointJson(*bp)}});
}

// --- inspection -------------------------------------------------------------

json Session::locationJson(const std::optional<LocationDescriptor>& location) const {
  if (!location) return {{"file", nullptr}, {"line", nullptr}, {"column", nullptr}, {"sourceAvailable", false}};
  return {{"file", location->file},
          {"line", location->line},
          {"column", location->column},
          {"sourceAvailable", location->hasSource()}};
}

void Session::doStackTrace(const Request& r) {
  if (engine_->state() != DebugEngine::State::Suspended) throw InvalidStateError("the program is not suspended");
  json frames = json::array();
  for (const auto& f : engine_->buildStack()) {
    json j = {{"id", f.frameId}, {"name", f.functionSourceName}, {"irName", f.irName}};
    j.update(locationJson(f.location));
    frames.push_back(j);
  }
  respond(r, {{"frames", frames}});
}

int Session::addVariableList(int frameId, std::vector<std::pair<std::string, SourceValue>> entries) {
  const int ref = nextVariableRef_++;
  variables_[ref] = {frameId, std::move(entries)};
  return ref;
}

void Session::doScopes(const Request& r) {
  if (engine_->state() != DebugEngine::State::Suspended) throw InvalidStateError("the program is not suspended");
  const int frameId = argument(r.arguments, "frameId").get<int>();
  json scopes = json::array();
  for (auto& scope : engine_->collectScopes(frameId)) {
    const auto count = scope.variables.size();
    const int ref = addVariableList(frameId, std::move(scope.variables));
    scopes.push_back({{"name", scope.name}, {"variablesReference", ref}, {"count", count}});
  }
  respond(r, {{"scopes", scopes}});
}

void Session::doVariables(const Request& r) {
  if (engine_->state() != DebugEngine::State::Suspended) throw InvalidStateError("the program is not suspended");
  const int ref = argument(r.arguments, "variablesReference").get<int>();
  auto it = variables_.find(ref);
  if (it == variables_.end()) throw ProtocolError("invalid-reference", "unknown or expired variables reference " + std::to_string(ref));
  const int frameId = it->second.frameId;
  const auto entries = it->second.entries;
  json out = json::array();
  for (const auto& [name, value] : entries) {
    DisplayNode node = render(value, engine_->interpreter()->memory());
    int childRef = 0;
    if (!node.children.empty()) childRef = addVariableList(frameId, std::move(node.children));
    out.push_back({{"name", name}, {"value", node.display}, {"type", node.typeName}, {"variablesReference", childRef}});
  }
  respond(r, {{"variables", out}});
}

void Session::doStatementLocations(const Request& r) {
  const auto file = argument(r.arguments, "file").get<std::string>();
  json locations = json::array();
  for (const auto& [line, column] : engine_->statementLocations(file)) {
    locations.push_back({{"line", line}, {"column", column}});
  }
  respond(r, {{"file", file}, {"locations", locations}});
}

void Session::doSource(const Request& r) {
  const auto file = argument(r.arguments, "file").get<std::string>();
  auto source = engine_->sourceFor(file);
  json body = {{"file", file}, {"available", source != nullptr}};
  if (source) {
    body["path"] = source->path();
    body["content"] = source->content();
  }
  respond(r, body);
}

}  // namespace irdb
