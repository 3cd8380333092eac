#include "irdb/repl.hpp"

#include <iostream>
#include <map>
#include <sstream>

namespace irdb {

namespace {

const char* kHelp =
    "commands:\n"
    "  b FILE:LINE[:COL]   set a breakpoint\n"
    "  d ID                delete a breakpoint\n"
    "  disable ID          disable a breakpoint\n"
    "  enable ID           enable a breakpoint\n"
    "  c                   continue\n"
    "  s                   step to the next expression\n"
    "  si                  step into\n"
    "  n                   step over\n"
    "  fin                 step out\n"
    "  bt                  show the call stack\n"
    "  scopes [N]          show the scopes of frame N (default 0)\n"
    "  p NAME[.MEMBER...]  print a variable\n"
    "  restart N           restart frame N\n"
    "  pause               interrupt the running program\n"
    "  q                   quit\n";

struct BreakpointEntry {
  int id = 0;
  std::uint32_t line = 0;
  std::optional<std::uint32_t> column;
  bool enabled = true;
};

class Repl {
 public:
  Repl(ProtocolClient& client, std::ostream& out) : client_(client), out_(out) {}

  bool launch(const LaunchConfig& config) {
    json args = {{"program", config.program}, {"entry", config.entry}, {"args", config.args}, {"stopOnEntry", true}};
    if (!ok(client_.request("launch", args))) return false;
    waitStop();
    return true;
  }

  // False once the user quits.
  bool execute(const std::string& line) {
    std::istringstream words(line);
    std::string cmd;
    if (!(words >> cmd)) return true;
    std::string arg;
    words >> arg;
    if (cmd == "q" || cmd == "quit") {
      client_.request("disconnect");
      return false;
    }
    if (cmd == "b") return setBreakpoint(arg), true;
    if (cmd == "d") return changeBreakpoint(arg, std::nullopt), true;
    if (cmd == "disable") return changeBreakpoint(arg, false), true;
    if (cmd == "enable") return changeBreakpoint(arg, true), true;
    if (cmd == "c") return resume("continue"), true;
    if (cmd == "s") return resume("stepExpr"), true;
    if (cmd == "si") return resume("stepInto"), true;
    if (cmd == "n") return resume("stepOver"), true;
    if (cmd == "fin") return resume("stepOut"), true;
    if (cmd == "bt") return backtrace(), true;
    if (cmd == "scopes") return showScopes(arg.empty() ? 0 : std::stoi(arg)), true;
    if (cmd == "p") return print(arg), true;
    if (cmd == "restart") return restart(arg.empty() ? 0 : std::stoi(arg)), true;
    if (cmd == "pause") {
      client_.request("pause");
      return true;
    }
    out_ << kHelp;
    return true;
  }

  std::optional<int> exitCode() const { return exitCode_; }

  // An attached session may still be launching its preset program.
  void awaitAttach() {
    if (auto event = client_.nextEvent(1500)) {
      if (event->value("event", "") == "stopped") printStop((*event)["body"]);
    }
  }

 private:
  bool ok(const json& response) {
    if (response.value("success", false)) return true;
    const auto& e = response["error"];
    out_ << "error: " << e.value("message", "") << " (" << e.value("code", "") << ")\n";
    return false;
  }

  void waitStop() {
    for (;;) {
      auto event = client_.nextEvent(60000);
      if (!event) {
        out_ << "no stop event received\n";
        return;
      }
      const auto name = event->value("event", "");
      const auto& body = (*event)["body"];
      if (name == "stopped") {
        printStop(body);
        return;
      }
      if (name == "exited") {
        exitCode_ = body.value("code", 0);
        out_ << "exited with code " << *exitCode_ << '\n';
        return;
      }
      if (name == "output") out_ << body.value("text", "");
    }
  }

  // Events that arrived while the user was typing.
  void drainEvents() {
    while (auto event = client_.nextEvent(0)) {
      const auto name = event->value("event", "");
      const auto& body = (*event)["body"];
      if (name == "output") out_ << body.value("text", "");
      if (name == "stopped") printStop(body);
      if (name == "exited") {
        exitCode_ = body.value("code", 0);
        out_ << "exited with code " << *exitCode_ << '\n';
      }
    }
  }

  void printStop(const json& body) {
    const auto& top = body["topFrame"];
    out_ << "stopped at " << top.value("file", "?") << ':' << top["line"] << ':' << top["column"] << " ("
         << body.value("reason", "");
    if (body.contains("breakpointId")) out_ << ' ' << body["breakpointId"];
    out_ << ')';
    if (!body.value("description", "").empty()) out_ << ": " << body.value("description", "");
    out_ << '\n';
  }

  void resume(const std::string& command) {
    drainEvents();
    if (ok(client_.request(command))) waitStop();
  }

  void restart(int index) {
    auto frames = stack();
    if (index < 0 || index >= static_cast<int>(frames.size())) {
      out_ << "no frame " << index << '\n';
      return;
    }
    if (ok(client_.request("restartFrame", {{"frameId", frames[index]["id"]}}))) waitStop();
  }

  void sendBreakpoints(const std::string& file) {
    json list = json::array();
    for (const auto& bp : breakpoints_[file]) {
      json j = {{"line", bp.line}, {"enabled", bp.enabled}};
      if (bp.column) j["column"] = *bp.column;
      list.push_back(j);
    }
    auto response = client_.request("setBreakpoints", {{"file", file}, {"breakpoints", list}});
    if (!ok(response)) return;
    auto& entries = breakpoints_[file];
    const auto& result = response["body"]["breakpoints"];
    for (std::size_t i = 0; i < entries.size() && i < result.size(); ++i) entries[i].id = result[i]["id"];
    lastResult_ = result;
  }

  void setBreakpoint(const std::string& spec) {
    const auto first = spec.find(':');
    if (first == std::string::npos) {
      out_ << "usage: b FILE:LINE[:COL]\n";
      return;
    }
    const auto file = spec.substr(0, first);
    BreakpointEntry entry;
    try {
      const auto rest = spec.substr(first + 1);
      const auto second = rest.find(':');
      entry.line = static_cast<std::uint32_t>(std::stoul(rest.substr(0, second)));
      if (second != std::string::npos) entry.column = static_cast<std::uint32_t>(std::stoul(rest.substr(second + 1)));
    } catch (const std::exception&) {
      out_ << "usage: b FILE:LINE[:COL]\n";
      return;
    }
    breakpoints_[file].push_back(entry);
    sendBreakpoints(file);
    const auto& bp = lastResult_.back();
    out_ << "breakpoint " << bp["id"] << " at " << file << ':' << entry.line;
    if (bp.contains("resolved")) {
      out_ << " resolved to " << bp["resolved"]["line"] << ':' << bp["resolved"]["column"] << '\n';
    } else {
      out_ << " (pending)\n";
    }
  }

  void changeBreakpoint(const std::string& arg, std::optional<bool> enable) {
    int id = 0;
    try {
      id = std::stoi(arg);
    } catch (const std::exception&) {
      out_ << "usage: d|enable|disable ID\n";
      return;
    }
    for (auto& [file, entries] : breakpoints_) {
      for (auto it = entries.begin(); it != entries.end(); ++it) {
        if (it->id != id) continue;
        if (!enable) {
          entries.erase(it);
          sendBreakpoints(file);
          out_ << "deleted breakpoint " << id << '\n';
        } else if (ok(client_.request("enableBreakpoint", {{"id", id}, {"enabled", *enable}}))) {
          it->enabled = *enable;
          out_ << (*enable ? "enabled" : "disabled") << " breakpoint " << id << '\n';
        }
        return;
      }
    }
    out_ << "no breakpoint " << id << '\n';
  }

  json stack() {
    auto response = client_.request("stackTrace");
    if (!ok(response)) return json::array();
    return response["body"]["frames"];
  }

  void backtrace() {
    auto frames = stack();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      out_ << '#' << i << ' ' << f.value("name", "") << " at ";
      if (f["line"].is_null()) {
        out_ << "<unknown>";
      } else {
        out_ << f.value("file", "?") << ':' << f["line"] << ':' << f["column"];
      }
      out_ << '\n';
    }
  }

  std::optional<json> scopes(int index) {
    auto frames = stack();
    if (index < 0 || index >= static_cast<int>(frames.size())) {
      out_ << "no frame " << index << '\n';
      return std::nullopt;
    }
    auto response = client_.request("scopes", {{"frameId", frames[index]["id"]}});
    if (!ok(response)) return std::nullopt;
    return response["body"]["scopes"];
  }

  json variables(int ref) {
    auto response = client_.request("variables", {{"variablesReference", ref}});
    if (!ok(response)) return json::array();
    return response["body"]["variables"];
  }

  static std::string describe(const json& v) {
    return v.value("name", "") + ": " + v.value("type", "") + " = " + v.value("value", "");
  }

  void showScopes(int index) {
    auto list = scopes(index);
    if (!list) return;
    for (const auto& scope : *list) {
      out_ << scope.value("name", "") << ":\n";
      for (const auto& v : variables(scope["variablesReference"])) out_ << "  " << describe(v) << '\n';
    }
  }

  void print(const std::string& path) {
    if (path.empty()) {
      out_ << "usage: p NAME[.MEMBER...]\n";
      return;
    }
    std::vector<std::string> parts;
    std::istringstream in(path);
    for (std::string part; std::getline(in, part, '.');) parts.push_back(part);
    auto list = scopes(0);
    if (!list) return;
    for (const auto& scope : *list) {
      std::optional<json> found;
      json current = variables(scope["variablesReference"]);
      for (std::size_t i = 0; i < parts.size(); ++i) {
        found.reset();
        for (const auto& v : current) {
          if (v.value("name", "") == parts[i]) found = v;
        }
        if (!found) break;
        if (i + 1 < parts.size()) {
          int ref = (*found)["variablesReference"];
          if (ref == 0) {
            found.reset();
            break;
          }
          current = variables(ref);
          // Pointers expose their target as a single "*" child.
          if (current.size() == 1 && current[0].value("name", "") == "*" && current[0]["variablesReference"] != 0) {
            current = variables(current[0]["variablesReference"]);
          }
        }
      }
      if (found) {
        out_ << path << ": " << found->value("type", "") << " = " << found->value("value", "") << '\n';
        return;
      }
    }
    out_ << "no variable " << path << '\n';
  }

  ProtocolClient& client_;
  std::ostream& out_;
  std::map<std::string, std::vector<BreakpointEntry>> breakpoints_;
  json lastResult_ = json::array();
  std::optional<int> exitCode_;
};

}  // namespace

int runRepl(ProtocolClient& client, std::istream& in, std::ostream& out, const std::optional<LaunchConfig>& launch) {
  Repl repl(client, out);
  if (launch && !repl.launch(*launch)) return 2;
  if (!launch) repl.awaitAttach();
  std::string line;
  out << "(irdb) " << std::flush;
  while (std::getline(in, line)) {
    if (!repl.execute(line)) break;
    if (!client.connected()) break;
    out << "(irdb) " << std::flush;
  }
  return repl.exitCode().value_or(0);
}

}  // namespace irdb
