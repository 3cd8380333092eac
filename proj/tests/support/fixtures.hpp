#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "json.hpp"

#include "irdb/debug_engine.hpp"
#include "irdb/ir_parser.hpp"

#ifndef IRDB_FIXTURES
#error "IRDB_FIXTURES must point at tests/fixtures"
#endif

namespace fixtures {

inline std::string dir() { return IRDB_FIXTURES; }
inline std::string path(const std::string& name) { return dir() + "/" + name; }

inline std::string read(const std::string& name) {
  std::ifstream in(path(name));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline irdb::IrModule load(const std::string& name) { return irdb::parseModuleFile(path(name)); }

inline std::shared_ptr<const irdb::IrModule> shared(const std::string& name) {
  return std::make_shared<irdb::IrModule>(load(name));
}

inline nlohmann::json manifest() { return nlohmann::json::parse(read("manifest.json")); }

inline std::vector<std::string> corpus() {
  std::vector<std::string> names;
  const auto m = manifest();
  for (auto& [name, entry] : m["corpus"].items()) names.push_back(name);
  return names;
}

// Engine with the fixture directory as its only source root.
struct Debugger {
  irdb::SourceRegistry registry;
  irdb::DebugEngine engine;
  std::string out;

  explicit Debugger(std::vector<std::filesystem::path> roots = {dir()}) : registry(std::move(roots)), engine(registry) {
    engine.setOutput([this](std::string_view t) { out += t; });
  }

  irdb::StopEvent launch(const std::string& name, const std::string& entry = "main",
                         std::vector<std::string> args = {}, bool stopOnEntry = true) {
    return engine.launch(shared(name), entry, args, stopOnEntry);
  }

  std::pair<std::uint32_t, std::uint32_t> where() {
    auto stack = engine.buildStack();
    if (stack.empty() || !stack[0].location) return {0, 0};
    return {stack[0].location->line, stack[0].location->column};
  }

  std::size_t depth() { return engine.buildStack().size(); }

  // Rendered value of a visible variable in the top frame, "" if absent.
  std::string value(const std::string& name, int frameIndex = 0) {
    auto stack = engine.buildStack();
    for (const auto& scope : engine.collectScopes(stack.at(frameIndex).frameId)) {
      for (const auto& [n, v] : scope.variables) {
        if (n == name) return irdb::render(v, engine.interpreter()->memory()).display;
      }
    }
    return "";
  }
};

}  // namespace fixtures
