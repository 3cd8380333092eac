#include <unistd.h>

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "irdb/interpreter.hpp"
#include "irdb/ir_parser.hpp"
#include "irdb/repl.hpp"
#include "irdb/session_server.hpp"

#ifndef IRDB_WEB_DIR
#define IRDB_WEB_DIR "web"
#endif

namespace {

using namespace irdb;

std::vector<std::filesystem::path> sourceRoots(const std::vector<std::string>& flags) {
  std::vector<std::filesystem::path> roots(flags.begin(), flags.end());
  if (const char* env = std::getenv("IRDB_SOURCE_ROOTS")) {
    std::string list = env;
    std::size_t start = 0;
    while (start <= list.size()) {
      const auto end = std::min(list.find(':', start), list.size());
      if (end > start) roots.emplace_back(list.substr(start, end - start));
      start = end + 1;
    }
  }
  return roots;
}

void printLocation(std::ostream& out, const std::optional<LocationDescriptor>& loc) {
  if (!loc) {
    out << "<unknown location>";
    return;
  }
  out << loc->file << ':' << loc->line << ':' << loc->column;
  if (!loc->hasSource()) out << " (source not available)";
}

int runProgram(const std::string& program, const std::string& entry, const std::vector<std::string>& args,
               const std::vector<std::filesystem::path>& roots) {
  IrModule module;
  try {
    module = parseModuleFile(program);
  } catch (const ParseError& e) {
    std::cerr << program << ':' << e.line << ':' << e.column << ": error: " << e.message << '\n';
    if (!e.snippet.empty()) std::cerr << "  " << e.snippet << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  SourceRegistry registry(roots);
  registry.addSearchRoot(std::filesystem::absolute(program).parent_path());
  DescriptorBuilder builder(registry);
  Interpreter interpreter(module, builder);
  interpreter.setOutput([](std::string_view text) {
    std::cout << text;
    std::cout.flush();
  });
  try {
    interpreter.startMain(entry, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  const auto outcome = interpreter.run();
  if (outcome.trapped()) {
    std::cerr << "trap: " << outcome.message << '\n';
    for (const auto& frame : outcome.stack) {
      std::cerr << "  at " << frame.function << " (";
      printLocation(std::cerr, frame.location);
      std::cerr << ")\n";
    }
  }
  return outcome.exitCode();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"irdb: interpreter and source-level debugger for textual LLVM IR"};
  app.require_subcommand(1);

  std::string program, entry = "main", connect, uiDir = IRDB_WEB_DIR;
  std::vector<std::string> programArgs, roots;
  int port = 4711;
  bool useStdio = false, stopOnEntry = false;

  auto addCommon = [&](CLI::App* cmd, bool programRequired) {
    auto* opt = cmd->add_option("program", program, "LLVM IR file (.ll)");
    if (programRequired) opt->required();
    cmd->add_option("args", programArgs, "program arguments");
    cmd->add_option("--entry", entry, "entry function")->capture_default_str();
    cmd->add_option("--source-root", roots, "directory searched for source files")->take_all();
  };

  auto* run = app.add_subcommand("run", "execute a program");
  addCommon(run, true);

  auto* debug = app.add_subcommand("debug", "serve a debug session");
  addCommon(debug, true);
  debug->add_option("--port", port, "TCP port for websocket, HTTP and raw protocol clients")->capture_default_str();
  debug->add_flag("--stdio", useStdio, "speak the protocol on stdin/stdout");
  debug->add_flag("--stop-on-entry", stopOnEntry, "launch at once and stop at the first statement");
  debug->add_option("--ui-dir", uiDir, "directory of the web UI assets");

  auto* repl = app.add_subcommand("repl", "terminal debugger");
  addCommon(repl, false);
  repl->add_option("--connect", connect, "attach to a session at HOST:PORT");

  CLI11_PARSE(app, argc, argv);

  const auto searchRoots = sourceRoots(roots);

  if (run->parsed()) return runProgram(program, entry, programArgs, searchRoots);

  if (debug->parsed()) {
    SessionOptions options;
    options.sourceRoots = searchRoots;
    options.preset = LaunchConfig{program, entry, programArgs, stopOnEntry};
    if (useStdio) {
      std::cerr << "serving the debug protocol on stdio" << std::endl;
      StreamConnection connection(STDIN_FILENO, STDOUT_FILENO, false);
      runSession(connection, options, true);
      return 0;
    }
    Server server(options, uiDir);
    int bound = 0;
    try {
      bound = server.listen(port);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
    std::cout << "serving ws://localhost:" << bound << ", UI at http://localhost:" << bound << std::endl;
    server.serve();
    return 0;
  }

  // repl
  std::unique_ptr<ProtocolClient> client;
  std::thread sessionThread;
  std::optional<LaunchConfig> launch;
  try {
    if (!connect.empty()) {
      const auto colon = connect.rfind(':');
      if (colon == std::string::npos) {
        std::cerr << "error: --connect expects HOST:PORT\n";
        return 2;
      }
      client = std::make_unique<ProtocolClient>(connectTcp(connect.substr(0, colon), std::stoi(connect.substr(colon + 1))));
    } else {
      if (program.empty()) {
        std::cerr << "error: a program is required without --connect\n";
        return 2;
      }
      SessionOptions options;
      options.sourceRoots = searchRoots;
      client = connectLocal(options, sessionThread);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (!program.empty()) launch = LaunchConfig{program, entry, programArgs, true};
  const int code = runRepl(*client, std::cin, std::cout, launch);
  client->close();
  if (sessionThread.joinable()) sessionThread.join();
  return code;
}
