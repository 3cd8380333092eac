#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "irdb/repl.hpp"
#include "irdb/session_server.hpp"

using namespace irdb;

namespace {

struct Result {
  int status = -1;
  std::string out, err;
};

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("irdb-cli-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] void execTool(const std::vector<std::string>& args, const std::map<std::string, std::string>& env) {
  for (const auto& [k, v] : env) ::setenv(k.c_str(), v.c_str(), 1);
  std::vector<char*> argv{const_cast<char*>(IRDB_TOOL)};
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  ::execv(IRDB_TOOL, argv.data());
  ::_exit(127);
}

Result run(const std::vector<std::string>& args, const std::string& input = "",
           const std::map<std::string, std::string>& env = {}) {
  const auto in = scratch("stdin"), out = scratch("stdout"), err = scratch("stderr");
  std::ofstream(in) << input;
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::dup2(::open(in.c_str(), O_RDONLY), 0);
    ::dup2(::open(out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644), 1);
    ::dup2(::open(err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644), 2);
    execTool(args, env);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// A child with pipes on stdin and stdout.
struct Child {
  pid_t pid = -1;
  int inFd = -1, outFd = -1;
  std::string banner;

  explicit Child(const std::vector<std::string>& args, bool readBanner = true,
                 const std::map<std::string, std::string>& env = {}) {
    int in[2], out[2];
    REQUIRE(::pipe(in) == 0);
    REQUIRE(::pipe(out) == 0);
    pid = ::fork();
    if (pid == 0) {
      ::dup2(in[0], 0);
      ::dup2(out[1], 1);
      ::close(in[1]);
      ::close(out[0]);
      ::dup2(::open("/dev/null", O_WRONLY), 2);
      execTool(args, env);
    }
    ::close(in[0]);
    ::close(out[1]);
    inFd = in[1];
    outFd = out[0];
    if (readBanner) banner = readLine();
  }
  std::string readLine() {
    std::string line;
    char c;
    while (::read(outFd, &c, 1) == 1 && c != '\n') line += c;
    return line;
  }
  json message() { return json::parse(readLine()); }
  void send(const json& j) {
    const auto text = j.dump() + "\n";
    REQUIRE(::write(inFd, text.data(), text.size()) == static_cast<ssize_t>(text.size()));
  }
  int port() const {
    std::smatch m;
    if (!std::regex_search(banner, m, std::regex("localhost:(\\d+)"))) return 0;
    return std::stoi(m[1]);
  }
  int wait() {
    ::close(inFd);
    inFd = -1;
    int status = 0;
    ::waitpid(pid, &status, 0);
    pid = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  ~Child() {
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
    }
    if (inFd >= 0) ::close(inFd);
    ::close(outFd);
  }
};

}  // namespace

TEST_CASE("run returns the program exit code") {
  const auto r = run({"run", fixtures::path("fact.ll")});
  CHECK(r.status == 120);
  const auto loop = run({"run", fixtures::path("loop.ll")});
  CHECK(loop.status == 129);
  CHECK(loop.out == "sum=385\n");
  CHECK(run({"run", fixtures::path("fact.ll"), "--entry", "fact", "4"}).status == 24);
}

TEST_CASE("run reports parse errors with a position") {
  const auto bad = scratch("bad.ll");
  std::ofstream(bad) << "define i32 @main() {\nentry:\n  ret i32 %nope\n}\n";
  const auto r = run({"run", bad.string()});
  CHECK(r.status == 2);
  CHECK(r.err.find("bad.ll:3:11: error:") != std::string::npos);
}

TEST_CASE("run prints a trap with the stack") {
  const auto r = run({"run", fixtures::path("nulltrap.ll")});
  CHECK(r.status == 1);
  CHECK(r.err.find("trap:") == 0);
  CHECK(r.err.find("at store (nulltrap.c:2:9)") != std::string::npos);
  CHECK(r.err.find("at main (nulltrap.c:9:10)") != std::string::npos);
}

TEST_CASE("run without sources marks locations") {
  const auto r = run({"run", fixtures::path("stale.ll")});
  CHECK(r.status == 1);
  CHECK(r.err.find(":5002:") != std::string::npos);
  CHECK(r.err.find("(source not available)") != std::string::npos);
}

TEST_CASE("bad command lines") {
  CHECK(run({}).status != 0);
  CHECK(run({"run"}).status != 0);
  CHECK(run({"run", scratch("missing.ll").string()}).status == 2);
}

TEST_CASE("debug over stdio keeps stdout for the protocol") {
  Child debug({"debug", "--stdio", "--stop-on-entry", fixtures::path("fact.ll")}, false);
  const auto stop = debug.message();
  CHECK(stop["event"] == "stopped");
  CHECK(stop["body"]["reason"] == "entry");
  debug.send({{"seq", 1}, {"type", "request"}, {"command", "stackTrace"}});
  const auto trace = debug.message();
  CHECK(trace["command"] == "stackTrace");
  CHECK(trace["body"]["frames"][0]["line"] == 9);
  // requests already sent are answered after stdin closes
  debug.send({{"seq", 2}, {"type", "request"}, {"command", "continue"}});
  CHECK(debug.wait() == 0);
  std::vector<std::string> rest;
  for (std::string line = debug.readLine(); !line.empty(); line = debug.readLine()) rest.push_back(line);
  REQUIRE(rest.size() == 2);
  CHECK(json::parse(rest[0])["command"] == "continue");
  CHECK(json::parse(rest[1])["body"]["code"] == 120);
}

TEST_CASE("debug server prints its address and serves one session") {
  Child server({"debug", "--port", "0", "--stop-on-entry", fixtures::path("fact.ll")});
  const int port = server.port();
  REQUIRE(port > 0);
  CHECK(server.banner.find("ws://localhost:") != std::string::npos);
  {
    ProtocolClient client(connectTcp("127.0.0.1", port));
    auto stop = client.waitEvent("stopped");
    REQUIRE(stop);
    CHECK((*stop)["body"]["topFrame"]["line"] == 9);
    client.request("continue");
    auto exited = client.waitEvent("exited");
    REQUIRE(exited);
    CHECK((*exited)["body"]["code"] == 120);
    client.request("disconnect");
    client.close();
  }
  CHECK(server.wait() == 0);
}

TEST_CASE("debug fails when the port is taken") {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  REQUIRE(::listen(fd, 1) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  const auto r = run({"debug", "--port", std::to_string(port), fixtures::path("fact.ll")});
  ::close(fd);
  CHECK(r.status == 1);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("repl attached to a remote session") {
  Child server({"debug", "--port", "0", "--stop-on-entry", fixtures::path("fact.ll")});
  REQUIRE(server.port() > 0);
  const std::string script = "b fact.c:5:3\nc\nbt\np result\nc\nc\nc\nc\nc\nbt\np result\np n\nc\nq\n";
  const auto r = run({"repl", "--connect", "127.0.0.1:" + std::to_string(server.port())}, script);
  CAPTURE(r.out);
  CHECK(r.out.find("stopped at fact.c:9:10 (entry)") != std::string::npos);
  CHECK(r.out.find("breakpoint 1 at fact.c:5 resolved to 5:3") != std::string::npos);
  CHECK(r.out.find("stopped at fact.c:5:3 (breakpoint 1)") != std::string::npos);
  CHECK(r.out.find("#0 fact at fact.c:5:3\n#1 fact at fact.c:4:18") != std::string::npos);
  CHECK(r.out.find("#6 main at fact.c:9:10") != std::string::npos);
  CHECK(r.out.find("result: int = 1\n") != std::string::npos);
  CHECK(r.out.find("#0 fact at fact.c:5:3\n#1 main at fact.c:9:10\n") != std::string::npos);
  CHECK(r.out.find("result: int = 120\n") != std::string::npos);
  CHECK(r.out.find("n: int = 5\n") != std::string::npos);
  CHECK(r.out.find("exited with code 120") != std::string::npos);
  CHECK(server.wait() == 0);
}

TEST_CASE("repl with a local session") {
  const std::string script = "b global.c:5\nc\np counter\nbt\nrestart 0\np counter\nd 1\nc\nq\n";
  const auto r = run({"repl", fixtures::path("global.ll")}, script);
  CAPTURE(r.out);
  CHECK(r.out.find("deleted breakpoint 1") != std::string::npos);
  CHECK(r.out.find("exited with code") != std::string::npos);
  CHECK(r.out.find("error:") == std::string::npos);
}

TEST_CASE("repl in process") {
  std::thread sessionThread;
  SessionOptions options;
  options.sourceRoots = {fixtures::dir()};
  auto client = connectLocal(options, sessionThread);
  std::istringstream in("b struct.c:999\nb nope\np missing\nscopes\nx\nq\n");
  std::ostringstream out;
  runRepl(*client, in, out, LaunchConfig{fixtures::path("struct.ll"), "main", {}, true});
  client->close();
  sessionThread.join();
  const auto text = out.str();
  CHECK(text.find("(pending)") != std::string::npos);
  CHECK(text.find("usage: b FILE:LINE[:COL]") != std::string::npos);
  CHECK(text.find("no variable missing") != std::string::npos);
  CHECK(text.find("Local:") != std::string::npos);
  CHECK(text.find("commands:") != std::string::npos);
}

TEST_CASE("source roots come from the environment") {
  const auto dir = scratch("roots");
  std::filesystem::create_directories(dir / "src");
  std::filesystem::copy_file(fixtures::path("fact.ll"), dir / "fact.ll", std::filesystem::copy_options::overwrite_existing);
  const auto without = run({"run", (dir / "nulltrap-free.ll").string()});
  CHECK(without.status == 2);

  const std::string script = "b fact.c:5\nq\n";
  const auto missing = run({"repl", (dir / "fact.ll").string()}, script);
  CHECK(missing.out.find("stopped at fact.c:9:10") != std::string::npos);

  std::filesystem::copy_file(fixtures::path("fact.c"), dir / "src" / "fact.c", std::filesystem::copy_options::overwrite_existing);
  auto probe = [&](const std::map<std::string, std::string>& env) {
    Child debug({"debug", "--stdio", "--stop-on-entry", (dir / "fact.ll").string()}, false, env);
    debug.message();
    debug.send({{"seq", 1}, {"type", "request"}, {"command", "source"}, {"arguments", {{"file", "fact.c"}}}});
    const auto r = debug.message();
    debug.wait();
    return r["body"]["available"] == true;
  };
  CHECK_FALSE(probe({}));
  CHECK(probe({{"IRDB_SOURCE_ROOTS", "/nonexistent:" + (dir / "src").string()}}));
}
