#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "irdb/debug_engine.hpp"

namespace irdb {

using json = nlohmann::json;

struct LaunchConfig {
  std::string program;
  std::string entry = "main";
  std::vector<std::string> args;
  bool stopOnEntry = false;
};

struct SessionOptions {
  std::vector<std::filesystem::path> sourceRoots;
  // Program given on the command line. With stopOnEntry it is launched as
  // soon as the session starts; otherwise a `launch` request may omit it.
  std::optional<LaunchConfig> preset;
};

// One debug session speaking the newline-delimited JSON protocol. Lines are
// fed from a transport reader with handleLine(); responses and events go to
// the writer. A private controller thread owns the engine.
class Session {
 public:
  using Writer = std::function<void(const std::string& line)>;

  Session(SessionOptions options, Writer writer);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void start();
  void handleLine(const std::string& line);
  // Stops the controller; a running program is interrupted at its next statement.
  void shutdown();
  bool finished() const { return finished_.load(); }
  void waitFinished();
  // Blocks until every queued request has been answered.
  void drain();

 private:
  struct Request {
    json seq;
    std::string command;
    json arguments;
  };
  struct VariableList {
    int frameId = 0;
    std::vector<std::pair<std::string, SourceValue>> entries;
  };

  void controllerLoop();
  void execute(const Request& request);
  void respond(const Request& request, const json& body);
  void fail(const json& seq, const std::string& command, const std::string& code, const std::string& message);
  void emit(const std::string& event, const json& body);
  void write(const json& message);

  void doLaunch(const Request& r);
  void doResume(const Request& r, ResumeMode mode);
  void doRestart(const Request& r);
  void doSetBreakpoints(const Request& r);
  void doEnableBreakpoint(const Request& r);
  void doStackTrace(const Request& r);
  void doScopes(const Request& r);
  void doVariables(const Request& r);
  void doStatementLocations(const Request& r);
  void doSource(const Request& r);
  void report(const StopEvent& stop);

  json locationJson(const std::optional<LocationDescriptor>& location) const;
  json breakpointJson(const Breakpoint& bp) const;
  int addVariableList(int frameId, std::vector<std::pair<std::string, SourceValue>> entries);

  SessionOptions options_;
  Writer writer_;
  std::mutex writeMutex_;

  std::unique_ptr<SourceRegistry> registry_;
  std::unique_ptr<DebugEngine> engine_;

  std::mutex queueMutex_;
  std::condition_variable queueReady_;
  std::deque<Request> queue_;
  bool executing_ = false;
  std::condition_variable idle_;
  std::atomic<bool> busy_{false};  // a resume-type request is queued or executing
  std::atomic<bool> stopping_{false};
  std::atomic<bool> finished_{false};
  std::thread controller_;
  std::mutex finishMutex_;
  std::condition_variable finishCv_;

  std::map<int, VariableList> variables_;
  int nextVariableRef_ = 1;
};

// --- transports -------------------------------------------------------------

// A bidirectional line channel.
class Connection {
 public:
  virtual ~Connection() = default;
  // False on end of stream.
  virtual bool readLine(std::string& line) = 0;
  virtual void writeLine(const std::string& line) = 0;
  virtual void close() = 0;
};

// Newline-delimited text over a pair of file descriptors (stdio, TCP).
class StreamConnection : public Connection {
 public:
  StreamConnection(int inFd, int outFd, bool ownsFds);
  ~StreamConnection() override;
  bool readLine(std::string& line) override;
  void writeLine(const std::string& line) override;
  void close() override;

 private:
  int in_;
  int out_;
  bool owns_;
  std::string buffer_;
  std::mutex writeMutex_;
  std::atomic<bool> closed_{false};
};

// RFC 6455 text frames; every frame carries one or more protocol lines.
class WebSocketConnection : public Connection {
 public:
  // `pending` holds bytes already read past the handshake.
  WebSocketConnection(int fd, std::string pending, bool client);
  ~WebSocketConnection() override;
  bool readLine(std::string& line) override;
  void writeLine(const std::string& line) override;
  void close() override;

 private:
  bool readFrame(std::string& payload);
  bool fill(std::size_t count);
  void sendFrame(std::uint8_t opcode, const std::string& payload);

  int fd_;
  std::string buffer_;
  std::deque<std::string> lines_;
  std::string partial_;
  bool client_;
  std::mutex writeMutex_;
  std::atomic<bool> closed_{false};
};

std::string websocketAccept(const std::string& key);

// Runs a session over a connection until the client disconnects or the
// stream ends. With drainOnEnd, requests already received are still answered
// after the stream ends.
void runSession(Connection& connection, const SessionOptions& options, bool drainOnEnd = false);

// One TCP port serving raw newline-delimited protocol, websocket upgrades and
// static files over HTTP. The first protocol client owns the session; serve()
// returns when that session ends.
class Server {
 public:
  Server(SessionOptions options, std::filesystem::path staticRoot);
  ~Server();
  // Binds 127.0.0.1:port (0 picks a free port); returns the bound port.
  int listen(int port);
  void serve();
  void stop();

 private:
  void handle(int fd);
  void serveHttp(int fd, const std::string& request);

  SessionOptions options_;
  std::filesystem::path staticRoot_;
  int listenFd_ = -1;
  std::atomic<bool> sessionTaken_{false};
  std::atomic<bool> stopping_{false};
  std::mutex threadsMutex_;
  std::vector<std::thread> threads_;
};

std::string mimeTypeFor(const std::filesystem::path& path);

// --- client -----------------------------------------------------------------

// Request/response client used by the REPL and tests. Events are queued.
class ProtocolClient {
 public:
  explicit ProtocolClient(std::unique_ptr<Connection> connection);
  ~ProtocolClient();

  // Sends a request and waits for its response.
  json request(const std::string& command, const json& arguments = json::object());
  // Next event, waiting up to `timeoutMs`.
  std::optional<json> nextEvent(int timeoutMs = 10000);
  // Next event with the given name, dropping others except `output` which
  // goes to the output callback.
  std::optional<json> waitEvent(const std::string& name, int timeoutMs = 10000);
  void setOutputHandler(std::function<void(const std::string&)> handler) { onOutput_ = std::move(handler); }
  bool connected() const { return !eof_.load(); }
  void close();

 private:
  void readerLoop();

  std::unique_ptr<Connection> connection_;
  std::thread reader_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<long long, json> responses_;
  std::deque<json> events_;
  std::function<void(const std::string&)> onOutput_;
  long long nextSeq_ = 1;
  std::atomic<bool> eof_{false};
};

// In-process session wired to a client through a pair of pipes.
std::unique_ptr<ProtocolClient> connectLocal(const SessionOptions& options, std::thread& sessionThread);
std::unique_ptr<Connection> connectTcp(const std::string& host, int port);
std::unique_ptr<Connection> connectWebSocket(const std::string& host, int port);

}  // namespace irdb
