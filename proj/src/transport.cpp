#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <csignal>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "irdb/session_server.hpp"

namespace irdb {

namespace {

void ignoreSigpipe() {
  static const bool once = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

bool writeAll(int fd, const char* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::write(fd, data, size);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

bool isSocket(int fd) {
  int type = 0;
  socklen_t len = sizeof type;
  return getsockopt(fd, SOL_SOCKET, SO_TYPE, &type, &len) == 0;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Reads until the blank line ending an HTTP header. Extra bytes go to `rest`.
bool readHttpHeader(int fd, std::string& header, std::string& rest) {
  std::string data = rest;
  for (;;) {
    auto end = data.find("\r\n\r\n");
    if (end != std::string::npos) {
      header = data.substr(0, end + 4);
      rest = data.substr(end + 4);
      return true;
    }
    if (data.size() > 64 * 1024) return false;
    char buf[4096];
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.append(buf, static_cast<std::size_t>(n));
  }
}

std::map<std::string, std::string> headerFields(const std::string& header) {
  std::map<std::string, std::string> out;
  std::istringstream in(header);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    out[lower(line.substr(0, colon))] = value;
  }
  return out;
}

std::string httpResponse(int status, const std::string& reason, const std::string& type, const std::string& body) {
  std::ostringstream out;
  out << "HTTP/1.1 " << status << ' ' << reason << "\r\n"
      << "Content-Type: " << type << "\r\n"
      << "Content-Length: " << body.size() << "\r\n"
      << "Connection: close\r\n\r\n"
      << body;
  return out.str();
}

std::string base64(const unsigned char* data, std::size_t size) {
  std::string out(4 * ((size + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(size));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace

// --- stream -----------------------------------------------------------------

StreamConnection::StreamConnection(int inFd, int outFd, bool ownsFds) : in_(inFd), out_(outFd), owns_(ownsFds) {
  ignoreSigpipe();
}

StreamConnection::~StreamConnection() {
  close();
  if (owns_) {
    ::close(in_);
    if (out_ != in_) ::close(out_);
  }
}

bool StreamConnection::readLine(std::string& line) {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    char buf[4096];
    const ssize_t n = ::read(in_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      if (buffer_.empty()) return false;
      line = std::move(buffer_);
      buffer_.clear();
      return true;
    }
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

void StreamConnection::writeLine(const std::string& line) {
  std::lock_guard lock(writeMutex_);
  if (closed_) return;
  const std::string data = line + "\n";
  if (!writeAll(out_, data.data(), data.size())) closed_ = true;
}

void StreamConnection::close() {
  if (closed_.exchange(true)) return;
  if (isSocket(in_)) {
    ::shutdown(in_, SHUT_RDWR);
  } else if (owns_ && out_ != in_) {
    // Closing our write end lets the peer's reader see end of stream.
    ::close(out_);
    out_ = in_;
  }
}

// --- websocket --------------------------------------------------------------

std::string websocketAccept(const std::string& key) {
  const std::string input = key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(input.data()), input.size(), digest);
  return base64(digest, sizeof digest);
}

WebSocketConnection::WebSocketConnection(int fd, std::string pending, bool client)
    : fd_(fd), buffer_(std::move(pending)), client_(client) {
  ignoreSigpipe();
}

WebSocketConnection::~WebSocketConnection() {
  close();
  ::close(fd_);
}

bool WebSocketConnection::fill(std::size_t count) {
  while (buffer_.size() < count) {
    char buf[4096];
    const ssize_t n = ::read(fd_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
  return true;
}

bool WebSocketConnection::readFrame(std::string& payload) {
  payload.clear();
  for (;;) {
    if (!fill(2)) return false;
    const auto b0 = static_cast<std::uint8_t>(buffer_[0]);
    const auto b1 = static_cast<std::uint8_t>(buffer_[1]);
    const bool fin = b0 & 0x80;
    const std::uint8_t opcode = b0 & 0x0f;
    const bool masked = b1 & 0x80;
    std::uint64_t length = b1 & 0x7f;
    std::size_t header = 2;
    if (length == 126) {
      if (!fill(4)) return false;
      length = (static_cast<std::uint8_t>(buffer_[2]) << 8) | static_cast<std::uint8_t>(buffer_[3]);
      header = 4;
    } else if (length == 127) {
      if (!fill(10)) return false;
      length = 0;
      for (int i = 0; i < 8; ++i) length = (length << 8) | static_cast<std::uint8_t>(buffer_[2 + i]);
      header = 10;
    }
    if (length > (64u << 20)) return false;
    std::uint8_t mask[4] = {0, 0, 0, 0};
    if (masked) {
      if (!fill(header + 4)) return false;
      for (int i = 0; i < 4; ++i) mask[i] = static_cast<std::uint8_t>(buffer_[header + i]);
      header += 4;
    }
    if (!fill(header + length)) return false;
    std::string data = buffer_.substr(header, length);
    buffer_.erase(0, header + length);
    if (masked) {
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<char>(data[i] ^ mask[i % 4]);
    }
    switch (opcode) {
      case 0x8:
        sendFrame(0x8, "");
        return false;
      case 0x9:
        sendFrame(0xA, data);
        continue;
      case 0xA:
        continue;
      default:
        payload += data;
        if (fin) return true;
    }
  }
}

bool WebSocketConnection::readLine(std::string& line) {
  while (lines_.empty()) {
    std::string payload;
    if (!readFrame(payload)) return false;
    std::istringstream in(payload);
    std::string part;
    while (std::getline(in, part)) {
      if (!part.empty() && part.back() == '\r') part.pop_back();
      if (!part.empty()) lines_.push_back(part);
    }
  }
  line = std::move(lines_.front());
  lines_.pop_front();
  return true;
}

void WebSocketConnection::sendFrame(std::uint8_t opcode, const std::string& payload) {
  std::lock_guard lock(writeMutex_);
  if (closed_ && opcode != 0x8) return;
  std::string frame;
  frame.push_back(static_cast<char>(0x80 | opcode));
  const std::uint8_t maskBit = client_ ? 0x80 : 0;
  if (payload.size() < 126) {
    frame.push_back(static_cast<char>(maskBit | payload.size()));
  } else if (payload.size() < 65536) {
    frame.push_back(static_cast<char>(maskBit | 126));
    frame.push_back(static_cast<char>(payload.size() >> 8));
    frame.push_back(static_cast<char>(payload.size() & 0xff));
  } else {
    frame.push_back(static_cast<char>(maskBit | 127));
    for (int i = 7; i >= 0; --i) frame.push_back(static_cast<char>((payload.size() >> (8 * i)) & 0xff));
  }
  if (client_) {
    static thread_local std::mt19937 rng{std::random_device{}()};
    std::uint8_t mask[4];
    for (auto& m : mask) m = static_cast<std::uint8_t>(rng());
    frame.append(reinterpret_cast<const char*>(mask), 4);
    for (std::size_t i = 0; i < payload.size(); ++i) frame.push_back(static_cast<char>(payload[i] ^ mask[i % 4]));
  } else {
    frame += payload;
  }
  if (!writeAll(fd_, frame.data(), frame.size())) closed_ = true;
}

void WebSocketConnection::writeLine(const std::string& line) { sendFrame(0x1, line); }

void WebSocketConnection::close() {
  if (closed_) return;
  sendFrame(0x8, "");
  closed_ = true;
  ::shutdown(fd_, SHUT_RDWR);
}

// --- session driver ---------------------------------------------------------

void runSession(Connection& connection, const SessionOptions& options, bool drainOnEnd) {
  Session session(options, [&connection](const std::string& line) { connection.writeLine(line); });
  session.start();
  std::string line;
  while (!session.finished() && connection.readLine(line)) session.handleLine(line);
  if (drainOnEnd) session.drain();
  session.shutdown();
  connection.close();
}

// --- server -----------------------------------------------------------------

std::string mimeTypeFor(const std::filesystem::path& path) {
  static const std::map<std::string, std::string> types = {
      {".html", "text/html; charset=utf-8"}, {".js", "text/javascript; charset=utf-8"},
      {".css", "text/css; charset=utf-8"},   {".json", "application/json"},
      {".svg", "image/svg+xml"},             {".png", "image/png"},
      {".ico", "image/x-icon"},              {".map", "application/json"}};
  auto it = types.find(lower(path.extension().string()));
  return it == types.end() ? "application/octet-stream" : it->second;
}

Server::Server(SessionOptions options, std::filesystem::path staticRoot)
    : options_(std::move(options)), staticRoot_(std::move(staticRoot)) {
  ignoreSigpipe();
}

Server::~Server() {
  stop();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(threadsMutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
  if (listenFd_ >= 0) ::close(listenFd_);
}

int Server::listen(int port) {
  listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listenFd_ < 0) throw std::runtime_error("cannot create socket");
  int one = 1;
  setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(listenFd_);
    listenFd_ = -1;
    if (err == EADDRINUSE) throw std::runtime_error("port " + std::to_string(port) + " is already in use");
    throw std::runtime_error("cannot bind port " + std::to_string(port) + ": " + std::strerror(err));
  }
  if (::listen(listenFd_, 16) != 0) throw std::runtime_error("cannot listen on port " + std::to_string(port));
  socklen_t len = sizeof addr;
  getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

void Server::stop() { stopping_ = true; }

void Server::serve() {
  while (!stopping_) {
    pollfd p{listenFd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listenFd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(threadsMutex_);
    threads_.emplace_back([this, fd] { handle(fd); });
  }
}

void Server::handle(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  // A raw protocol client may wait for the server to speak first, so silence
  // means raw mode.
  pollfd p{fd, POLLIN, 0};
  char peek[4] = {0, 0, 0, 0};
  ssize_t n = 0;
  if (::poll(&p, 1, 300) > 0) n = ::recv(fd, peek, sizeof peek, MSG_PEEK);
  const bool http = n == 4 && std::string(peek, 4) == "GET ";

  auto claim = [this] { return !sessionTaken_.exchange(true); };

  if (!http) {
    if (!claim()) {
      const std::string msg =
          R"({"type":"event","event":"rejected","body":{"reason":"a client is already attached"}})" "\n";
      writeAll(fd, msg.data(), msg.size());
      ::close(fd);
      return;
    }
    StreamConnection connection(fd, fd, true);
    runSession(connection, options_);
    stopping_ = true;
    return;
  }

  std::string header, rest;
  if (!readHttpHeader(fd, header, rest)) {
    ::close(fd);
    return;
  }
  const auto fields = headerFields(header);
  auto upgrade = fields.find("upgrade");
  if (upgrade != fields.end() && lower(upgrade->second) == "websocket") {
    auto key = fields.find("sec-websocket-key");
    if (key == fields.end() || !claim()) {
      const auto resp = httpResponse(409, "Conflict", "text/plain", "a client is already attached\n");
      writeAll(fd, resp.data(), resp.size());
      ::close(fd);
      return;
    }
    const std::string resp = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                             "Sec-WebSocket-Accept: " + websocketAccept(key->second) + "\r\n\r\n";
    writeAll(fd, resp.data(), resp.size());
    WebSocketConnection connection(fd, rest, false);
    runSession(connection, options_);
    stopping_ = true;
    return;
  }
  serveHttp(fd, header);
  ::close(fd);
}

void Server::serveHttp(int fd, const std::string& request) {
  std::istringstream in(request);
  std::string method, target;
  in >> method >> target;
  target = target.substr(0, target.find('?'));
  if (target.empty() || target == "/") target = "/index.html";
  std::string response;
  const auto relative = std::filesystem::path(target.substr(1)).lexically_normal();
  if (relative.empty() || relative.is_absolute() || *relative.begin() == "..") {
    response = httpResponse(403, "Forbidden", "text/plain", "forbidden\n");
  } else {
    const auto path = staticRoot_ / relative;
    std::ifstream file(path, std::ios::binary);
    if (!file || std::filesystem::is_directory(path)) {
      response = httpResponse(404, "Not Found", "text/plain", "not found\n");
    } else {
      std::ostringstream body;
      body << file.rdbuf();
      response = httpResponse(200, "OK", mimeTypeFor(path), body.str());
    }
  }
  writeAll(fd, response.data(), response.size());
}

// --- client -----------------------------------------------------------------

ProtocolClient::ProtocolClient(std::unique_ptr<Connection> connection) : connection_(std::move(connection)) {
  reader_ = std::thread([this] { readerLoop(); });
}

ProtocolClient::~ProtocolClient() { close(); }

void ProtocolClient::close() {
  if (connection_) connection_->close();
  if (reader_.joinable()) reader_.join();
}

void ProtocolClient::readerLoop() {
  std::string line;
  while (connection_->readLine(line)) {
    json message;
    try {
      message = json::parse(line);
    } catch (const json::exception&) {
      continue;
    }
    std::function<void(const std::string&)> output;
    {
      std::lock_guard lock(mutex_);
      if (message.value("type", "") == "response" && message["seq"].is_number_integer()) {
        responses_[message["seq"].get<long long>()] = message;
      } else if (message.value("event", "") == "output" && onOutput_) {
        output = onOutput_;
      } else {
        events_.push_back(message);
      }
    }
    if (output) output(message["body"].value("text", ""));
    cv_.notify_all();
  }
  eof_ = true;
  cv_.notify_all();
}

json ProtocolClient::request(const std::string& command, const json& arguments) {
  long long seq;
  {
    std::lock_guard lock(mutex_);
    seq = nextSeq_++;
  }
  connection_->writeLine(json{{"seq", seq}, {"type", "request"}, {"command", command}, {"arguments", arguments}}.dump());
  std::unique_lock lock(mutex_);
  if (!cv_.wait_for(lock, std::chrono::seconds(60), [&] { return responses_.count(seq) || eof_.load(); })) {
    throw std::runtime_error("no response to '" + command + "'");
  }
  auto it = responses_.find(seq);
  if (it == responses_.end()) throw std::runtime_error("connection closed");
  json response = std::move(it->second);
  responses_.erase(it);
  return response;
}

std::optional<json> ProtocolClient::nextEvent(int timeoutMs) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, std::chrono::milliseconds(timeoutMs), [&] { return !events_.empty() || eof_.load(); });
  if (events_.empty()) return std::nullopt;
  json event = std::move(events_.front());
  events_.pop_front();
  return event;
}

std::optional<json> ProtocolClient::waitEvent(const std::string& name, int timeoutMs) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeoutMs);
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    auto event = nextEvent(static_cast<int>(left.count()));
    if (!event) return std::nullopt;
    if (event->value("event", "") == name) return event;
  }
}

std::unique_ptr<ProtocolClient> connectLocal(const SessionOptions& options, std::thread& sessionThread) {
  int toServer[2], toClient[2];
  if (::pipe(toServer) != 0 || ::pipe(toClient) != 0) throw std::runtime_error("cannot create pipes");
  auto serverSide = std::make_shared<StreamConnection>(toServer[0], toClient[1], true);
  sessionThread = std::thread([serverSide, options] { runSession(*serverSide, options); });
  return std::make_unique<ProtocolClient>(std::make_unique<StreamConnection>(toClient[0], toServer[1], true));
}

namespace {

int tcpConnect(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0) {
    throw std::runtime_error("cannot resolve " + host);
  }
  int fd = -1;
  for (auto* a = result; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(result);
  if (fd < 0) throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port));
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

}  // namespace

std::unique_ptr<Connection> connectTcp(const std::string& host, int port) {
  const int fd = tcpConnect(host, port);
  return std::make_unique<StreamConnection>(fd, fd, true);
}

std::unique_ptr<Connection> connectWebSocket(const std::string& host, int port) {
  const int fd = tcpConnect(host, port);
  unsigned char nonce[16];
  std::random_device rd;
  for (auto& b : nonce) b = static_cast<unsigned char>(rd());
  const auto key = base64(nonce, sizeof nonce);
  const std::string request = "GET / HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                              "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                              "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  writeAll(fd, request.data(), request.size());
  std::string header, rest;
  if (!readHttpHeader(fd, header, rest) || header.rfind("HTTP/1.1 101", 0) != 0) {
    ::close(fd);
    throw std::runtime_error("websocket handshake rejected");
  }
  const auto fields = headerFields(header);
  auto accept = fields.find("sec-websocket-accept");
  if (accept == fields.end() || accept->second != websocketAccept(key)) {
    ::close(fd);
    throw std::runtime_error("websocket handshake has a wrong accept key");
  }
  return std::make_unique<WebSocketConnection>(fd, rest, true);
}

}  // namespace irdb
