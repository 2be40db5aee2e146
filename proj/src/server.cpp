#include "cuffbench/server.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cuffbench/errors.hpp"

namespace cuffbench {

struct SessionServer::Connection {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> open{true};
  std::atomic<bool> finished{false};
  std::shared_ptr<Subscription> subscription;
  std::thread reader;
  std::thread writer;

  bool send(const Json& message) {
    if (!open) return false;
    const std::string frame = encode_frame(message);
    std::lock_guard lock(write_mu);
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::send(fd, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        open = false;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  void shutdown() {
    open = false;
    if (subscription) subscription->close();
    ::shutdown(fd, SHUT_RDWR);
  }
};

SessionServer::SessionServer(Session& session, BindAddress address)
    : session_(session), address_(std::move(address)) {}

SessionServer::~SessionServer() { stop(); }

void SessionServer::start() {
  if (running_) return;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(address_.port);
  if (const int rc = ::getaddrinfo(address_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw DomainError("cannot resolve '" + address_.host + "': " + ::gai_strerror(rc));
  }
  std::string last_error = "no usable address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
      listen_fd_ = fd;
      break;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) {
    throw DomainError("cannot bind " + address_.host + ":" + port + ": " + last_error);
  }
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET) {
    bound_port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  } else {
    bound_port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  }
  running_ = true;
  worker_thread_ = std::thread([this] { worker_loop(); });
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void SessionServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;

  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(conn_mu_);
    conns.swap(connections_);
  }
  for (auto& c : conns) c->shutdown();
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
  job_cv_.notify_all();
  if (worker_thread_.joinable()) worker_thread_.join();
}

void SessionServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(conn_mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    for (auto c = connections_.begin(); c != connections_.end();) {
      if ((*c)->finished) {
        if ((*c)->reader.joinable()) (*c)->reader.join();
        if ((*c)->writer.joinable()) (*c)->writer.join();
        ::close((*c)->fd);
        c = connections_.erase(c);
      } else {
        ++c;
      }
    }
    connections_.push_back(conn);
    conn->reader = std::thread([this, conn] { serve(conn); });
  }
}

bool SessionServer::submit(std::function<void()> job) {
  std::lock_guard lock(job_mu_);
  if (job_running_ || !jobs_.empty() || session_.stepping()) return false;
  jobs_.push_back(std::move(job));
  job_cv_.notify_one();
  return true;
}

void SessionServer::worker_loop() {
  while (true) {
    std::function<void()> job;
    {
      std::unique_lock lock(job_mu_);
      job_cv_.wait(lock, [&] { return !jobs_.empty() || !running_; });
      if (jobs_.empty()) return;
      job = std::move(jobs_.front());
      jobs_.pop_front();
      job_running_ = true;
    }
    job();
    std::lock_guard lock(job_mu_);
    job_running_ = false;
  }
}

void SessionServer::handle(const std::shared_ptr<Connection>& conn, const Json& cmd) {
  const auto it = cmd.find("command");
  const std::string name = it != cmd.end() && it->is_string() ? it->get<std::string>() : "";
  if (name == "subscribe") {
    if (conn->subscription) {
      conn->send(error_message("already subscribed", name));
      return;
    }
    conn->subscription = session_.subscribe();
    conn->writer = std::thread([this, conn] {
      while (running_ && conn->open) {
        auto m = conn->subscription->next(std::chrono::milliseconds(100));
        if (!m) {
          if (conn->subscription->closed()) break;
          continue;
        }
        if (!conn->send(*m)) break;
      }
    });
  } else if (name == "run_step" || name == "run_to_saturation") {
    const bool accepted = submit([this, conn, cmd] {
      if (auto err = apply_command(session_, cmd)) conn->send(*err);
    });
    if (!accepted) conn->send(error_message("a step is already in progress", name));
  } else if (auto err = apply_command(session_, cmd)) {
    conn->send(*err);
  }
}

void SessionServer::serve(const std::shared_ptr<Connection>& conn) {
  FrameDecoder decoder;
  char buf[4096];
  while (running_ && conn->open) {
    pollfd pfd{conn->fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    if (rc < 0 && errno != EINTR) break;
    if (rc <= 0) continue;
    const ssize_t n = ::recv(conn->fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    std::string_view chunk(buf, static_cast<std::size_t>(n));
    bool fatal = false;
    while (true) {
      std::optional<Json> failure;
      try {
        decoder.feed(chunk);
      } catch (const ProtocolError& e) {
        failure = error_message(e.what());
        fatal = true;
      } catch (const ParseError& e) {
        failure = error_message(std::string(e.what()) + " at " + e.location());
      }
      chunk = {};
      while (auto cmd = decoder.next()) handle(conn, *cmd);
      if (!failure) break;
      conn->send(*failure);
      if (fatal) break;
    }
    if (fatal) break;
  }
  conn->shutdown();
  conn->finished = true;
}

}  // namespace cuffbench
