#pragma once

// TCP front end for a Session. One reader thread per connection; stepping
// commands run on a single worker so a long ramp never blocks abort.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "cuffbench/session.hpp"
#include "cuffbench/wire.hpp"

namespace cuffbench {

class SessionServer {
 public:
  SessionServer(Session& session, BindAddress address);
  ~SessionServer();

  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and starts accepting. Throws DomainError when the host does not
  /// resolve or the address cannot be bound.
  void start();
  /// Closes the listener and every connection, then joins all threads.
  void stop();

  /// Bound port (useful when started on port 0).
  std::uint16_t port() const { return bound_port_; }

 private:
  struct Connection;

  void accept_loop();
  void serve(const std::shared_ptr<Connection>& conn);
  void handle(const std::shared_ptr<Connection>& conn, const Json& command);
  void worker_loop();
  bool submit(std::function<void()> job);

  Session& session_;
  BindAddress address_;
  int listen_fd_ = -1;
  std::uint16_t bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread worker_thread_;

  std::mutex conn_mu_;
  std::list<std::shared_ptr<Connection>> connections_;

  std::mutex job_mu_;
  std::condition_variable job_cv_;
  std::deque<std::function<void()>> jobs_;
  bool job_running_ = false;
};

}  // namespace cuffbench
