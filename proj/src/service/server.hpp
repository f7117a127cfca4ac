#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "session.hpp"

namespace boneforge::service {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::string cors_origin = "*";
  std::size_t max_undo = 256;
  std::size_t io_threads = 2;
  std::filesystem::path save_dir;  // empty disables POST /sessions/{id}/save
};

// Response of the transport-independent HTTP router.
struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Session store plus HTTP routing; no sockets.
class Service {
 public:
  Service(RigRegistry registry, ServerConfig cfg);

  // `target` is the request target (path plus optional query).
  HttpReply route(const std::string& method, const std::string& target, const std::string& body);
  std::shared_ptr<Session> session(const std::string& id) const;
  const ServerConfig& config() const { return cfg_; }
  void shutdown();

 private:
  HttpReply create_session(const std::string& body);

  RigRegistry registry_;
  ServerConfig cfg_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;
};

// HTTP/1.1 and WebSocket front end. WebSocket clients connect to
// /sessions/{id}/ws (add ?format=json for inline JSON mesh updates).
class Server {
 public:
  Server(RigRegistry registry, ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds, starts the I/O threads and returns the bound port.
  unsigned short start();
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  Service& service() { return *service_; }

 private:
  struct Impl;
  std::unique_ptr<Service> service_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace boneforge::service
