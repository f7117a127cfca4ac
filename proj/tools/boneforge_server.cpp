// boneforge-server: session API over HTTP and WebSocket.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "server.hpp"

using namespace boneforge;

int main(int argc, char** argv) {
  CLI::App app{"boneforge-server: interactive rig sessions over HTTP and WebSocket"};
  std::vector<std::string> rig_dirs;
  service::ServerConfig cfg;
  std::string save_dir;
  unsigned threads = 0;
  app.add_option("--rigs", rig_dirs, "directory of rig folders (each with rig.json and canonical.obj)")->required();
  app.add_option("--address", cfg.address, "listen address")->capture_default_str();
  app.add_option("--port", cfg.port, "listen port (0 picks one)")->capture_default_str();
  app.add_option("--cors-origin", cfg.cors_origin, "Access-Control-Allow-Origin value")->capture_default_str();
  app.add_option("--max-undo", cfg.max_undo, "undo depth per session")->capture_default_str()->check(
      CLI::PositiveNumber);
  app.add_option("--io-threads", cfg.io_threads, "network threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "compute threads (0 = all cores)")->capture_default_str();
  app.add_option("--save-dir", save_dir, "enables POST /sessions/{id}/save into this directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  cfg.save_dir = save_dir;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  try {
    set_thread_count(threads);
    service::RigRegistry registry;
    for (const auto& d : rig_dirs) registry.scan(d);
    if (registry.list().empty()) {
      std::cerr << "error: no rigs found\n";
      return 2;
    }
    service::Server server(std::move(registry), cfg);
    const unsigned short port = server.start();
    std::cout << "listening on " << cfg.address << ':' << port << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
