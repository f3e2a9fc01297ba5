#pragma once

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "smacs/sim_pool.hpp"

namespace httplib {
class Server;
}

namespace smacs::sim {

/// Local OpenAI-compatible HTTP front for a SimPool, routes under /v1.
class SimServer {
 public:
  using Observer = std::function<void(const std::string& path, const std::string& body)>;

  explicit SimServer(std::shared_ptr<const SimPool> pool, Observer observer = {});
  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void start();            // serve on a background thread
  void listen_blocking();  // serve on the calling thread
  void stop();

 private:
  std::shared_ptr<const SimPool> pool_;
  Observer observer_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace smacs::sim
