#include "smacs/sim_server.hpp"

#include "httplib.h"

namespace smacs::sim {

SimServer::SimServer(std::shared_ptr<const SimPool> pool, Observer observer)
    : pool_(std::move(pool)), observer_(std::move(observer)), server_(std::make_unique<httplib::Server>()) {
  auto route = [this](const std::string& path) {
    return [this, path](const httplib::Request& req, httplib::Response& res) {
      if (observer_) observer_(path, req.body);
      const auto reply = pool_->handle(path, req.body);
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    };
  };
  server_->Post("/v1/chat/completions", route("/chat/completions"));
  server_->Post("/v1/embeddings", route("/embeddings"));
  server_->Post("/v1/completions", route("/completions"));
  server_->Get("/v1/models", route("/models"));
}

SimServer::~SimServer() { stop(); }

int SimServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void SimServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void SimServer::listen_blocking() { server_->listen_after_bind(); }

void SimServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace smacs::sim
