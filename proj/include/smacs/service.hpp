#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "smacs/pipeline.hpp"

namespace httplib {
class Server;
}

namespace smacs {

struct FieldIssue {
  std::string field;
  std::string message;
};

/// Parses a POST /v1/ask body: {question, task_kind?, dataset?, seed?,
/// overrides?: {K, n, k_drop, lambda, gamma}}. Problems are collected in
/// `issues` (one per field) rather than thrown.
AskRequest parse_ask_body(const std::string& body, std::vector<FieldIssue>& issues);

struct HttpReply {
  int status = 200;
  std::string body;
};

/// HTTP front for a Pipeline. The pipeline (bank, capability matrix, pool)
/// is shared read-only by all request threads.
class AskService {
 public:
  explicit AskService(std::shared_ptr<const Pipeline> pipeline);
  ~AskService();
  AskService(const AskService&) = delete;
  AskService& operator=(const AskService&) = delete;

  HttpReply handle_ask(const std::string& body) const;
  HttpReply handle_health() const;
  HttpReply handle_pool() const;

  /// Port 0 picks a free port. Returns the bound port; throws Error on
  /// failure.
  int bind(const std::string& host, int port);
  void start();
  void listen_blocking();
  void stop();

 private:
  std::shared_ptr<const Pipeline> pipeline_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace smacs
