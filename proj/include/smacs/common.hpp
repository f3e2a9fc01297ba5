#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smacs {

enum class TaskKind { BoxedMath, MultipleChoice, ExactMatch, Instruction, Code };

std::string_view to_string(TaskKind kind);
std::optional<TaskKind> parse_task_kind(std::string_view text);

// Error hierarchy. Every error carries a short machine-readable tag so the
// service and CLI can map it to an HTTP status / exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BankError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class EndpointError : public Error {
 public:
  EndpointError(const std::string& message, std::vector<std::string> attempt_log = {})
      : Error(message), attempt_log_(std::move(attempt_log)) {}
  const std::vector<std::string>& attempt_log() const { return attempt_log_; }

 private:
  std::vector<std::string> attempt_log_;
};

// Prompt plus completion exceeded the model context.
class TruncationError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

// Endpoint is reachable but cannot do what was asked (e.g. no logprobs).
class CapabilityError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// FNV-1a, 64 bit. Stable across platforms; used for content hashes and for
// deriving per-item seeds.
std::uint64_t fnv1a(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Maps 64 random bits to [0, 1) with 53 bits of mantissa.
inline double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::string hex64(std::uint64_t v);

}  // namespace smacs
