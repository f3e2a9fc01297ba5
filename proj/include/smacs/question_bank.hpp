#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "smacs/common.hpp"

namespace smacs {

struct QuestionRecord {
  std::string id;
  std::string dataset;
  TaskKind task_kind = TaskKind::ExactMatch;
  std::string question;
  std::string label;
  std::vector<double> embedding;  // empty until the retrieval stage fills it
};

struct Verdict {
  bool correct = false;
  std::string extracted;  // empty iff extraction failed
  std::string reason;
};

namespace verdict_reason {
inline constexpr const char* kMatch = "match";
inline constexpr const char* kMismatch = "mismatch";
inline constexpr const char* kExtractionFailed = "extraction-failed";
inline constexpr const char* kHookPass = "hook-pass";
inline constexpr const char* kHookReject = "hook-reject";
inline constexpr const char* kHookFailure = "hook-failure";
inline constexpr const char* kNeedsHook = "code-requires-hook";
}  // namespace verdict_reason

/// Canonical form used by every string comparison in the verifiers: strips
/// `$`, `\left`, `\right`, trims, and collapses internal whitespace runs.
std::string normalize_answer(std::string_view text);

/// Contents of the last balanced `\boxed{...}` span, if any.
std::optional<std::string> extract_boxed(std::string_view response);

/// Upper-cased letter from the last "The answer is (X)" phrase, if any.
std::optional<std::string> extract_choice(std::string_view response);

/// Deterministic label check for every non-code task kind. Instruction
/// tasks are compared like exact-match.
Verdict verify_response(std::string_view response, std::string_view label, TaskKind kind);

struct HookOptions {
  std::string command;  // run through /bin/sh -c; empty means unset
  std::chrono::milliseconds timeout{30000};
};

/// Runs the external checker with a JSON document {response, record} on its
/// stdin. Exit status 0 means correct. A missing command, a command the
/// shell cannot run (status 126/127), a signal, or a timeout all produce
/// reason=hook-failure and are never counted as correct.
Verdict verify_via_hook(std::string_view response, const QuestionRecord& record, const HookOptions& hook);

struct BankHeader {
  std::string embedding_model;  // empty when no embeddings stored
  std::size_t dim = 0;
  bool operator==(const BankHeader&) const = default;
};

/// The unified labeled question bank. Built single-writer, then shared
/// read-only.
class QuestionBank {
 public:
  /// Appends records. All-or-nothing: a duplicate id (against the bank or
  /// within the batch) or an empty label rejects the whole batch.
  std::size_t ingest(std::vector<QuestionRecord> records);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const QuestionRecord& at(std::size_t i) const { return records_.at(i); }
  const std::vector<QuestionRecord>& records() const { return records_; }
  std::optional<std::size_t> find(std::string_view id) const;

  const BankHeader& header() const { return header_; }

  /// Installs one unit vector per record (bank order). Norms are checked.
  void set_embeddings(std::string model, std::vector<std::vector<double>> vectors);
  bool embedded() const { return header_.dim > 0 && !records_.empty(); }

  /// Row-major N x dim copy of all embeddings, for the similarity kernel.
  std::span<const double> embedding_matrix() const { return matrix_; }

  void save(const std::filesystem::path& path) const;
  static QuestionBank load(const std::filesystem::path& path);

 private:
  std::vector<QuestionRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  BankHeader header_;
  std::vector<double> matrix_;
};

/// Reads ingest input: one JSON object per line with
/// {id, dataset, task_kind, question, label}.
std::vector<QuestionRecord> read_question_records(const std::filesystem::path& path);

/// R x N correctness bits; row order is the pool's stable model order.
class CapabilityMatrix {
 public:
  CapabilityMatrix() = default;
  CapabilityMatrix(std::vector<std::string> model_ids, std::size_t columns);

  std::size_t rows() const { return model_ids_.size(); }
  std::size_t cols() const { return cols_; }
  const std::vector<std::string>& model_ids() const { return model_ids_; }

  bool bit(std::size_t row, std::size_t col) const { return bits_[row * cols_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool value) { bits_[row * cols_ + col] = value ? 1 : 0; }
  std::span<const std::uint8_t> data() const { return bits_; }

  std::optional<std::size_t> row_of(std::string_view model_id) const;

  /// Rows reordered/subset to `ids`. Throws BankError naming a missing id.
  CapabilityMatrix select_rows(const std::vector<std::string>& ids) const;

  /// Header line of tab-separated model ids, then one row of 0/1 characters
  /// per model.
  void save(const std::filesystem::path& path) const;
  static CapabilityMatrix load(const std::filesystem::path& path);

  bool operator==(const CapabilityMatrix&) const = default;

 private:
  std::vector<std::string> model_ids_;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// model id -> (question id -> raw response).
using Transcripts = std::map<std::string, std::map<std::string, std::string>>;

void save_transcripts(const Transcripts& transcripts, const std::filesystem::path& path);
Transcripts load_transcripts(const std::filesystem::path& path);

/// Scores every (model, question) pair. Code questions go through `hook`;
/// everything else through verify_response.
CapabilityMatrix build_capability_matrix(const QuestionBank& bank, const std::vector<std::string>& model_ids,
                                         const Transcripts& transcripts, const HookOptions& hook = {});

}  // namespace smacs
