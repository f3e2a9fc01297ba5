#include "smacs/question_bank.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <fstream>
#include <regex>
#include <thread>
#include <unordered_set>

#include "json.hpp"

namespace smacs {

using nlohmann::json;

namespace {

void erase_all(std::string& s, std::string_view token) {
  for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos)) {
    s.erase(pos, token.size());
  }
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

// "(b)" / "b" / " B " -> "B"
std::string normalize_choice_label(std::string_view label) {
  std::string s = normalize_answer(label);
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
  return upper(normalize_answer(s));
}

Verdict compare(std::string extracted, std::string_view expected) {
  Verdict v;
  v.correct = extracted == expected;
  v.reason = v.correct ? verdict_reason::kMatch : verdict_reason::kMismatch;
  v.extracted = std::move(extracted);
  return v;
}

Verdict extraction_failed() { return Verdict{false, "", verdict_reason::kExtractionFailed}; }

json record_to_json(const QuestionRecord& r, bool with_embedding) {
  json j = {{"id", r.id},
            {"dataset", r.dataset},
            {"task_kind", std::string(to_string(r.task_kind))},
            {"question", r.question},
            {"label", r.label}};
  if (with_embedding) j["embedding"] = r.embedding;
  return j;
}

QuestionRecord record_from_json(const json& j, const std::string& where) {
  QuestionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.dataset = j.value("dataset", std::string{});
    const auto kind_text = j.at("task_kind").get<std::string>();
    const auto kind = parse_task_kind(kind_text);
    if (!kind) throw BankError(where + ": unknown task_kind '" + kind_text + "'");
    r.task_kind = *kind;
    r.question = j.at("question").get<std::string>();
    r.label = j.at("label").get<std::string>();
    if (j.contains("embedding") && !j["embedding"].is_null()) {
      r.embedding = j["embedding"].get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw BankError(where + ": " + e.what());
  }
  return r;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string s(text);
  erase_all(s, "\\left");
  erase_all(s, "\\right");
  erase_all(s, "$");
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::optional<std::string> extract_boxed(std::string_view response) {
  constexpr std::string_view kOpen = "\\boxed{";
  std::size_t pos = response.rfind(kOpen);
  // Walk back over candidates whose braces never close.
  while (pos != std::string_view::npos) {
    int depth = 1;
    const std::size_t start = pos + kOpen.size();
    for (std::size_t i = start; i < response.size(); ++i) {
      if (response[i] == '{') ++depth;
      if (response[i] == '}' && --depth == 0) {
        return std::string(response.substr(start, i - start));
      }
    }
    if (pos == 0) break;
    pos = response.rfind(kOpen, pos - 1);
  }
  return std::nullopt;
}

std::optional<std::string> extract_choice(std::string_view response) {
  static const std::regex kPattern(R"(answer is\s*\(?\s*([A-Za-z])\s*\)?(?![A-Za-z]))", std::regex::icase);
  std::optional<std::string> last;
  const std::string text(response);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kPattern); it != std::sregex_iterator(); ++it) {
    last = upper((*it)[1].str());
  }
  return last;
}

Verdict verify_response(std::string_view response, std::string_view label, TaskKind kind) {
  switch (kind) {
    case TaskKind::BoxedMath: {
      auto boxed = extract_boxed(response);
      if (!boxed) return extraction_failed();
      std::string got = normalize_answer(*boxed);
      if (got.empty()) return extraction_failed();
      return compare(std::move(got), normalize_answer(label));
    }
    case TaskKind::MultipleChoice: {
      auto letter = extract_choice(response);
      if (!letter) return extraction_failed();
      return compare(std::move(*letter), normalize_choice_label(label));
    }
    case TaskKind::ExactMatch:
    case TaskKind::Instruction: {
      std::string got = normalize_answer(response);
      if (got.empty()) return extraction_failed();
      return compare(std::move(got), normalize_answer(label));
    }
    case TaskKind::Code:
      break;
  }
  return Verdict{false, "", verdict_reason::kNeedsHook};
}

Verdict verify_via_hook(std::string_view response, const QuestionRecord& record, const HookOptions& hook) {
  const Verdict failure{false, "", verdict_reason::kHookFailure};
  if (hook.command.empty()) return failure;

  static const bool sigpipe_ignored = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;

  const std::string payload =
      json{{"response", std::string(response)}, {"record", record_to_json(record, false)}}.dump() + "\n";

  int fds[2];
  if (::pipe(fds) != 0) return failure;
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    return failure;
  }
  if (pid == 0) {
    ::dup2(fds[0], STDIN_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    const int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) {
      ::dup2(devnull, STDOUT_FILENO);
      ::dup2(devnull, STDERR_FILENO);
    }
    ::execl("/bin/sh", "sh", "-c", hook.command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[0]);
  ::fcntl(fds[1], F_SETFL, O_NONBLOCK);

  const auto deadline = std::chrono::steady_clock::now() + hook.timeout;
  std::size_t written = 0;
  bool write_open = true;
  int status = 0;
  for (;;) {
    if (write_open) {
      if (written < payload.size()) {
        const ssize_t n = ::write(fds[1], payload.data() + written, payload.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) written = payload.size();
      }
      if (written >= payload.size()) {
        ::close(fds[1]);
        write_open = false;
      }
    }
    const pid_t done = ::waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      if (write_open) ::close(fds[1]);
      return failure;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  if (write_open) ::close(fds[1]);

  if (!WIFEXITED(status)) return failure;
  const int code = WEXITSTATUS(status);
  if (code == 126 || code == 127) return failure;
  std::string extracted = normalize_answer(response);
  if (extracted.empty()) extracted = "<empty>";
  if (code == 0) return Verdict{true, std::move(extracted), verdict_reason::kHookPass};
  return Verdict{false, std::move(extracted), verdict_reason::kHookReject};
}

// ---------------------------------------------------------------------------
// QuestionBank

std::size_t QuestionBank::ingest(std::vector<QuestionRecord> records) {
  std::unordered_set<std::string> batch;
  for (const auto& r : records) {
    if (r.id.empty()) throw BankError("record with empty id");
    if (index_.count(r.id) || !batch.insert(r.id).second) throw BankError("duplicate id: " + r.id);
    if (normalize_answer(r.label).empty()) throw BankError("empty label for id: " + r.id);
  }
  for (auto& r : records) {
    r.embedding.clear();
    index_.emplace(r.id, records_.size());
    records_.push_back(std::move(r));
  }
  // New rows have no embeddings; the bank is no longer fully embedded.
  if (!records.empty()) {
    header_ = {};
    matrix_.clear();
    for (auto& r : records_) r.embedding.clear();
  }
  return records.size();
}

std::optional<std::size_t> QuestionBank::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void QuestionBank::set_embeddings(std::string model, std::vector<std::vector<double>> vectors) {
  if (vectors.size() != records_.size()) {
    throw BankError("embedding count " + std::to_string(vectors.size()) + " != bank size " +
                    std::to_string(records_.size()));
  }
  if (records_.empty()) throw BankError("cannot embed an empty bank");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw BankError("zero-dimensional embedding");
  std::vector<double> matrix;
  matrix.reserve(dim * vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (v.size() != dim) throw BankError("embedding dimension mismatch at " + records_[i].id);
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) throw BankError("embedding not unit norm at " + records_[i].id);
    matrix.insert(matrix.end(), v.begin(), v.end());
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) records_[i].embedding = std::move(vectors[i]);
  matrix_ = std::move(matrix);
  header_ = BankHeader{std::move(model), dim};
}

void QuestionBank::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw BankError("cannot write bank: " + path.string());
  out << json{{"bank_header", {{"embedding_model", header_.embedding_model}, {"dim", header_.dim}}}}.dump() << '\n';
  for (const auto& r : records_) out << record_to_json(r, true).dump() << '\n';
  if (!out) throw BankError("write failed: " + path.string());
}

QuestionBank QuestionBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BankError("cannot read bank: " + path.string());
  QuestionBank bank;
  BankHeader header;
  std::vector<QuestionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw BankError(where + ": " + e.what());
    }
    if (j.contains("bank_header")) {
      header.embedding_model = j["bank_header"].value("embedding_model", std::string{});
      header.dim = j["bank_header"].value("dim", std::size_t{0});
      continue;
    }
    records.push_back(record_from_json(j, where));
  }
  std::vector<std::vector<double>> vectors;
  vectors.reserve(records.size());
  for (auto& r : records) vectors.push_back(std::move(r.embedding));
  bank.ingest(std::move(records));
  const bool any = std::any_of(vectors.begin(), vectors.end(), [](const auto& v) { return !v.empty(); });
  if (any) bank.set_embeddings(header.embedding_model, std::move(vectors));
  return bank;
}

std::vector<QuestionRecord> read_question_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BankError("cannot read records: " + path.string());
  std::vector<QuestionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      out.push_back(record_from_json(json::parse(line), where));
    } catch (const json::exception& e) {
      throw BankError(where + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CapabilityMatrix

CapabilityMatrix::CapabilityMatrix(std::vector<std::string> model_ids, std::size_t columns)
    : model_ids_(std::move(model_ids)), cols_(columns), bits_(model_ids_.size() * columns, 0) {}

std::optional<std::size_t> CapabilityMatrix::row_of(std::string_view model_id) const {
  for (std::size_t r = 0; r < model_ids_.size(); ++r) {
    if (model_ids_[r] == model_id) return r;
  }
  return std::nullopt;
}

CapabilityMatrix CapabilityMatrix::select_rows(const std::vector<std::string>& ids) const {
  CapabilityMatrix out(ids, cols_);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto src = row_of(ids[r]);
    if (!src) throw BankError("capability matrix has no row for model: " + ids[r]);
    std::copy_n(bits_.begin() + static_cast<std::ptrdiff_t>(*src * cols_), cols_,
                out.bits_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
  }
  return out;
}

void CapabilityMatrix::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw BankError("cannot write capability file: " + path.string());
  for (std::size_t r = 0; r < model_ids_.size(); ++r) out << (r ? "\t" : "") << model_ids_[r];
  out << '\n';
  for (std::size_t r = 0; r < model_ids_.size(); ++r) {
    std::string row(cols_, '0');
    for (std::size_t c = 0; c < cols_; ++c) {
      if (bit(r, c)) row[c] = '1';
    }
    out << row << '\n';
  }
  if (!out) throw BankError("write failed: " + path.string());
}

CapabilityMatrix CapabilityMatrix::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BankError("cannot read capability file: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw BankError("empty capability file: " + path.string());
  std::vector<std::string> ids;
  std::size_t start = 0;
  while (start <= header.size()) {
    const auto tab = header.find('\t', start);
    std::string id = header.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
    if (!id.empty() && id.back() == '\r') id.pop_back();
    if (!id.empty()) ids.push_back(std::move(id));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(std::move(line));
  }
  if (rows.size() != ids.size()) {
    throw BankError(path.string() + ": " + std::to_string(ids.size()) + " model ids but " +
                    std::to_string(rows.size()) + " rows");
  }
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  CapabilityMatrix m(ids, cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw BankError(path.string() + ": ragged row for " + ids[r]);
    for (std::size_t c = 0; c < cols; ++c) {
      const char ch = rows[r][c];
      if (ch != '0' && ch != '1') throw BankError(path.string() + ": non-binary entry in row " + ids[r]);
      m.set(r, c, ch == '1');
    }
  }
  return m;
}

void save_transcripts(const Transcripts& transcripts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw BankError("cannot write transcripts: " + path.string());
  for (const auto& [model, answers] : transcripts) {
    for (const auto& [qid, text] : answers) {
      out << json{{"model", model}, {"question_id", qid}, {"response", text}}.dump() << '\n';
    }
  }
}

Transcripts load_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BankError("cannot read transcripts: " + path.string());
  Transcripts t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      t[j.at("model").get<std::string>()][j.at("question_id").get<std::string>()] =
          j.at("response").get<std::string>();
    } catch (const json::exception& e) {
      throw BankError(path.string() + ": " + e.what());
    }
  }
  return t;
}

CapabilityMatrix build_capability_matrix(const QuestionBank& bank, const std::vector<std::string>& model_ids,
                                         const Transcripts& transcripts, const HookOptions& hook) {
  if (bank.empty()) throw BankError("cannot profile an empty bank");
  CapabilityMatrix m(model_ids, bank.size());
  for (std::size_t r = 0; r < model_ids.size(); ++r) {
    const auto model_it = transcripts.find(model_ids[r]);
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const auto& rec = bank.at(i);
      const std::string* response = nullptr;
      if (model_it != transcripts.end()) {
        auto it = model_it->second.find(rec.id);
        if (it != model_it->second.end()) response = &it->second;
      }
      if (!response) throw BankError("missing transcript for (" + model_ids[r] + ", " + rec.id + ")");
      const Verdict v = rec.task_kind == TaskKind::Code ? verify_via_hook(*response, rec, hook)
                                                        : verify_response(*response, rec.label, rec.task_kind);
      m.set(r, i, v.correct);
    }
  }
  return m;
}

}  // namespace smacs
