#include "smacs/common.hpp"

#include <array>
#include <cstdio>

namespace smacs {

namespace {
constexpr std::array<std::pair<TaskKind, std::string_view>, 5> kTaskNames{{
    {TaskKind::BoxedMath, "boxed-math"},
    {TaskKind::MultipleChoice, "multiple-choice"},
    {TaskKind::ExactMatch, "exact-match"},
    {TaskKind::Instruction, "instruction"},
    {TaskKind::Code, "code"},
}};
}  // namespace

std::string_view to_string(TaskKind kind) {
  for (const auto& [k, name] : kTaskNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<TaskKind> parse_task_kind(std::string_view text) {
  for (const auto& [k, name] : kTaskNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace smacs
