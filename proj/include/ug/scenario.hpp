#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ug/explainer.hpp"
#include "ug/knowledge_base.hpp"
#include "ug/support_memory.hpp"

namespace ug {

using Json = nlohmann::ordered_json;

/// Offending token position, both 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, std::string message, std::string snippet,
             ErrorCode cause = ErrorCode::ParseError);

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& snippet() const noexcept { return snippet_; }
  /// ParseError for syntax; the domain code (KindMismatch, DuplicateId, ...)
  /// for statements that parse but break an invariant.
  ErrorCode cause() const noexcept { return cause_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;
  std::string snippet_;
  ErrorCode cause_;
};

struct Persona {
  MemoryLog log;
  std::map<std::string, std::string> attributes;  // user context, not ranked

  bool operator==(const Persona&) const = default;
};

namespace step {
struct Decide {
  bool operator==(const Decide&) const = default;
};
struct Why {
  Strategy strategy = Strategy::extrospective;
  std::optional<std::string> expecting;  // value of the decision relation
  std::size_t top_k = 1;
  bool operator==(const Why&) const = default;
};
struct Teach {
  TeachAction action;
  bool operator==(const Teach&) const = default;
};
struct Event {
  EventKind kind = EventKind::SuccessfulUseNoObjection;
  std::string item;
  std::optional<std::string> note;
  bool operator==(const Event&) const = default;
};
}  // namespace step

using ScriptStep = std::variant<step::Decide, step::Why, step::Teach, step::Event>;

struct Scenario {
  KnowledgeBase kb;
  std::map<std::string, Persona> personas;
  std::vector<ScriptStep> script;

  bool operator==(const Scenario&) const = default;
};

/// Line-oriented `.ug` format; `#` starts a comment. Every failure, syntactic
/// or semantic, is reported as a ParseError.
Scenario parse_scenario(std::string_view text);

/// Canonical text; comments are not preserved.
std::string serialize_scenario(const Scenario& scenario);

/// DSL form of a teaching action, as written after `step teach`.
std::string format_teach(const TeachAction& action);
/// Inverse of format_teach. Throws ParseError (line 1).
TeachAction parse_teach(std::string_view text);
/// `why` / `event` bodies share the same grammar as script steps.
ScriptStep parse_step(std::string_view text);
std::string format_step(const ScriptStep& step);

/// Re-applies every teaching action recorded in the notes of `log`.
KnowledgeBase replay_teaching(const KnowledgeBase& kb, const MemoryLog& log);

struct TranscriptRecord {
  std::size_t step = 0;
  std::string kind;  // decide | why | teach | event
  Json payload;

  bool operator==(const TranscriptRecord&) const = default;
};

using Transcript = std::vector<TranscriptRecord>;

std::string to_jsonl(const Transcript& transcript);
Json to_json(const TranscriptRecord& record);
Json to_json(const Literal& lit);
Json to_json(const Explanation& ex, const KnowledgeBase& kb);
Json to_json(const SupportRank& rank);
Json error_json(const Error& e);

/// One user's live interaction with the agent: the current knowledge base,
/// their memory log and the transcript so far. Step failures are recorded in
/// the transcript and never thrown.
class Interaction {
 public:
  Interaction(KnowledgeBase kb, MemoryLog log);

  const TranscriptRecord& decide(std::optional<DecisionQuery> query = std::nullopt);
  const TranscriptRecord& why(Strategy strategy, std::optional<std::string> expecting = {},
                              std::size_t top_k = 1);
  const TranscriptRecord& teach(const TeachAction& action);
  const TranscriptRecord& event(EventKind kind, const std::string& item,
                                std::optional<std::string> note = {});
  const TranscriptRecord& run(const ScriptStep& step);

  const KnowledgeBase& kb() const noexcept { return kb_; }
  const Snapshot& snapshot() const noexcept { return snapshot_; }
  const MemoryLog& log() const noexcept { return log_; }
  const Transcript& transcript() const noexcept { return transcript_; }
  const std::optional<DecisionQuery>& last_query() const noexcept { return last_query_; }
  void set_last_query(std::optional<DecisionQuery> q) { last_query_ = std::move(q); }
  /// Rehydration only: resumes numbering after `earlier`.
  void restore_transcript(Transcript earlier) { transcript_ = std::move(earlier); }

 private:
  template <class F>
  const TranscriptRecord& record(std::string kind, F&& body);

  KnowledgeBase kb_;
  Snapshot snapshot_;
  MemoryLog log_;
  Transcript transcript_;
  std::optional<DecisionQuery> last_query_;
};

/// Throws UnknownPersona.
Transcript run_scenario(const Scenario& scenario, const std::string& persona);

}  // namespace ug
