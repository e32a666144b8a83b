#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ug/knowledge_base.hpp"

namespace ug {

enum class EventKind {
  UserAssertedFact,
  UserPerceivedFact,
  PriorAgreementFact,
  UserEndorsedRule,
  UserEmployedRule,
  SuccessfulUseNoObjection,
  UserObjected,
  UserTaught,
};

std::string_view event_kind_name(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view text) noexcept;

/// Statement kind an event may attach to; nullopt for either.
std::optional<ItemKind> event_target(EventKind kind) noexcept;

/// 3, 2 or 1 for rank-contributing kinds, 0 for UserObjected.
int event_rank(EventKind kind) noexcept;

struct SupportEvent {
  std::uint64_t seq = 0;
  std::string user;
  std::string item;
  EventKind kind = EventKind::SuccessfulUseNoObjection;
  std::optional<std::string> note;

  bool operator==(const SupportEvent&) const = default;
};

struct SupportRank {
  int rank = 0;  // effective: 0 when contested
  std::optional<std::uint64_t> source_event;
  bool contested = false;

  bool operator==(const SupportRank&) const = default;
};

/// Append-only record of one user's interactions.
class MemoryLog {
 public:
  MemoryLog() = default;
  explicit MemoryLog(std::string user) : user_(std::move(user)) {}

  const std::string& user() const noexcept { return user_; }
  const std::vector<SupportEvent>& events() const noexcept { return events_; }
  std::uint64_t last_seq() const noexcept {
    return events_.empty() ? 0 : events_.back().seq;
  }
  std::uint64_t next_seq() const noexcept { return last_seq() + 1; }

  bool operator==(const MemoryLog&) const = default;

 private:
  friend MemoryLog record_event(const MemoryLog&, SupportEvent, const KnowledgeBase&);
  friend MemoryLog load_log(std::istream&, std::string);

  std::string user_;
  std::vector<SupportEvent> events_;
};

/// Appends `event` after checking it against the log and the statements of
/// `kb`. Throws SeqGap, UserMismatch, UnknownItem or KindMismatch.
MemoryLog record_event(const MemoryLog& log, SupportEvent event, const KnowledgeBase& kb);

SupportRank support_rank(const MemoryLog& log, std::string_view item);

struct AssertFact {
  std::string id;
  Literal literal;
  bool operator==(const AssertFact&) const = default;
};
struct RetractFact {
  std::string id;
  bool operator==(const RetractFact&) const = default;
};
struct ReplaceFactValue {
  std::string id;
  std::string value;
  bool operator==(const ReplaceFactValue&) const = default;
};
struct AddUserRule {
  Rule rule;
  bool operator==(const AddUserRule&) const = default;
};
struct EditPreinstalledRule {
  Rule rule;
  bool operator==(const EditPreinstalledRule&) const = default;
};
struct SetRulePriority {
  std::string id;
  unsigned priority = 0;
  bool operator==(const SetRulePriority&) const = default;
};

using TeachAction = std::variant<AssertFact, RetractFact, ReplaceFactValue, AddUserRule,
                                 EditPreinstalledRule, SetRulePriority>;

/// Effect of a teaching action on the knowledge base alone.
struct TeachEffect {
  KnowledgeBase kb;
  std::string item;  // statement touched
  EventKind kind;    // event that records the teaching
};

/// Throws kb-core errors, RetractUnknown, UnknownItem or InvalidKB.
TeachEffect teach_kb(const KnowledgeBase& kb, const TeachAction& action);

/// Applies `action` and appends the matching event (carrying `note`) so the
/// touched statement is at rank 3. Retractions append a UserObjected event
/// for the retracted fact, keeping its history.
std::pair<KnowledgeBase, MemoryLog> apply_teaching(const Snapshot& kb, const MemoryLog& log,
                                                   const TeachAction& action,
                                                   std::optional<std::string> note = {});

/// One JSON object per line: seq, user, kind, item[, note].
void save_log(const MemoryLog& log, std::ostream& out);
void save_log(const MemoryLog& log, const std::filesystem::path& path);

/// Throws CorruptRecord(line) on malformed input; an empty stream yields an
/// empty log for `user`.
MemoryLog load_log(std::istream& in, std::string user);
/// Reads `<user>.mem.jsonl`; throws IoFailure when unreadable.
MemoryLog load_log(const std::filesystem::path& path);

/// Serialized single record, no trailing newline.
std::string event_record(const SupportEvent& event);

std::filesystem::path log_file_name(std::string_view user);

}  // namespace ug
