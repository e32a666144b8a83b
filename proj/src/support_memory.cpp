#include "ug/support_memory.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace ug {

namespace {

struct KindInfo {
  EventKind kind;
  std::string_view name;
  std::optional<ItemKind> target;
  int rank;
};

constexpr std::array<KindInfo, 8> kKinds{{
    {EventKind::UserAssertedFact, "UserAssertedFact", ItemKind::fact, 3},
    {EventKind::UserPerceivedFact, "UserPerceivedFact", ItemKind::fact, 2},
    {EventKind::PriorAgreementFact, "PriorAgreementFact", ItemKind::fact, 1},
    {EventKind::UserEndorsedRule, "UserEndorsedRule", ItemKind::rule, 3},
    {EventKind::UserEmployedRule, "UserEmployedRule", ItemKind::rule, 2},
    {EventKind::SuccessfulUseNoObjection, "SuccessfulUseNoObjection", std::nullopt, 1},
    {EventKind::UserObjected, "UserObjected", std::nullopt, 0},
    {EventKind::UserTaught, "UserTaught", ItemKind::rule, 3},
}};

const KindInfo& info(EventKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  return kKinds.front();
}

}  // namespace

std::string_view event_kind_name(EventKind kind) noexcept { return info(kind).name; }

std::optional<EventKind> parse_event_kind(std::string_view text) noexcept {
  for (const auto& k : kKinds) {
    if (k.name == text) return k.kind;
  }
  return std::nullopt;
}

std::optional<ItemKind> event_target(EventKind kind) noexcept { return info(kind).target; }

int event_rank(EventKind kind) noexcept { return info(kind).rank; }

MemoryLog record_event(const MemoryLog& log, SupportEvent event, const KnowledgeBase& kb) {
  if (event.seq != log.next_seq()) {
    throw Error(ErrorCode::SeqGap, "expected seq " + std::to_string(log.next_seq()) +
                                       ", got " + std::to_string(event.seq));
  }
  if (event.user != log.user()) {
    throw Error(ErrorCode::UserMismatch,
                "event for user '" + event.user + "' in log of '" + log.user() + "'");
  }
  auto kind = kb.kind_of(event.item);
  if (!kind) throw Error(ErrorCode::UnknownItem, "unknown statement " + event.item);
  auto target = event_target(event.kind);
  if (target && *target != *kind) {
    throw Error(ErrorCode::KindMismatch,
                std::string(event_kind_name(event.kind)) + " cannot attach to " +
                    std::string(item_kind_name(*kind)) + ' ' + event.item);
  }
  MemoryLog out = log;
  out.events_.push_back(std::move(event));
  return out;
}

SupportRank support_rank(const MemoryLog& log, std::string_view item) {
  SupportRank out;
  std::uint64_t last_support = 0;
  std::uint64_t last_objection = 0;
  bool objected = false;
  for (const auto& e : log.events()) {
    if (e.item != item) continue;
    if (e.kind == EventKind::UserObjected) {
      objected = true;
      last_objection = e.seq;
      continue;
    }
    const int r = event_rank(e.kind);
    if (r > out.rank) {
      out.rank = r;
      out.source_event = e.seq;
    }
    last_support = std::max(last_support, e.seq);
  }
  if (objected && last_objection > last_support) {
    out.contested = true;
    out.rank = 0;
  }
  return out;
}

TeachEffect teach_kb(const KnowledgeBase& kb, const TeachAction& action) {
  TeachEffect effect = std::visit(
      [&](const auto& a) -> TeachEffect {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AssertFact>) {
          if (const Fact* same = kb.find_fact_by_literal(a.literal))
            return {kb, same->id, EventKind::UserAssertedFact};
          return {add_fact(kb, Fact{a.id, a.literal}), a.id, EventKind::UserAssertedFact};
        } else if constexpr (std::is_same_v<T, RetractFact>) {
          return {retract_fact(kb, a.id), a.id, EventKind::UserObjected};
        } else if constexpr (std::is_same_v<T, ReplaceFactValue>) {
          const Fact* old = kb.find_fact(a.id);
          if (!old) throw Error(ErrorCode::RetractUnknown, "no fact " + a.id + " to replace");
          Literal lit = old->literal;
          lit.value = a.value;
          return {add_fact(retract_fact(kb, a.id), Fact{a.id, lit}), a.id,
                  EventKind::UserAssertedFact};
        } else if constexpr (std::is_same_v<T, AddUserRule>) {
          if (kb.contains(a.rule.id))
            throw Error(ErrorCode::DuplicateId, "statement id " + a.rule.id + " already in use");
          return {upsert_rule(kb, a.rule, Actor::user), a.rule.id, EventKind::UserTaught};
        } else if constexpr (std::is_same_v<T, EditPreinstalledRule>) {
          if (!kb.find_rule(a.rule.id))
            throw Error(ErrorCode::UnknownItem, "no rule " + a.rule.id + " to edit");
          return {upsert_rule(kb, a.rule, Actor::user), a.rule.id, EventKind::UserTaught};
        } else {
          const Rule* rule = kb.find_rule(a.id);
          if (!rule) throw Error(ErrorCode::UnknownItem, "no rule " + a.id);
          Rule updated = *rule;
          updated.priority = a.priority;
          return {upsert_rule(kb, std::move(updated), Actor::user), a.id, EventKind::UserTaught};
        }
      },
      action);

  auto report = validate_kb(effect.kb);
  if (!report.ok()) throw Error(ErrorCode::InvalidKB, report.summary());
  return effect;
}

std::pair<KnowledgeBase, MemoryLog> apply_teaching(const Snapshot& snap, const MemoryLog& log,
                                                   const TeachAction& action,
                                                   std::optional<std::string> note) {
  TeachEffect effect = teach_kb(snap.kb(), action);
  SupportEvent event{log.next_seq(), log.user(), effect.item, effect.kind, std::move(note)};
  // A retracted fact is only known to the knowledge base it came from.
  const bool retraction = std::holds_alternative<RetractFact>(action);
  MemoryLog updated = record_event(log, std::move(event), retraction ? snap.kb() : effect.kb);
  return {std::move(effect.kb), std::move(updated)};
}

std::string event_record(const SupportEvent& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["user"] = e.user;
  j["kind"] = event_kind_name(e.kind);
  j["item"] = e.item;
  if (e.note) j["note"] = *e.note;
  return j.dump();
}

void save_log(const MemoryLog& log, std::ostream& out) {
  for (const auto& e : log.events()) out << event_record(e) << '\n';
}

void save_log(const MemoryLog& log, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    save_log(log, out);
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot replace " + path.string() + ": " + ec.message());
}

MemoryLog load_log(std::istream& in, std::string user) {
  MemoryLog log(std::move(user));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptRecord(lineno, "not a JSON object");
    }
    if (!j.is_object()) throw CorruptRecord(lineno, "not a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (key != "seq" && key != "user" && key != "kind" && key != "item" && key != "note")
        throw CorruptRecord(lineno, "unexpected field '" + key + "'");
    }
    auto field = [&](const char* name) -> const nlohmann::json& {
      if (!j.contains(name) || !j[name].is_string())
        throw CorruptRecord(lineno, std::string("missing or non-string field '") + name + "'");
      return j[name];
    };
    if (!j.contains("seq") || !j["seq"].is_number_unsigned())
      throw CorruptRecord(lineno, "missing or invalid seq");

    SupportEvent e;
    e.seq = j["seq"].get<std::uint64_t>();
    e.user = field("user").get<std::string>();
    e.item = field("item").get<std::string>();
    auto kind = parse_event_kind(field("kind").get<std::string>());
    if (!kind) throw CorruptRecord(lineno, "unknown event kind");
    e.kind = *kind;
    if (j.contains("note")) e.note = field("note").get<std::string>();

    if (e.user != log.user()) throw CorruptRecord(lineno, "record belongs to user '" + e.user + "'");
    if (e.seq != log.next_seq()) throw CorruptRecord(lineno, "seq out of order");
    if (!is_identifier(e.item)) throw CorruptRecord(lineno, "malformed item id");
    log.events_.push_back(std::move(e));
  }
  return log;
}

std::filesystem::path log_file_name(std::string_view user) {
  return std::string(user) + ".mem.jsonl";
}

MemoryLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::string name = path.filename().string();
  constexpr std::string_view suffix = ".mem.jsonl";
  if (name.size() > suffix.size() && name.ends_with(suffix)) name.resize(name.size() - suffix.size());
  return load_log(in, std::move(name));
}

}  // namespace ug
