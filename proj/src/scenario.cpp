#include <sstream>

#include "ug/scenario.hpp"

namespace ug {

namespace {

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + '"';
}

std::string format_rule_tail(const Rule& r) {
  std::string out = ": ";
  for (std::size_t i = 0; i < r.body.size(); ++i) {
    if (i) out += " & ";
    out += to_dsl(r.body[i]);
  }
  return out + " => " + to_dsl(r.head);
}

std::string format_event(EventKind kind, const std::string& item, const std::optional<std::string>& note) {
  std::string out = "event " + std::string(event_kind_name(kind)) + ' ' + item;
  if (note) out += ' ' + quote(*note);
  return out;
}

}  // namespace

std::string format_teach(const TeachAction& action) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AssertFact>) {
          return "assert " + a.id + ": " + to_dsl(a.literal);
        } else if constexpr (std::is_same_v<T, RetractFact>) {
          return "retract " + a.id;
        } else if constexpr (std::is_same_v<T, ReplaceFactValue>) {
          return "replace " + a.id + ' ' + a.value;
        } else if constexpr (std::is_same_v<T, AddUserRule>) {
          return "add " + a.rule.id + " prio " + std::to_string(a.rule.priority) + format_rule_tail(a.rule);
        } else if constexpr (std::is_same_v<T, EditPreinstalledRule>) {
          return "edit " + a.rule.id + " prio " + std::to_string(a.rule.priority) + format_rule_tail(a.rule);
        } else {
          return "priority " + a.id + ' ' + std::to_string(a.priority);
        }
      },
      action);
}

std::string format_step(const ScriptStep& s) {
  return std::visit(
      [](const auto& st) -> std::string {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, step::Decide>) {
          return "decide";
        } else if constexpr (std::is_same_v<T, step::Why>) {
          std::string out = "why " + std::string(strategy_name(st.strategy));
          if (st.expecting) out += " expecting " + *st.expecting;
          if (st.top_k != 1) out += " top " + std::to_string(st.top_k);
          return out;
        } else if constexpr (std::is_same_v<T, step::Teach>) {
          return "teach " + format_teach(st.action);
        } else {
          return format_event(st.kind, st.item, st.note);
        }
      },
      s);
}

std::string serialize_scenario(const Scenario& s) {
  std::ostringstream out;
  bool section = false;
  auto separate = [&] {
    if (section) out << '\n';
    section = true;
  };

  if (!s.kb.functional().empty()) {
    separate();
    for (const auto& rel : s.kb.functional()) out << "functional " << rel << '\n';
  }
  if (!s.kb.facts().empty()) {
    separate();
    for (const auto& f : s.kb.facts()) out << "fact " << f.id << ": " << to_dsl(f.literal) << '\n';
  }
  if (!s.kb.rules().empty()) {
    separate();
    for (const auto& r : s.kb.rules()) {
      out << "rule " << r.id << " prio " << r.priority << " layer " << layer_name(r.layer)
          << format_rule_tail(r) << '\n';
    }
  }
  if (s.kb.decision()) {
    separate();
    out << "decision: " << s.kb.decision()->subject << ' ' << s.kb.decision()->relation << '\n';
  }
  for (const auto& [name, persona] : s.personas) {
    separate();
    out << "persona " << name << ":\n";
    for (const auto& [key, value] : persona.attributes) out << "  attr " << key << ' ' << quote(value) << '\n';
    for (const auto& e : persona.log.events()) out << "  " << format_event(e.kind, e.item, e.note) << '\n';
  }
  if (!s.script.empty()) {
    separate();
    for (const auto& st : s.script) out << "step " << format_step(st) << '\n';
  }
  return out.str();
}

KnowledgeBase replay_teaching(const KnowledgeBase& kb, const MemoryLog& log) {
  constexpr std::string_view prefix = "teach ";
  KnowledgeBase out = kb;
  for (const auto& e : log.events()) {
    if (!e.note || !e.note->starts_with(prefix)) continue;
    TeachAction action;
    try {
      action = parse_teach(std::string_view(*e.note).substr(prefix.size()));
    } catch (const ParseError&) {
      continue;  // an ordinary note that happens to start with "teach"
    }
    out = teach_kb(out, action).kb;
  }
  return out;
}

Json to_json(const Literal& lit) {
  return Json{{"subject", lit.subject},
              {"relation", lit.relation},
              {"value", lit.value},
              {"positive", lit.positive},
              {"text", verbalize(lit)}};
}

Json to_json(const SupportRank& rank) {
  Json j{{"rank", rank.rank}, {"contested", rank.contested}};
  j["source_event"] = rank.source_event ? Json(*rank.source_event) : Json(nullptr);
  return j;
}

namespace {

std::string statement_text(const KnowledgeBase& kb, const std::string& id) {
  if (const Fact* f = kb.find_fact(id)) return verbalize(f->literal);
  if (const Rule* r = kb.find_rule(id)) return verbalize(*r);
  return {};
}

Json to_json(const Ambiguity& a) {
  return Json{{"literal", to_json(a.literal)}, {"rules", Json::array({a.first_rule, a.second_rule})}};
}

}  // namespace

Json to_json(const Explanation& ex, const KnowledgeBase& kb) {
  Json ranked = Json::array();
  for (const auto& r : ex.ranked) {
    Json item{{"id", r.element.id},
              {"kind", item_kind_name(r.element.kind)},
              {"statement", statement_text(kb, r.element.id)},
              {"depth", r.element.depth},
              {"usage_count", r.element.usage_count},
              {"defeated", r.element.defeated}};
    item["support"] = r.support ? to_json(*r.support) : Json(nullptr);
    item["reason"] = r.reason;
    if (r.premise) item["premise"] = to_json(*r.premise);
    ranked.push_back(std::move(item));
  }
  Json j{{"strategy", strategy_name(ex.strategy)}};
  j["decision"] = ex.decision ? to_json(*ex.decision) : Json(nullptr);
  j["expected"] = ex.expected ? to_json(*ex.expected) : Json(nullptr);
  j["confirmed"] = ex.confirmed;
  j["top"] = ex.ranked.empty() ? Json(nullptr) : Json(ex.top().element.id);
  j["ranked"] = std::move(ranked);
  j["rendered"] = ex.rendered;
  return j;
}

Json error_json(const Error& e) {
  Json j{{"code", code_name(e.code())}, {"message", e.what()}};
  if (auto* pe = dynamic_cast<const ParseError*>(&e)) {
    j["line"] = pe->line();
    j["column"] = pe->column();
  }
  if (auto* nd = dynamic_cast<const NoDecision*>(&e)) {
    Json amb = Json::array();
    for (const auto& a : nd->ambiguities()) amb.push_back(to_json(a));
    j["ambiguities"] = std::move(amb);
  }
  return j;
}

Json to_json(const TranscriptRecord& record) {
  return Json{{"step", record.step}, {"kind", record.kind}, {"payload", record.payload}};
}

std::string to_jsonl(const Transcript& transcript) {
  std::string out;
  for (const auto& r : transcript) out += to_json(r).dump() + '\n';
  return out;
}

Interaction::Interaction(KnowledgeBase kb, MemoryLog log)
    : kb_(std::move(kb)), snapshot_(ug::snapshot(kb_)), log_(std::move(log)) {}

template <class F>
const TranscriptRecord& Interaction::record(std::string kind, F&& body) {
  TranscriptRecord rec{transcript_.size() + 1, std::move(kind), Json::object()};
  try {
    rec.payload = body();
  } catch (const Error& e) {
    rec.payload = Json{{"error", error_json(e)}};
  }
  transcript_.push_back(std::move(rec));
  return transcript_.back();
}

const TranscriptRecord& Interaction::decide(std::optional<DecisionQuery> query) {
  return record("decide", [&] {
    if (!query) query = kb_.decision();
    if (!query) throw Error(ErrorCode::InvalidQuery, "no decision query");
    last_query_ = query;
    auto result = ug::decide(snapshot_, *query);
    const Trace& t = result.trace;
    Json steps = Json::array();
    for (const auto& s : t.steps) {
      Json defeated = Json::array();
      for (const auto& d : s.defeated_rules) defeated.push_back(d.id);
      steps.push_back(Json{{"derived", verbalize(s.derived)}, {"by_rule", s.by_rule}, {"defeated", defeated}});
    }
    Json ambiguities = Json::array();
    for (const auto& a : t.ambiguities) ambiguities.push_back(to_json(a));
    return Json{{"query", Json{{"subject", query->subject}, {"relation", query->relation}}},
                {"decision", to_json(result.decision)},
                {"steps", steps},
                {"used_facts", t.used_facts},
                {"used_rules", t.used_rules},
                {"defeated_rules", t.defeated_rules},
                {"ambiguities", ambiguities}};
  });
}

const TranscriptRecord& Interaction::why(Strategy strategy, std::optional<std::string> expecting,
                                         std::size_t top_k) {
  return record("why", [&] {
    if (!last_query_) throw Error(ErrorCode::EmptyTrace, "nothing has been decided yet");
    Trace trace;
    try {
      trace = ug::decide(snapshot_, *last_query_).trace;
    } catch (const NoDecision&) {
      if (strategy != Strategy::contrastive) throw;
    }
    std::optional<Literal> expected;
    if (expecting) expected = Literal{last_query_->subject, last_query_->relation, *expecting, true};
    auto ex = explain(snapshot_, trace, strategy, &log_, expected, top_k);
    return to_json(ex, kb_);
  });
}

const TranscriptRecord& Interaction::teach(const TeachAction& action) {
  return record("teach", [&] {
    const std::string text = format_teach(action);
    auto [kb, log] = apply_teaching(snapshot_, log_, action, "teach " + text);
    Snapshot next = ug::snapshot(kb);
    kb_ = std::move(kb);
    snapshot_ = std::move(next);
    log_ = std::move(log);
    const auto& item = log_.events().back().item;
    return Json{{"action", text},
                {"item", item},
                {"seq", log_.last_seq()},
                {"rank", to_json(support_rank(log_, item))}};
  });
}

const TranscriptRecord& Interaction::event(EventKind kind, const std::string& item,
                                           std::optional<std::string> note) {
  return record("event", [&] {
    log_ = record_event(log_, SupportEvent{log_.next_seq(), log_.user(), item, kind, std::move(note)}, kb_);
    return Json{{"seq", log_.last_seq()},
                {"kind", event_kind_name(kind)},
                {"item", item},
                {"rank", to_json(support_rank(log_, item))}};
  });
}

const TranscriptRecord& Interaction::run(const ScriptStep& s) {
  return std::visit(
      [&](const auto& st) -> const TranscriptRecord& {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, step::Decide>) return decide();
        else if constexpr (std::is_same_v<T, step::Why>) return why(st.strategy, st.expecting, st.top_k);
        else if constexpr (std::is_same_v<T, step::Teach>) return teach(st.action);
        else return event(st.kind, st.item, st.note);
      },
      s);
}

Transcript run_scenario(const Scenario& scenario, const std::string& persona) {
  auto it = scenario.personas.find(persona);
  if (it == scenario.personas.end()) throw Error(ErrorCode::UnknownPersona, "no persona '" + persona + "'");
  Interaction session(scenario.kb, it->second.log);
  for (const auto& st : scenario.script) session.run(st);
  return session.transcript();
}

}  // namespace ug
