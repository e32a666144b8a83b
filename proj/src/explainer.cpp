#include "ug/explainer.hpp"

#include <algorithm>
#include <map>

namespace ug {

std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::last_step: return "last_step";
    case Strategy::most_specific_rule: return "most_specific_rule";
    case Strategy::most_used_fact: return "most_used_fact";
    case Strategy::extrospective: return "extrospective";
    case Strategy::contrastive: return "contrastive";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view text) noexcept {
  for (auto s : {Strategy::last_step, Strategy::most_specific_rule, Strategy::most_used_fact,
                 Strategy::extrospective, Strategy::contrastive}) {
    if (strategy_name(s) == text) return s;
  }
  return std::nullopt;
}

bool is_introspective(Strategy s) noexcept {
  return s == Strategy::last_step || s == Strategy::most_specific_rule ||
         s == Strategy::most_used_fact;
}

namespace {

std::string default_reason(const TraceElement& e, const KnowledgeBase& kb) {
  if (e.kind == ItemKind::fact) {
    return "fact used " + std::to_string(e.usage_count) + (e.usage_count == 1 ? " time" : " times");
  }
  const Rule* r = kb.find_rule(e.id);
  const std::string prio = r ? std::to_string(r->priority) : "?";
  return std::string(e.defeated ? "defeated rule" : "rule") + ", priority " + prio;
}

std::vector<RankedElement> unranked(const std::vector<TraceElement>& elements,
                                    const KnowledgeBase& kb, std::size_t top_k) {
  std::vector<RankedElement> out;
  for (const auto& e : elements) {
    if (out.size() >= std::max<std::size_t>(top_k, 1)) break;
    out.push_back({e, std::nullopt, default_reason(e, kb), std::nullopt});
  }
  return out;
}

// Ids of fired rules whose head is the exact negation of a rule they defeated.
std::map<std::string, std::string> exceptions(const Trace& trace, const KnowledgeBase& kb) {
  std::map<std::string, std::string> out;
  for (const auto& step : trace.steps) {
    for (const auto& d : step.defeated_rules) {
      const Rule* defeated = kb.find_rule(d.id);
      if (defeated && defeated->head == step.derived.negated()) {
        out.try_emplace(step.by_rule, d.id);
      }
    }
  }
  return out;
}

unsigned priority_of(const KnowledgeBase& kb, const std::string& id) {
  const Rule* r = kb.find_rule(id);
  return r ? r->priority : 0;
}

Explanation introspective(const Snapshot& snap, const Trace& trace, Strategy strategy,
                          std::size_t top_k) {
  const KnowledgeBase& kb = snap.kb();
  auto elements = collect_trace_elements(trace);
  const auto exc = exceptions(trace, kb);

  auto by_depth_then_id = [](const TraceElement& a, const TraceElement& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id < b.id;
  };

  switch (strategy) {
    case Strategy::last_step:
      std::sort(elements.begin(), elements.end(), [&](const TraceElement& a, const TraceElement& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        if (a.defeated != b.defeated) return !a.defeated;
        if (a.kind != b.kind) return a.kind == ItemKind::rule;
        return a.id < b.id;
      });
      break;
    case Strategy::most_specific_rule:
      std::sort(elements.begin(), elements.end(), [&](const TraceElement& a, const TraceElement& b) {
        auto group = [](const TraceElement& e) {
          return e.kind == ItemKind::fact ? 2 : (e.defeated ? 1 : 0);
        };
        if (group(a) != group(b)) return group(a) < group(b);
        if (a.kind == ItemKind::rule) {
          const bool ea = exc.contains(a.id), eb = exc.contains(b.id);
          if (ea != eb) return ea;
          const auto pa = priority_of(kb, a.id), pb = priority_of(kb, b.id);
          if (pa != pb) return pa > pb;
        }
        return by_depth_then_id(a, b);
      });
      break;
    case Strategy::most_used_fact:
      std::sort(elements.begin(), elements.end(), [&](const TraceElement& a, const TraceElement& b) {
        if (a.kind != b.kind) return a.kind == ItemKind::fact;
        if (a.usage_count != b.usage_count) return a.usage_count > b.usage_count;
        return by_depth_then_id(a, b);
      });
      break;
    default:
      break;
  }

  Explanation ex;
  ex.strategy = strategy;
  ex.decision = trace.decision;
  ex.ranked = unranked(elements, kb, top_k);
  for (auto& r : ex.ranked) {
    if (auto it = exc.find(r.element.id); it != exc.end())
      r.reason += ", exception to " + it->second;
  }
  ex.rendered = render_text(ex, kb);
  return ex;
}

bool uncommon_ground_order(const RankedElement& a, const RankedElement& b) {
  if (a.support->rank != b.support->rank) return a.support->rank < b.support->rank;
  if (a.element.kind != b.element.kind) return a.element.kind == ItemKind::fact;
  if (a.element.depth != b.element.depth) return a.element.depth < b.element.depth;
  return a.element.id < b.element.id;
}

std::string support_reason(const SupportRank& s) {
  if (s.contested) return "contested by the user";
  if (s.rank == 0) return "no support from this user";
  return "support " + std::to_string(s.rank) + " from event " + std::to_string(*s.source_event);
}

}  // namespace

std::vector<RankedElement> select_uncommon_ground(const std::vector<TraceElement>& elements,
                                                  const MemoryLog& memory, std::size_t k) {
  std::vector<RankedElement> ranked;
  for (const auto& e : elements) {
    auto s = support_rank(memory, e.id);
    ranked.push_back({e, s, support_reason(s), std::nullopt});
  }
  std::sort(ranked.begin(), ranked.end(), uncommon_ground_order);
  if (ranked.empty()) return ranked;
  const int minimum = ranked.front().support->rank;
  std::size_t keep = std::max<std::size_t>(k, 1);
  while (keep < ranked.size() && ranked[keep].support->rank == minimum) ++keep;
  ranked.resize(std::min(keep, ranked.size()));
  return ranked;
}

Explanation diagnose_contrastive(const Snapshot& snap, const Literal& expected,
                                 const MemoryLog* memory, const std::optional<Literal>& actual,
                                 std::size_t top_k) {
  using Blocked = ContrastiveDiagnosis::Candidate::Blocked;
  const KnowledgeBase& kb = snap.kb();
  const ContrastiveDiagnosis diag = find_defeaters(snap, expected);

  Explanation ex;
  ex.strategy = Strategy::contrastive;
  ex.decision = actual;
  ex.expected = expected;

  if (diag.status == ContrastiveDiagnosis::Status::confirmed) {
    ex.confirmed = true;
    ex.decision = expected;
    const Fact* fact = kb.find_fact_by_literal(expected);
    TraceElement e;
    if (fact) {
      e = {fact->id, ItemKind::fact, 0, 1, false};
    } else {
      const DerivedState state = infer_fixpoint(snap);
      e = {state.steps[*state.derived.at(expected).step].by_rule, ItemKind::rule, 0, 1, false};
    }
    RankedElement r{e, std::nullopt, "concludes the expected outcome", std::nullopt};
    if (memory) r.support = support_rank(*memory, e.id);
    ex.ranked.push_back(std::move(r));
    ex.rendered = render_text(ex, kb);
    return ex;
  }

  // Merge candidates across every rule that would have concluded `expected`.
  std::vector<TraceElement> elements;
  std::map<std::string, std::string> reasons;
  std::map<std::string, Literal> premises;
  auto merge = [&](const TraceElement& e, const std::string& reason) {
    auto it = std::find_if(elements.begin(), elements.end(),
                           [&](const TraceElement& x) { return x.id == e.id; });
    if (it == elements.end()) {
      elements.push_back(e);
      reasons[e.id] = reason;
    } else if (e.depth < it->depth) {
      it->depth = e.depth;
      reasons[e.id] = reason;
    }
  };
  for (const auto& c : diag.candidates) {
    std::set<std::string> defeaters;
    for (const auto& d : c.defeaters) defeaters.insert(d.id);
    for (const auto& s : c.support) {
      std::string reason;
      switch (c.blocked) {
        case Blocked::defeated:
        case Blocked::tied:
          reason = defeaters.contains(s.id)
                       ? (c.blocked == Blocked::tied ? "ties with " : "outranks ") + c.rule
                       : "supports a rule that outranks " + c.rule;
          break;
        case Blocked::body_unsatisfied:
          reason = s.depth == 0 ? "blocks a premise of " + c.rule
                                : "supports a statement blocking " + c.rule;
          break;
        case Blocked::contradicts_fact:
          reason = "contradicts the conclusion of " + c.rule;
          break;
      }
      merge(s, reason);
    }
    if (c.blocked == Blocked::body_unsatisfied && c.support.empty()) {
      // Nothing opposes the premise; it is simply not known.
      merge({c.rule, ItemKind::rule, 0, 1, false}, "premise not known: " + verbalize(c.missing.front()));
      premises.try_emplace(c.rule, c.missing.front());
    }
  }

  if (memory) {
    ex.ranked = select_uncommon_ground(elements, *memory, top_k);
    for (auto& r : ex.ranked) r.reason = reasons[r.element.id] + "; " + r.reason;
  } else {
    std::sort(elements.begin(), elements.end(), [](const TraceElement& a, const TraceElement& b) {
      if (a.depth != b.depth) return a.depth < b.depth;
      return a.id < b.id;
    });
    for (const auto& e : elements) {
      if (ex.ranked.size() >= std::max<std::size_t>(top_k, 1)) break;
      ex.ranked.push_back({e, std::nullopt, reasons[e.id], std::nullopt});
    }
  }
  for (auto& r : ex.ranked) {
    if (auto it = premises.find(r.element.id); it != premises.end()) r.premise = it->second;
  }
  ex.rendered = render_text(ex, kb);
  return ex;
}

Explanation explain(const Snapshot& kb, const Trace& trace, Strategy strategy,
                    const MemoryLog* memory, const std::optional<Literal>& expected,
                    std::size_t top_k) {
  if (strategy == Strategy::contrastive) {
    if (!expected) throw Error(ErrorCode::MissingExpected, "contrastive explanation needs an expected outcome");
    return diagnose_contrastive(kb, *expected, memory, trace.decision, top_k);
  }
  if (trace.empty()) throw Error(ErrorCode::EmptyTrace, "nothing has been decided yet");
  if (is_introspective(strategy)) return introspective(kb, trace, strategy, top_k);

  if (!memory) throw Error(ErrorCode::MissingMemory, "extrospective explanation needs a memory log");
  Explanation ex;
  ex.strategy = strategy;
  ex.decision = trace.decision;
  ex.ranked = select_uncommon_ground(collect_trace_elements(trace), *memory, top_k);
  ex.rendered = render_text(ex, kb.kb());
  return ex;
}

namespace {

std::string statement_text(const std::string& id, const KnowledgeBase& kb) {
  if (const Fact* f = kb.find_fact(id)) return verbalize(f->literal);
  if (const Rule* r = kb.find_rule(id)) return "the rule \"" + verbalize(*r) + "\"";
  return id;
}

}  // namespace

std::string render_text(const Explanation& ex, const KnowledgeBase& kb) {
  if (ex.ranked.empty()) return {};
  const RankedElement& top = ex.top();
  const std::string& id = top.element.id;

  if (ex.strategy == Strategy::contrastive) {
    const std::string expected = verbalize(*ex.expected);
    if (ex.confirmed) return "I did conclude " + expected + ", as you expected.";
    std::string text = ex.decision
                           ? "I concluded " + verbalize(*ex.decision) + " instead of " + ex.expected->value + ". "
                           : "I did not conclude " + expected + ". ";
    if (top.premise) return text + "Had " + verbalize(*top.premise) + " held, I would have concluded " + expected + ".";
    return text + "Had " + statement_text(id, kb) + " not held, I would have concluded " + expected + ".";
  }

  const std::string decision = verbalize(*ex.decision);
  if (top.element.kind == ItemKind::rule) {
    const Rule* rule = kb.find_rule(id);
    if (top.element.defeated) {
      return "I concluded " + decision + " after overruling " + statement_text(id, kb) + ".";
    }
    if (ex.strategy == Strategy::last_step && rule) {
      std::string premises;
      for (std::size_t i = 0; i < rule->body.size(); ++i) {
        if (i) premises += " and ";
        premises += verbalize(rule->body[i]);
      }
      return "As " + premises + ", I concluded " + verbalize(rule->head) + ".";
    }
  }
  const char* link = top.element.kind == ItemKind::rule ? " by applying " : " because ";
  return "I concluded " + decision + link + statement_text(id, kb) + ".";
}

}  // namespace ug
