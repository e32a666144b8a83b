#include "ug/reasoner.hpp"

#include <algorithm>
#include <deque>

namespace ug {

std::set<Literal> DerivedState::literals() const {
  std::set<Literal> out;
  for (const auto& [lit, _] : derived) out.insert(lit);
  return out;
}

namespace {

bool body_holds(const Rule& rule, const DerivedState& state) {
  return std::all_of(rule.body.begin(), rule.body.end(),
                     [&](const Literal& b) { return state.holds(b); });
}

bool contradicts_fact(const KnowledgeBase& kb, const Literal& lit) {
  return std::any_of(kb.facts().begin(), kb.facts().end(), [&](const Fact& f) {
    return conflicts(f.literal, lit, kb.functional());
  });
}

// Highest priority first, then id.
bool outranks(const Rule* a, const Rule* b) {
  if (a->priority != b->priority) return a->priority > b->priority;
  return a->id < b->id;
}

}  // namespace

DerivedState infer_fixpoint(const Snapshot& snap) {
  const KnowledgeBase& kb = snap.kb();
  DerivedState state;
  for (const auto& f : kb.facts()) state.derived[f.literal] = {f.id, std::nullopt};

  std::set<Ambiguity> ambiguities;
  for (const Literal& lit : snap.strata()) {
    if (state.holds(lit) || contradicts_fact(kb, lit)) continue;

    std::vector<const Rule*> supporters;
    std::vector<const Rule*> attackers;
    for (const auto& r : kb.rules()) {
      if (!body_holds(r, state)) continue;
      if (r.head == lit) {
        supporters.push_back(&r);
      } else if (conflicts(r.head, lit, kb.functional())) {
        attackers.push_back(&r);
      }
    }
    if (supporters.empty()) continue;
    std::sort(supporters.begin(), supporters.end(), outranks);
    std::sort(attackers.begin(), attackers.end(), outranks);

    const Rule* best = supporters.front();
    if (!attackers.empty() && attackers.front()->priority >= best->priority) {
      if (attackers.front()->priority == best->priority) {
        for (const Rule* s : supporters) {
          if (s->priority != best->priority) break;
          for (const Rule* t : attackers) {
            if (t->priority != best->priority) break;
            const bool s_first = s->id < t->id;
            const Rule* first = s_first ? s : t;
            const Rule* second = s_first ? t : s;
            ambiguities.insert({first->head, first->id, second->id});
          }
        }
      }
      continue;
    }

    DerivationStep step{lit, best->id, best->body, {}};
    for (const Rule* a : attackers) step.defeated_rules.push_back({a->id, a->priority});
    std::sort(step.defeated_rules.begin(), step.defeated_rules.end());
    state.derived[lit] = {std::nullopt, state.steps.size()};
    state.steps.push_back(std::move(step));
  }
  state.ambiguities.assign(ambiguities.begin(), ambiguities.end());
  return state;
}

DecisionResult decide(const Snapshot& snap, const DecisionQuery& query) {
  return decide(snap, infer_fixpoint(snap), query);
}

DecisionResult decide(const Snapshot& snap, const DerivedState& state,
                      const DecisionQuery& query) {
  const KnowledgeBase& kb = snap.kb();
  const bool declared = kb.decision() && kb.decision()->relation == query.relation;
  if (!declared && !kb.functional().contains(query.relation)) {
    throw Error(ErrorCode::InvalidQuery,
                "relation '" + query.relation +
                    "' is neither the decision relation nor functional");
  }

  auto matches = [&](const Literal& l) {
    return l.subject == query.subject && l.relation == query.relation;
  };
  std::optional<Literal> decision;
  for (const auto& [lit, _] : state.derived) {
    if (lit.positive && matches(lit)) {
      decision = lit;
      break;
    }
  }
  if (!decision) {
    std::vector<Ambiguity> related;
    for (const auto& a : state.ambiguities) {
      const Rule* second = kb.find_rule(a.second_rule);
      if (matches(a.literal) || (second && matches(second->head))) related.push_back(a);
    }
    std::string message = "no conclusion for " + query.subject + ' ' + query.relation;
    if (!related.empty()) {
      message += " (tied rules";
      for (const auto& a : related) message += ' ' + a.first_rule + '/' + a.second_rule;
      message += ')';
    }
    throw NoDecision(message, std::move(related));
  }

  Trace trace;
  trace.decision = decision;
  std::set<Literal> visited;
  auto visit = [&](auto&& self, const Literal& lit) -> void {
    if (!visited.insert(lit).second) return;
    const Derivation& d = state.derived.at(lit);
    if (d.fact) {
      trace.fact_sources[lit] = *d.fact;
      trace.used_facts.insert(*d.fact);
      return;
    }
    const DerivationStep& step = state.steps[*d.step];
    for (const auto& b : step.consumed) self(self, b);
    trace.steps.push_back(step);
    trace.used_rules.insert(step.by_rule);
    for (const auto& def : step.defeated_rules) {
      trace.used_rules.insert(def.id);
      trace.defeated_rules.insert(def.id);
    }
  };
  visit(visit, *decision);

  for (const auto& a : state.ambiguities) {
    const Rule* first = kb.find_rule(a.first_rule);
    const Rule* second = kb.find_rule(a.second_rule);
    for (const Literal& lit : visited) {
      auto touches = [&](const Rule* r) {
        return r && (r->head == lit || conflicts(r->head, lit, kb.functional()));
      };
      if (touches(first) || touches(second)) {
        trace.ambiguities.push_back(a);
        break;
      }
    }
  }
  return {*decision, std::move(trace)};
}

std::vector<TraceElement> collect_trace_elements(const Trace& trace) {
  if (trace.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no decision");

  std::map<Literal, const DerivationStep*> step_of;
  for (const auto& s : trace.steps) step_of[s.derived] = &s;

  std::map<std::string, TraceElement> elements;
  auto touch = [&](const std::string& id, ItemKind kind, int depth) -> TraceElement& {
    auto [it, inserted] = elements.try_emplace(id, TraceElement{id, kind, depth, 0, false});
    if (!inserted) it->second.depth = std::min(it->second.depth, depth);
    return it->second;
  };
  auto source_of = [&](const Literal& lit) -> std::pair<std::string, ItemKind> {
    if (auto f = trace.fact_sources.find(lit); f != trace.fact_sources.end())
      return {f->second, ItemKind::fact};
    return {step_of.at(lit)->by_rule, ItemKind::rule};
  };

  // Breadth-first from the decision gives shortest hop counts.
  std::set<Literal> seen{*trace.decision};
  std::deque<std::pair<Literal, int>> queue{{*trace.decision, 0}};
  while (!queue.empty()) {
    auto [lit, depth] = queue.front();
    queue.pop_front();
    auto [id, kind] = source_of(lit);
    touch(id, kind, depth);
    if (kind == ItemKind::fact) continue;
    const DerivationStep& step = *step_of.at(lit);
    for (const auto& d : step.defeated_rules) touch(d.id, ItemKind::rule, depth).defeated = true;
    for (const auto& b : step.consumed) {
      if (seen.insert(b).second) queue.emplace_back(b, depth + 1);
    }
  }

  elements.at(source_of(*trace.decision).first).usage_count += 1;
  for (const auto& step : trace.steps) {
    for (const auto& b : step.consumed) elements.at(source_of(b).first).usage_count += 1;
    for (const auto& d : step.defeated_rules) elements.at(d.id).usage_count += 1;
  }

  std::vector<TraceElement> out;
  for (auto& [_, e] : elements) out.push_back(e);
  std::sort(out.begin(), out.end(), [](const TraceElement& a, const TraceElement& b) {
    if (a.kind != b.kind) return a.kind == ItemKind::fact;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id < b.id;
  });
  return out;
}

std::string_view blocked_name(ContrastiveDiagnosis::Candidate::Blocked b) noexcept {
  using B = ContrastiveDiagnosis::Candidate::Blocked;
  switch (b) {
    case B::body_unsatisfied: return "body_unsatisfied";
    case B::defeated: return "defeated";
    case B::tied: return "tied";
    case B::contradicts_fact: return "contradicts_fact";
  }
  return "?";
}

namespace {

// Statements behind a literal that holds, breadth-first from `depth`.
void add_support(const DerivedState& state, const Literal& lit, int depth,
                 std::vector<TraceElement>& out, std::set<Literal>* literals = nullptr) {
  std::deque<std::pair<Literal, int>> queue{{lit, depth}};
  std::set<Literal> seen{lit};
  while (!queue.empty()) {
    auto [cur, d] = queue.front();
    queue.pop_front();
    if (literals) literals->insert(cur);
    const Derivation& der = state.derived.at(cur);
    TraceElement e{der.fact ? *der.fact : state.steps[*der.step].by_rule,
                   der.fact ? ItemKind::fact : ItemKind::rule, d, 1, false};
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const TraceElement& x) { return x.id == e.id; });
    if (it == out.end()) {
      out.push_back(e);
    } else {
      it->depth = std::min(it->depth, d);
      it->usage_count += 1;
    }
    if (der.fact) continue;
    for (const auto& b : state.steps[*der.step].consumed) {
      if (seen.insert(b).second) queue.emplace_back(b, d + 1);
    }
  }
}

void add_rule_support(const DerivedState& state, const Rule& rule, int depth,
                      std::vector<TraceElement>& out, std::set<Literal>* literals = nullptr) {
  auto it = std::find_if(out.begin(), out.end(),
                         [&](const TraceElement& x) { return x.id == rule.id; });
  if (it == out.end()) {
    out.push_back({rule.id, ItemKind::rule, depth, 1, false});
  } else {
    it->depth = std::min(it->depth, depth);
  }
  for (const auto& b : rule.body) add_support(state, b, depth + 1, out, literals);
}

}  // namespace

ContrastiveDiagnosis find_defeaters(const Snapshot& snap, const Literal& expected) {
  using Candidate = ContrastiveDiagnosis::Candidate;
  const KnowledgeBase& kb = snap.kb();
  const DerivedState state = infer_fixpoint(snap);

  ContrastiveDiagnosis diag;
  diag.expected = expected;
  if (state.holds(expected)) {
    diag.status = ContrastiveDiagnosis::Status::confirmed;
    return diag;
  }

  std::vector<const Rule*> concluding;
  for (const auto& r : kb.rules()) {
    if (r.head == expected) concluding.push_back(&r);
  }
  if (concluding.empty()) {
    throw Error(ErrorCode::NoCandidateRules,
                "no rule concludes " + to_dsl(expected));
  }

  for (const Rule* rule : concluding) {
    Candidate c;
    c.rule = rule->id;

    std::vector<const Fact*> contradicting;
    for (const auto& f : kb.facts()) {
      if (conflicts(f.literal, expected, kb.functional())) contradicting.push_back(&f);
    }
    for (const auto& b : rule->body) {
      if (!state.holds(b)) c.missing.push_back(b);
    }

    if (!contradicting.empty()) {
      c.blocked = Candidate::Blocked::contradicts_fact;
      for (const Fact* f : contradicting) c.support.push_back({f->id, ItemKind::fact, 0, 1, false});
    } else if (!c.missing.empty()) {
      c.blocked = Candidate::Blocked::body_unsatisfied;
      for (const Literal& m : c.missing) {
        // Whatever holds against the missing premise blocks it.
        for (const auto& [lit, _] : state.derived) {
          if (conflicts(lit, m, kb.functional())) add_support(state, lit, 0, c.support);
        }
        // Rules that would have concluded it but were outranked.
        for (const auto& r : kb.rules()) {
          if (r.head != m || !body_holds(r, state)) continue;
          for (const auto& atk : kb.rules()) {
            if (conflicts(atk.head, m, kb.functional()) && body_holds(atk, state) &&
                atk.priority >= r.priority) {
              add_rule_support(state, atk, 0, c.support);
            }
          }
        }
      }
    } else {
      std::vector<const Rule*> outranking;
      for (const auto& atk : kb.rules()) {
        if (conflicts(atk.head, expected, kb.functional()) && body_holds(atk, state) &&
            atk.priority >= rule->priority) {
          outranking.push_back(&atk);
        }
      }
      std::sort(outranking.begin(), outranking.end(), outranks);
      c.blocked = std::any_of(outranking.begin(), outranking.end(),
                              [&](const Rule* r) { return r->priority > rule->priority; })
                      ? Candidate::Blocked::defeated
                      : Candidate::Blocked::tied;

      // A defeater whose own premises already contradict `expected` is a
      // consequence of the defeat, not its cause; cite it only if nothing
      // else blocks.
      std::vector<std::pair<const Rule*, std::vector<TraceElement>>> primary, downstream;
      for (const Rule* atk : outranking) {
        std::vector<TraceElement> support;
        std::set<Literal> literals;
        add_rule_support(state, *atk, 0, support, &literals);
        const bool is_downstream = std::any_of(
            literals.begin(), literals.end(),
            [&](const Literal& l) { return conflicts(l, expected, kb.functional()); });
        (is_downstream ? downstream : primary).emplace_back(atk, std::move(support));
      }
      auto& chosen = primary.empty() ? downstream : primary;
      for (auto& [atk, support] : chosen) {
        c.defeaters.push_back({atk->id, atk->priority});
        for (auto& e : support) {
          auto it = std::find_if(c.support.begin(), c.support.end(),
                                 [&](const TraceElement& x) { return x.id == e.id; });
          if (it == c.support.end()) {
            c.support.push_back(e);
          } else {
            it->depth = std::min(it->depth, e.depth);
          }
        }
      }
    }
    diag.candidates.push_back(std::move(c));
  }
  return diag;
}

}  // namespace ug
