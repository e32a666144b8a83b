#include "ug/knowledge_base.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <sstream>

namespace ug {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::FactConflict: return "FactConflict";
    case ErrorCode::FixedLayerViolation: return "FixedLayerViolation";
    case ErrorCode::FixedConflict: return "FixedConflict";
    case ErrorCode::MalformedRule: return "MalformedRule";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::InvalidKB: return "InvalidKB";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::NoDecision: return "NoDecision";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::NoCandidateRules: return "NoCandidateRules";
    case ErrorCode::SeqGap: return "SeqGap";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::UserMismatch: return "UserMismatch";
    case ErrorCode::RetractUnknown: return "RetractUnknown";
    case ErrorCode::MissingMemory: return "MissingMemory";
    case ErrorCode::MissingExpected: return "MissingExpected";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownPersona: return "UnknownPersona";
  }
  return "Unknown";
}

bool is_identifier(std::string_view text) noexcept {
  if (text.empty()) return false;
  auto alpha = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
  };
  if (!alpha(text.front())) return false;
  return std::all_of(text.begin() + 1, text.end(), [&](char c) {
    return alpha(c) || (c >= '0' && c <= '9');
  });
}

bool conflicts(const Literal& a, const Literal& b,
               const RelationSet& functional) noexcept {
  if (a.subject != b.subject || a.relation != b.relation) return false;
  if (a.value == b.value) return a.positive != b.positive;
  return a.positive && b.positive && functional.contains(a.relation);
}

std::string to_dsl(const Literal& lit) {
  std::string out = lit.positive ? "" : "not ";
  out += lit.subject + ' ' + lit.relation + ' ' + lit.value;
  return out;
}

std::string verbalize(const Literal& lit) {
  return lit.subject + ' ' + lit.relation + (lit.positive ? " " : " not ") +
         lit.value;
}

std::string verbalize(const Rule& rule) {
  std::string out = "if ";
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    if (i) out += " and ";
    out += verbalize(rule.body[i]);
  }
  return out + " then " + verbalize(rule.head);
}

std::string_view layer_name(Layer layer) noexcept {
  switch (layer) {
    case Layer::fixed: return "fixed";
    case Layer::preinstalled: return "preinstalled";
    case Layer::user: return "user";
  }
  return "?";
}

std::optional<Layer> parse_layer(std::string_view text) noexcept {
  if (text == "fixed") return Layer::fixed;
  if (text == "preinstalled") return Layer::preinstalled;
  if (text == "user") return Layer::user;
  return std::nullopt;
}

std::string_view item_kind_name(ItemKind kind) noexcept {
  return kind == ItemKind::fact ? "fact" : "rule";
}

const Fact* KnowledgeBase::find_fact(std::string_view id) const noexcept {
  auto it = std::find_if(facts_.begin(), facts_.end(),
                         [&](const Fact& f) { return f.id == id; });
  return it == facts_.end() ? nullptr : &*it;
}

const Rule* KnowledgeBase::find_rule(std::string_view id) const noexcept {
  auto it = std::find_if(rules_.begin(), rules_.end(),
                         [&](const Rule& r) { return r.id == id; });
  return it == rules_.end() ? nullptr : &*it;
}

const Fact* KnowledgeBase::find_fact_by_literal(
    const Literal& lit) const noexcept {
  auto it = std::find_if(facts_.begin(), facts_.end(),
                         [&](const Fact& f) { return f.literal == lit; });
  return it == facts_.end() ? nullptr : &*it;
}

std::optional<ItemKind> KnowledgeBase::kind_of(
    std::string_view id) const noexcept {
  if (find_fact(id)) return ItemKind::fact;
  if (find_rule(id)) return ItemKind::rule;
  return std::nullopt;
}

namespace {

void check_literal(const Literal& lit, ErrorCode code) {
  if (!is_identifier(lit.subject) || !is_identifier(lit.relation) ||
      !is_identifier(lit.value)) {
    throw Error(code, "literal '" + to_dsl(lit) + "' has a malformed identifier");
  }
}

void check_rule_shape(const Rule& rule) {
  if (!is_identifier(rule.id))
    throw Error(ErrorCode::MalformedRule, "malformed rule id '" + rule.id + "'");
  if (rule.body.empty())
    throw Error(ErrorCode::MalformedRule, "rule " + rule.id + " has an empty body");
  check_literal(rule.head, ErrorCode::MalformedRule);
  for (const auto& lit : rule.body) {
    check_literal(lit, ErrorCode::MalformedRule);
    if (lit == rule.head)
      throw Error(ErrorCode::MalformedRule,
                  "rule " + rule.id + " has its head in its body");
  }
}

}  // namespace

KnowledgeBase add_fact(const KnowledgeBase& kb, Fact fact) {
  if (!is_identifier(fact.id))
    throw Error(ErrorCode::MalformedRule, "malformed fact id '" + fact.id + "'");
  check_literal(fact.literal, ErrorCode::MalformedRule);
  if (kb.contains(fact.id))
    throw Error(ErrorCode::DuplicateId, "statement id " + fact.id + " already in use");
  for (const auto& other : kb.facts()) {
    if (conflicts(other.literal, fact.literal, kb.functional())) {
      throw Error(ErrorCode::FactConflict,
                  "fact " + fact.id + " (" + to_dsl(fact.literal) +
                      ") conflicts with fact " + other.id + " (" +
                      to_dsl(other.literal) + ")");
    }
  }
  KnowledgeBase out = kb;
  out.facts_.push_back(std::move(fact));
  return out;
}

KnowledgeBase retract_fact(const KnowledgeBase& kb, std::string_view id) {
  if (!kb.find_fact(id))
    throw Error(ErrorCode::RetractUnknown, "no fact " + std::string(id) + " to retract");
  KnowledgeBase out = kb;
  std::erase_if(out.facts_, [&](const Fact& f) { return f.id == id; });
  return out;
}

KnowledgeBase upsert_rule(const KnowledgeBase& kb, Rule rule, Actor actor) {
  check_rule_shape(rule);
  if (kb.find_fact(rule.id))
    throw Error(ErrorCode::DuplicateId, "statement id " + rule.id + " is a fact");

  const Rule* existing = kb.find_rule(rule.id);
  if (actor == Actor::user) {
    if (existing && existing->layer == Layer::fixed) {
      throw Error(ErrorCode::FixedLayerViolation,
                  "rule " + rule.id + " is in the fixed layer");
    }
    rule.layer = Layer::user;
    const bool new_head = !existing || existing->head != rule.head;
    if (new_head) {
      for (const auto& fixed : kb.rules()) {
        if (fixed.layer != Layer::fixed) continue;
        if (conflicts(fixed.head, rule.head, kb.functional())) {
          throw Error(ErrorCode::FixedConflict,
                      "rule " + rule.id + " concludes " + to_dsl(rule.head) +
                          ", contradicting fixed rule " + fixed.id);
        }
      }
    }
  }

  KnowledgeBase out = kb;
  if (existing) {
    auto it = std::find_if(out.rules_.begin(), out.rules_.end(),
                           [&](const Rule& r) { return r.id == rule.id; });
    *it = std::move(rule);
  } else {
    out.rules_.push_back(std::move(rule));
  }
  return out;
}

KnowledgeBase with_functional(const KnowledgeBase& kb, std::string relation) {
  KnowledgeBase out = kb;
  out.functional_.insert(std::move(relation));
  return out;
}

KnowledgeBase with_decision(const KnowledgeBase& kb, DecisionQuery query) {
  KnowledgeBase out = kb;
  out.decision_ = std::move(query);
  return out;
}

std::string_view violation_name(Violation::Kind kind) noexcept {
  switch (kind) {
    case Violation::Kind::fact_conflict: return "FactConflict";
    case Violation::Kind::malformed_rule: return "MalformedRule";
    case Violation::Kind::dependency_cycle: return "DependencyCycle";
    case Violation::Kind::missing_decision: return "MissingDecision";
    case Violation::Kind::unknown_decision_relation: return "UnknownDecisionRelation";
    case Violation::Kind::non_functional_decision: return "NonFunctionalDecision";
  }
  return "?";
}

std::string ValidationReport::summary() const {
  std::ostringstream out;
  for (const auto& v : violations)
    out << violation_name(v.kind) << ": " << v.message << '\n';
  return out.str();
}

std::optional<std::size_t> DependencyGraph::index_of(const Literal& lit) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), lit);
  if (it == nodes.end() || *it != lit) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

DependencyGraph build_dependency_graph(const KnowledgeBase& kb) {
  DependencyGraph g;
  std::set<Literal> universe;
  for (const auto& f : kb.facts()) universe.insert(f.literal);
  for (const auto& r : kb.rules()) {
    universe.insert(r.head);
    universe.insert(r.body.begin(), r.body.end());
  }
  g.nodes.assign(universe.begin(), universe.end());
  g.depends_on.resize(g.nodes.size());
  g.edge_rules.resize(g.nodes.size());

  auto add_edges = [&](std::size_t from, const Rule& r) {
    for (const auto& b : r.body) {
      g.depends_on[from].push_back(*g.index_of(b));
      g.edge_rules[from].push_back(r.id);
    }
  };
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Literal& lit = g.nodes[i];
    for (const auto& r : kb.rules()) {
      if (r.head == lit || conflicts(r.head, lit, kb.functional()))
        add_edges(i, r);
    }
  }
  return g;
}

std::optional<std::vector<Literal>> topological_order(
    const DependencyGraph& g, std::vector<Literal>* cycle) {
  const std::size_t n = g.nodes.size();
  std::vector<std::set<std::size_t>> prereqs(n);
  std::vector<std::vector<std::size_t>> dependents(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p : g.depends_on[i]) {
      if (prereqs[i].insert(p).second) dependents[p].push_back(i);
    }
  }
  std::vector<std::size_t> pending(n);
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    pending[i] = prereqs[i].size();
    if (pending[i] == 0) ready.push(i);
  }
  std::vector<Literal> order;
  while (!ready.empty()) {
    std::size_t i = ready.top();
    ready.pop();
    order.push_back(g.nodes[i]);
    for (std::size_t d : dependents[i]) {
      if (--pending[d] == 0) ready.push(d);
    }
  }
  if (order.size() == n) return order;

  if (cycle) {
    // Walk prerequisite edges among unfinished nodes until one repeats.
    cycle->clear();
    std::size_t cur = 0;
    while (pending[cur] == 0) ++cur;
    std::vector<int> seen_at(n, -1);
    std::vector<std::size_t> path;
    while (seen_at[cur] < 0) {
      seen_at[cur] = static_cast<int>(path.size());
      path.push_back(cur);
      for (std::size_t p : prereqs[cur]) {
        if (pending[p] != 0) {
          cur = p;
          break;
        }
      }
    }
    for (std::size_t k = static_cast<std::size_t>(seen_at[cur]); k < path.size(); ++k)
      cycle->push_back(g.nodes[path[k]]);
  }
  return std::nullopt;
}

ValidationReport validate_kb(const KnowledgeBase& kb) {
  ValidationReport report;
  using Kind = Violation::Kind;

  const auto& facts = kb.facts();
  for (std::size_t i = 0; i < facts.size(); ++i) {
    for (std::size_t j = i + 1; j < facts.size(); ++j) {
      if (conflicts(facts[i].literal, facts[j].literal, kb.functional())) {
        report.violations.push_back(
            {Kind::fact_conflict,
             "facts " + facts[i].id + " and " + facts[j].id + " conflict",
             {facts[i].id, facts[j].id}});
      }
    }
  }

  for (const auto& r : kb.rules()) {
    try {
      check_rule_shape(r);
    } catch (const Error& e) {
      report.violations.push_back({Kind::malformed_rule, e.what(), {r.id}});
    }
  }

  const auto graph = build_dependency_graph(kb);
  std::vector<Literal> cycle;
  if (!topological_order(graph, &cycle)) {
    std::set<std::string> rules;
    std::string path;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const auto from = *graph.index_of(cycle[k]);
      const auto to = *graph.index_of(cycle[(k + 1) % cycle.size()]);
      const auto& deps = graph.depends_on[from];
      for (std::size_t e = 0; e < deps.size(); ++e) {
        if (deps[e] == to) {
          rules.insert(graph.edge_rules[from][e]);
          break;
        }
      }
      path += to_dsl(cycle[k]) + " -> ";
    }
    path += to_dsl(cycle.front());
    report.violations.push_back({Kind::dependency_cycle,
                                 "dependency cycle: " + path,
                                 {rules.begin(), rules.end()}});
  }

  if (!kb.decision()) {
    report.violations.push_back(
        {Kind::missing_decision, "no decision query declared", {}});
  } else {
    const auto& rel = kb.decision()->relation;
    bool used = std::any_of(facts.begin(), facts.end(), [&](const Fact& f) {
      return f.literal.relation == rel;
    });
    used = used || std::any_of(kb.rules().begin(), kb.rules().end(),
                               [&](const Rule& r) { return r.head.relation == rel; });
    if (!used) {
      report.violations.push_back({Kind::unknown_decision_relation,
                                   "decision relation '" + rel +
                                       "' is not concluded by any statement",
                                   {}});
    }
    if (!kb.functional().contains(rel)) {
      report.violations.push_back(
          {Kind::non_functional_decision,
           "decision relation '" + rel + "' is not declared functional", {}});
    }
  }
  return report;
}

Snapshot snapshot(const KnowledgeBase& kb) {
  auto report = validate_kb(kb);
  if (!report.ok()) throw Error(ErrorCode::InvalidKB, report.summary());
  auto order = topological_order(build_dependency_graph(kb));
  return Snapshot(std::make_shared<const KnowledgeBase>(kb),
                  std::make_shared<const std::vector<Literal>>(std::move(*order)));
}

}  // namespace ug
