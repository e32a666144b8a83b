#pragma once

#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ug/error.hpp"

namespace ug {

/// `[A-Za-z_][A-Za-z0-9_]*`
bool is_identifier(std::string_view text) noexcept;

/// A ground, polarity-signed (subject, relation, value) triple.
struct Literal {
  std::string subject;
  std::string relation;
  std::string value;
  bool positive = true;

  Literal negated() const {
    return Literal{subject, relation, value, !positive};
  }

  auto operator<=>(const Literal&) const = default;
  bool operator==(const Literal&) const = default;
};

using RelationSet = std::set<std::string>;

/// Opposite polarity on the same triple, or two positive literals giving
/// different values to the same (subject, functional relation).
bool conflicts(const Literal& a, const Literal& b,
               const RelationSet& functional) noexcept;

/// DSL form: `[not] subject relation value`.
std::string to_dsl(const Literal& lit);

/// Reading form: `subject relation value` or `subject relation not value`.
std::string verbalize(const Literal& lit);

enum class Layer { fixed, preinstalled, user };
enum class Actor { system, user };
enum class ItemKind { fact, rule };

std::string_view layer_name(Layer layer) noexcept;
std::optional<Layer> parse_layer(std::string_view text) noexcept;
std::string_view item_kind_name(ItemKind kind) noexcept;

struct Fact {
  std::string id;
  Literal literal;

  bool operator==(const Fact&) const = default;
};

struct Rule {
  std::string id;
  std::vector<Literal> body;
  Literal head;
  unsigned priority = 0;
  Layer layer = Layer::preinstalled;

  bool operator==(const Rule&) const = default;
};

/// `if a and b then c`
std::string verbalize(const Rule& rule);

struct DecisionQuery {
  std::string subject;
  std::string relation;

  auto operator<=>(const DecisionQuery&) const = default;
  bool operator==(const DecisionQuery&) const = default;
};

/// Situational facts plus layered ontological rules. Plain value type: every
/// operation below returns a modified copy and leaves its input untouched.
class KnowledgeBase {
 public:
  const std::vector<Fact>& facts() const noexcept { return facts_; }
  const std::vector<Rule>& rules() const noexcept { return rules_; }
  const RelationSet& functional() const noexcept { return functional_; }
  const std::optional<DecisionQuery>& decision() const noexcept {
    return decision_;
  }

  const Fact* find_fact(std::string_view id) const noexcept;
  const Rule* find_rule(std::string_view id) const noexcept;
  const Fact* find_fact_by_literal(const Literal& lit) const noexcept;
  std::optional<ItemKind> kind_of(std::string_view id) const noexcept;
  bool contains(std::string_view id) const noexcept {
    return kind_of(id).has_value();
  }

  bool operator==(const KnowledgeBase&) const = default;

 private:
  friend KnowledgeBase add_fact(const KnowledgeBase&, Fact);
  friend KnowledgeBase retract_fact(const KnowledgeBase&, std::string_view);
  friend KnowledgeBase upsert_rule(const KnowledgeBase&, Rule, Actor);
  friend KnowledgeBase with_functional(const KnowledgeBase&, std::string);
  friend KnowledgeBase with_decision(const KnowledgeBase&, DecisionQuery);

  std::vector<Fact> facts_;
  std::vector<Rule> rules_;
  RelationSet functional_;
  std::optional<DecisionQuery> decision_;
};

/// Throws DuplicateId or FactConflict.
KnowledgeBase add_fact(const KnowledgeBase& kb, Fact fact);

/// Throws RetractUnknown.
KnowledgeBase retract_fact(const KnowledgeBase& kb, std::string_view id);

/// Inserts or replaces a rule. The system actor may write any layer. The user
/// actor may replace preinstalled or user rules and add new ones; whatever it
/// writes lands in the user layer and must not contradict a fixed rule head.
///
/// Throws MalformedRule, DuplicateId (id taken by a fact), FixedLayerViolation
/// or FixedConflict.
KnowledgeBase upsert_rule(const KnowledgeBase& kb, Rule rule, Actor actor);

KnowledgeBase with_functional(const KnowledgeBase& kb, std::string relation);
KnowledgeBase with_decision(const KnowledgeBase& kb, DecisionQuery query);

struct Violation {
  enum class Kind {
    fact_conflict,
    malformed_rule,
    dependency_cycle,
    missing_decision,
    unknown_decision_relation,
    non_functional_decision,
  };

  Kind kind;
  std::string message;
  std::vector<std::string> items;  // statement ids involved

  bool operator==(const Violation&) const = default;
};

std::string_view violation_name(Violation::Kind kind) noexcept;

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate_kb(const KnowledgeBase& kb);

/// Literal dependency graph. A literal depends on the body literals of every
/// rule concluding it and on the body literals of every rule concluding a
/// conflicting literal: both must be settled before it can be decided.
struct DependencyGraph {
  std::vector<Literal> nodes;                       // sorted
  std::vector<std::vector<std::size_t>> depends_on;  // node -> prerequisites
  // rule ids that introduced each edge, parallel to depends_on
  std::vector<std::vector<std::string>> edge_rules;

  std::optional<std::size_t> index_of(const Literal& lit) const;
};

DependencyGraph build_dependency_graph(const KnowledgeBase& kb);

/// Prerequisites come first; ties broken by literal order. Empty optional when
/// cyclic, with `cycle` (if given) receiving the literals of one cycle.
std::optional<std::vector<Literal>> topological_order(
    const DependencyGraph& graph, std::vector<Literal>* cycle = nullptr);

/// Frozen, validated knowledge base. Cheap to copy and safe to share across
/// threads; the stratification is computed once at construction.
class Snapshot {
 public:
  const KnowledgeBase& kb() const noexcept { return *kb_; }
  const std::vector<Literal>& strata() const noexcept { return *strata_; }

  bool operator==(const Snapshot& other) const { return kb() == other.kb(); }

 private:
  friend Snapshot snapshot(const KnowledgeBase&);
  Snapshot(std::shared_ptr<const KnowledgeBase> kb,
           std::shared_ptr<const std::vector<Literal>> strata)
      : kb_(std::move(kb)), strata_(std::move(strata)) {}

  std::shared_ptr<const KnowledgeBase> kb_;
  std::shared_ptr<const std::vector<Literal>> strata_;
};

/// Throws InvalidKB when validate_kb reports anything.
Snapshot snapshot(const KnowledgeBase& kb);

}  // namespace ug
