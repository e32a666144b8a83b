#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ug/knowledge_base.hpp"

namespace ug {

struct RuleRef {
  std::string id;
  unsigned priority = 0;

  auto operator<=>(const RuleRef&) const = default;
  bool operator==(const RuleRef&) const = default;
};

struct DerivationStep {
  Literal derived;
  std::string by_rule;
  std::vector<Literal> consumed;        // by_rule's body
  std::vector<RuleRef> defeated_rules;  // applicable, conflicting, outranked

  bool operator==(const DerivationStep&) const = default;
};

/// Two conflicting applicable rules of equal, maximal priority. `literal` is
/// the head of `first_rule`; rule ids are ordered.
struct Ambiguity {
  Literal literal;
  std::string first_rule;
  std::string second_rule;

  auto operator<=>(const Ambiguity&) const = default;
  bool operator==(const Ambiguity&) const = default;
};

/// How a literal came to hold.
struct Derivation {
  std::optional<std::string> fact;  // set for situational facts
  std::optional<std::size_t> step;  // index into DerivedState::steps
};

struct DerivedState {
  std::map<Literal, Derivation> derived;
  std::vector<DerivationStep> steps;  // in stratum order
  std::vector<Ambiguity> ambiguities;

  bool holds(const Literal& lit) const { return derived.contains(lit); }
  std::set<Literal> literals() const;
};

/// Priority-aware defeasible closure. Literals are settled stratum by
/// stratum; a rule fires when its body holds and every applicable rule with
/// a conflicting head has strictly lower priority. Facts are strict: a rule
/// whose head contradicts a fact never fires.
DerivedState infer_fixpoint(const Snapshot& kb);

struct Trace {
  std::optional<Literal> decision;
  std::vector<DerivationStep> steps;                // topological
  std::map<Literal, std::string> fact_sources;       // on-path facts
  std::set<std::string> used_facts;
  std::set<std::string> used_rules;                 // includes defeated
  std::set<std::string> defeated_rules;
  std::vector<Ambiguity> ambiguities;

  bool empty() const noexcept { return !decision.has_value(); }
  bool operator==(const Trace&) const = default;
};

class NoDecision : public Error {
 public:
  NoDecision(const std::string& message, std::vector<Ambiguity> ambiguities)
      : Error(ErrorCode::NoDecision, message),
        ambiguities_(std::move(ambiguities)) {}

  const std::vector<Ambiguity>& ambiguities() const noexcept {
    return ambiguities_;
  }

 private:
  std::vector<Ambiguity> ambiguities_;
};

struct DecisionResult {
  Literal decision;
  Trace trace;
};

/// Throws InvalidQuery when the relation is neither the declared decision
/// relation nor functional, and NoDecision when nothing positive holds.
DecisionResult decide(const Snapshot& kb, const DecisionQuery& query);
DecisionResult decide(const Snapshot& kb, const DerivedState& state,
                      const DecisionQuery& query);

struct TraceElement {
  std::string id;
  ItemKind kind = ItemKind::fact;
  int depth = 0;            // hops from the decision literal
  int usage_count = 0;      // incoming derivation-DAG edges
  bool defeated = false;

  bool operator==(const TraceElement&) const = default;
};

/// Ordered by (kind fact-first, depth, id). Throws EmptyTrace.
std::vector<TraceElement> collect_trace_elements(const Trace& trace);

struct ContrastiveDiagnosis {
  enum class Status { confirmed, refuted };
  struct Candidate {
    enum class Blocked { body_unsatisfied, defeated, tied, contradicts_fact };

    std::string rule;
    Blocked blocked = Blocked::body_unsatisfied;
    std::vector<Literal> missing;        // body literals that do not hold
    std::vector<RuleRef> defeaters;      // outranking applicable rules
    std::vector<TraceElement> support;   // blockers (depth 0) and what supports them
  };

  Status status = Status::refuted;
  Literal expected;
  std::vector<Candidate> candidates;  // one per rule concluding `expected`
};

std::string_view blocked_name(ContrastiveDiagnosis::Candidate::Blocked b) noexcept;

/// "Why not `expected`?" Classifies every rule that concludes `expected`.
/// Throws NoCandidateRules when none does (and it does not hold).
ContrastiveDiagnosis find_defeaters(const Snapshot& kb, const Literal& expected);

}  // namespace ug
