#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ug/reasoner.hpp"
#include "ug/support_memory.hpp"

namespace ug {

enum class Strategy { last_step, most_specific_rule, most_used_fact, extrospective, contrastive };

std::string_view strategy_name(Strategy s) noexcept;
std::optional<Strategy> parse_strategy(std::string_view text) noexcept;
bool is_introspective(Strategy s) noexcept;

struct RankedElement {
  TraceElement element;
  std::optional<SupportRank> support;  // only when memory was consulted
  std::string reason;                  // why the element is a candidate
  std::optional<Literal> premise;      // cited for a premise that failed to hold

  bool operator==(const RankedElement&) const = default;
};

struct Explanation {
  Strategy strategy = Strategy::last_step;
  std::vector<RankedElement> ranked;
  std::string rendered;
  std::optional<Literal> decision;
  std::optional<Literal> expected;
  bool confirmed = false;  // the expected outcome is what was concluded

  const RankedElement& top() const { return ranked.front(); }
  bool operator==(const Explanation&) const = default;
};

/// Dispatches to the strategy. Introspective strategies never consult
/// `memory`. Throws EmptyTrace, MissingMemory or MissingExpected.
Explanation explain(const Snapshot& kb, const Trace& trace, Strategy strategy,
                    const MemoryLog* memory = nullptr,
                    const std::optional<Literal>& expected = std::nullopt,
                    std::size_t top_k = 1);

/// Minimum support first: (rank, facts before rules, depth, id). Keeps at
/// least `k` elements and every element tied at the minimum rank.
std::vector<RankedElement> select_uncommon_ground(const std::vector<TraceElement>& elements,
                                                  const MemoryLog& memory, std::size_t k);

/// "Why not `expected`?" built from what blocks it. `actual` is the decision
/// that was reached, if any. Throws NoCandidateRules.
Explanation diagnose_contrastive(const Snapshot& kb, const Literal& expected,
                                 const MemoryLog* memory,
                                 const std::optional<Literal>& actual = std::nullopt,
                                 std::size_t top_k = 1);

/// One short paragraph citing only the top-ranked element.
std::string render_text(const Explanation& explanation, const KnowledgeBase& kb);

}  // namespace ug
