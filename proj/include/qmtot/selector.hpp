#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "qmtot/domain.hpp"
#include "qmtot/evaluator.hpp"

namespace qmtot {

struct OptionAggregate {
  OptionLabel option;
  int count = 0;
  double avg_fs = 0.0;
  double max_fs = 0.0;

  bool operator==(const OptionAggregate&) const = default;
};

enum class Route { agreement, judge, fallback_cotsc, abstain };

std::string_view to_string(Route r);
std::optional<Route> route_from_string(std::string_view s);

struct SelectionResult {
  // Unset only when route is abstain.
  std::optional<OptionLabel> chosen;
  Route route = Route::abstain;
  std::optional<OptionLabel> avg_winner;
  std::optional<OptionLabel> max_winner;
  std::vector<OptionAggregate> aggregates;
  // Judge route only: the judge gave no usable pick or failed, so the
  // average-score side was kept.
  bool judge_fallback = false;

  bool operator==(const SelectionResult&) const = default;
};

Json to_json(const OptionAggregate& a);
Json to_json(const SelectionResult& s);
OptionAggregate option_aggregate_from_json(const Json& j);
SelectionResult selection_result_from_json(const Json& j);

/// Per-option count, mean and max of fs over answered, scored chains,
/// ordered by option label. Independent of chain order.
std::vector<OptionAggregate> aggregate(const std::vector<ChainRecord>& chains);

struct JudgeContext {
  // Called with (average-score winner, max-score winner) when they differ.
  std::function<JudgeOutcome(OptionLabel, OptionLabel)> judge;
  // Majority vote of CoT samples, used when there is nothing to aggregate.
  std::optional<OptionLabel> cotsc_vote;
};

/// Relative gap below which two fs statistics count as tied. Means of
/// different chain sets can agree mathematically yet differ in the last bit.
inline constexpr double kTieTolerance = 1e-12;

/// True when `a` exceeds `b` by more than the tie tolerance.
bool beats(double a, double b);

/// Agreement between the mean-fs and max-fs argmaxes, otherwise the judge.
/// Ties within either argmax go to the alphabetically first option.
SelectionResult decide(const std::vector<OptionAggregate>& aggs, const JudgeContext& ctx);

}  // namespace qmtot
