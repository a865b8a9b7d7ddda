#include "qmtot/selector.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace qmtot {

std::string_view to_string(Route r) {
  switch (r) {
    case Route::agreement:
      return "agreement";
    case Route::judge:
      return "judge";
    case Route::fallback_cotsc:
      return "fallback_cotsc";
    case Route::abstain:
      return "abstain";
  }
  return "abstain";
}

std::optional<Route> route_from_string(std::string_view s) {
  for (Route r : {Route::agreement, Route::judge, Route::fallback_cotsc, Route::abstain}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

Json to_json(const OptionAggregate& a) {
  return Json{{"option", a.option.str()},
              {"count", a.count},
              {"avg_fs", a.avg_fs},
              {"max_fs", a.max_fs}};
}

Json to_json(const SelectionResult& s) {
  Json aggs = Json::array();
  for (const auto& a : s.aggregates) aggs.push_back(to_json(a));
  return Json{{"chosen", s.chosen ? Json(s.chosen->str()) : Json()},
              {"route", to_string(s.route)},
              {"avg_winner", s.avg_winner ? Json(s.avg_winner->str()) : Json()},
              {"max_winner", s.max_winner ? Json(s.max_winner->str()) : Json()},
              {"judge_fallback", s.judge_fallback},
              {"aggregates", std::move(aggs)}};
}

OptionAggregate option_aggregate_from_json(const Json& j) {
  OptionAggregate a;
  try {
    a.option = option_label_from_json(j.at("option"));
    a.count = j.at("count").get<int>();
    a.avg_fs = j.at("avg_fs").get<double>();
    a.max_fs = j.at("max_fs").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("option aggregate: ") + e.what());
  }
  return a;
}

SelectionResult selection_result_from_json(const Json& j) {
  SelectionResult s;
  try {
    auto label = [&j](const char* key) -> std::optional<OptionLabel> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return option_label_from_json(j.at(key));
    };
    s.chosen = label("chosen");
    s.avg_winner = label("avg_winner");
    s.max_winner = label("max_winner");
    auto route = route_from_string(j.at("route").get<std::string>());
    if (!route) throw SchemaError("unknown route " + j.at("route").dump());
    s.route = *route;
    s.judge_fallback = j.value("judge_fallback", false);
    for (const auto& a : j.at("aggregates")) s.aggregates.push_back(option_aggregate_from_json(a));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("selection result: ") + e.what());
  }
  return s;
}

bool beats(double a, double b) {
  return a > b + kTieTolerance * std::max(1.0, std::abs(b));
}

std::vector<OptionAggregate> aggregate(const std::vector<ChainRecord>& chains) {
  std::map<OptionLabel, std::vector<double>> scores;
  for (const auto& c : chains) {
    if (c.answer && c.scores) scores[*c.answer].push_back(c.scores->fs);
  }
  std::vector<OptionAggregate> out;
  out.reserve(scores.size());
  for (auto& [option, values] : scores) {
    // Summing in sorted order makes the mean independent of chain order.
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    out.push_back(OptionAggregate{option, static_cast<int>(values.size()),
                                  sum / static_cast<double>(values.size()), values.back()});
  }
  return out;
}

SelectionResult decide(const std::vector<OptionAggregate>& aggs, const JudgeContext& ctx) {
  SelectionResult result;
  result.aggregates = aggs;
  std::sort(result.aggregates.begin(), result.aggregates.end(),
            [](const auto& a, const auto& b) { return a.option < b.option; });

  if (result.aggregates.empty()) {
    if (ctx.cotsc_vote) {
      result.chosen = ctx.cotsc_vote;
      result.route = Route::fallback_cotsc;
    } else {
      result.route = Route::abstain;
    }
    return result;
  }

  const OptionAggregate* best_avg = nullptr;
  const OptionAggregate* best_max = nullptr;
  for (const auto& a : result.aggregates) {
    if (best_avg == nullptr || beats(a.avg_fs, best_avg->avg_fs)) best_avg = &a;
    if (best_max == nullptr || beats(a.max_fs, best_max->max_fs)) best_max = &a;
  }
  result.avg_winner = best_avg->option;
  result.max_winner = best_max->option;

  if (best_avg->option == best_max->option) {
    result.chosen = best_avg->option;
    result.route = Route::agreement;
    return result;
  }

  result.route = Route::judge;
  result.chosen = best_avg->option;
  if (!ctx.judge) {
    result.judge_fallback = true;
    return result;
  }
  try {
    JudgeOutcome outcome = ctx.judge(best_avg->option, best_max->option);
    if (outcome.winner == best_avg->option || outcome.winner == best_max->option) {
      result.chosen = outcome.winner;
      result.judge_fallback = outcome.fallback;
    } else {
      result.judge_fallback = true;
    }
  } catch (const std::exception& e) {
    log_warning(std::string("judge failed, keeping the average-score option: ") + e.what());
    result.judge_fallback = true;
  }
  return result;
}

}  // namespace qmtot
