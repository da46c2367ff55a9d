#include "defend/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "defend/errors.hpp"

namespace defend::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": lengths differ, " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void check_binary(Bits v, const char* what) {
  for (auto b : v) {
    if (b > 1) throw DomainError(std::string(what) + ": values must be 0 or 1");
  }
}

// Indices sorted by descending score, ties by ascending id.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auc_roc(std::span<const double> scores, Bits y) {
  check_lengths(scores.size(), y.size(), "auc_roc");
  check_binary(y, "auc_roc");
  for (double v : scores) {
    if (std::isnan(v)) throw DomainError("auc_roc: NaN score");
  }
  const std::size_t pos = std::count(y.begin(), y.end(), 1);
  const std::size_t neg = y.size() - pos;
  if (pos == 0 || neg == 0) throw PreconditionError("auc_roc: needs both positive and negative labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) tied_pos += y[order[j++]];
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += midrank * static_cast<double>(tied_pos);
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double auc_pr(std::span<const double> scores, Bits y) {
  check_lengths(scores.size(), y.size(), "auc_pr");
  check_binary(y, "auc_pr");
  const std::size_t pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0) throw PreconditionError("auc_pr: needs at least one positive label");
  const auto order = descending(scores);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_tp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) group_tp += y[order[j++]];
    seen = j;
    if (group_tp > 0) {
      tp += group_tp;
      const double recall_step = static_cast<double>(group_tp) / static_cast<double>(pos);
      ap += recall_step * static_cast<double>(tp) / static_cast<double>(seen);
    }
    i = j;
  }
  return ap;
}

std::vector<std::uint8_t> predict_labels(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) {
    throw PreconditionError("predict_labels: k = " + std::to_string(k) + " exceeds N = " +
                            std::to_string(scores.size()));
  }
  const auto order = descending(scores);
  std::vector<std::uint8_t> out(scores.size(), 0);
  for (std::size_t t = 0; t < k; ++t) out[order[t]] = 1;
  return out;
}

double delta_dp(Bits y_hat, Bits s) {
  check_lengths(y_hat.size(), s.size(), "delta_dp");
  check_binary(s, "delta_dp");
  std::array<double, 2> count{0, 0}, flagged{0, 0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    count[s[i]] += 1;
    flagged[s[i]] += y_hat[i];
  }
  if (count[0] == 0 || count[1] == 0) throw PreconditionError("delta_dp: both sensitive groups must be non-empty");
  return std::abs(flagged[0] / count[0] - flagged[1] / count[1]);
}

std::optional<double> delta_eo(Bits y_hat, Bits y, Bits s) {
  check_lengths(y_hat.size(), s.size(), "delta_eo");
  check_lengths(y.size(), s.size(), "delta_eo");
  check_binary(s, "delta_eo");
  std::array<double, 2> positives{0, 0}, caught{0, 0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] == 1) {
      positives[s[i]] += 1;
      caught[s[i]] += y_hat[i];
    }
  }
  if (positives[0] == 0 || positives[1] == 0) return std::nullopt;
  return std::abs(caught[0] / positives[0] - caught[1] / positives[1]);
}

EvalReport evaluate(std::span<const double> scores, Bits y, Bits s, std::optional<double> contamination,
                    std::uint64_t seed) {
  check_lengths(scores.size(), y.size(), "evaluate");
  check_lengths(scores.size(), s.size(), "evaluate");
  const std::size_t n = scores.size();
  const double rate = contamination.value_or(static_cast<double>(std::count(y.begin(), y.end(), 1)) /
                                             static_cast<double>(n));
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("eval.contamination: must be in [0, 1]");
  EvalReport r;
  r.n = n;
  r.seed = seed;
  r.k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  r.auc_roc = auc_roc(scores, y);
  r.auc_pr = auc_pr(scores, y);
  const auto y_hat = predict_labels(scores, r.k);
  r.delta_dp = delta_dp(y_hat, s);
  r.delta_eo = delta_eo(y_hat, y, s);
  for (std::size_t i = 0; i < n; ++i) {
    auto& g = r.per_group[s[i]];
    ++g.size;
    g.predicted += y_hat[i];
    g.actual += y[i];
    g.both += y_hat[i] & y[i];
  }
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.per_group) {
    groups.push_back({{"size", g.size}, {"predicted", g.predicted}, {"actual", g.actual}, {"both", g.both}});
  }
  return {{"auc_roc", r.auc_roc},
          {"auc_pr", r.auc_pr},
          {"delta_dp", r.delta_dp},
          {"delta_eo", r.delta_eo ? nlohmann::json(*r.delta_eo) : nlohmann::json(nullptr)},
          {"k", r.k},
          {"n", r.n},
          {"seed", r.seed},
          {"per_group", std::move(groups)}};
}

}  // namespace defend::metrics
