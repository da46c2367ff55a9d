#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace defend::metrics {

using Bits = std::span<const std::uint8_t>;

// Mann-Whitney statistic; ties count one half. Throws PreconditionError
// unless both classes are present.
double auc_roc(std::span<const double> scores, Bits y);

// Average precision over descending distinct score thresholds.
double auc_pr(std::span<const double> scores, Bits y);

// Flags the k highest scores; ties at the cutoff go to the lower node id.
std::vector<std::uint8_t> predict_labels(std::span<const double> scores, std::size_t k);

// |P(y_hat=1 | s=0) - P(y_hat=1 | s=1)|.
double delta_dp(Bits y_hat, Bits s);

// |TPR(s=0) - TPR(s=1)|; empty when a group has no true anomalies.
std::optional<double> delta_eo(Bits y_hat, Bits y, Bits s);

struct GroupCounts {
  std::size_t size = 0;
  std::size_t predicted = 0;
  std::size_t actual = 0;
  std::size_t both = 0;
};

struct EvalReport {
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  double delta_dp = 0.0;
  std::optional<double> delta_eo;
  std::size_t k = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::array<GroupCounts, 2> per_group;
};

// k = round(contamination * N); contamination defaults to the true rate.
EvalReport evaluate(std::span<const double> scores, Bits y, Bits s, std::optional<double> contamination = {},
                    std::uint64_t seed = 0);

// Flat object with keys auc_roc, auc_pr, delta_dp, delta_eo (null when
// undefined), k, n, seed, plus per_group.
nlohmann::json to_json(const EvalReport& r);

}  // namespace defend::metrics
