#include "rgio/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rgio/errors.hpp"

namespace rgio {

double flow_error(const FlowTensor& original, const FlowTensor& recovered) {
  if (original.pairs() != recovered.pairs() ||
      original.players() != recovered.players() ||
      original.arcs() != recovered.arcs())
    throw Error("flow tensors must have identical shapes");
  return (original.data() - recovered.data()).norm();
}

double normalized_flow_error(const FlowTensor& original, const FlowTensor& recovered) {
  const double divisor = static_cast<double>(original.pairs()) *
                         original.players() * original.arcs();
  if (divisor == 0.0) throw Error("flow tensors must be nonempty");
  return flow_error(original, recovered) / divisor;
}

Eigen::MatrixXd arc_symmetric_block(const CostParameterization& params, int players,
                                    int a) {
  Eigen::MatrixXd block(players, players);
  for (int i = 0; i < players; ++i) {
    block(i, i) = 2.0 * params.c_int[i](a);
    for (int j = i + 1; j < players; ++j) {
      const double v = 0.5 * (params.c_int[i](a) + params.c_int[j](a));
      block(i, j) = v;
      block(j, i) = v;
    }
  }
  return block;
}

SpectralReport spectral_check(const CostParameterization& params, int players) {
  if (params.players() != players)
    throw Error("cost parameterization does not cover all players");
  SpectralReport report;
  report.min_eig_symmetric_part = std::numeric_limits<double>::infinity();
  for (int a = 0; a < params.arc_count(); ++a) {
    const Eigen::VectorXd eigs =
        symmetric_eigenvalues(arc_symmetric_block(params, players, a));
    report.min_eig_symmetric_part = std::min(report.min_eig_symmetric_part, eigs(0));
  }
  report.is_positive_definite = report.min_eig_symmetric_part > 0.0;
  if (params.mode == CostMode::SharedAcrossPlayers) {
    report.modulus_lower_bound = params.c_int[0].minCoeff();
  }
  return report;
}

TrialSummary summarize_trials(const std::vector<double>& values) {
  if (values.empty()) throw Error("summarize_trials needs at least one value");
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double p) {
    const double pos = p * (sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  };
  TrialSummary s;
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  const double iqr = s.q3 - s.q1;
  s.whisker_low = s.q1 - 1.5 * iqr;
  s.whisker_high = s.q3 + 1.5 * iqr;
  for (double v : sorted)
    if (v < s.whisker_low || v > s.whisker_high) s.outliers.push_back(v);
  return s;
}

}  // namespace rgio
