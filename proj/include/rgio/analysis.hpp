#pragma once

#include <vector>

#include <Eigen/Dense>

#include "rgio/game.hpp"

namespace rgio {

/// Flows indexed by (od pair k, player i, arc a); all entries nonnegative.
class FlowTensor {
 public:
  FlowTensor() = default;
  FlowTensor(int pairs, int players, int arcs)
      : pairs_(pairs), players_(players), arcs_(arcs),
        data_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pairs) * players * arcs)) {}

  int pairs() const { return pairs_; }
  int players() const { return players_; }
  int arcs() const { return arcs_; }

  double& at(int k, int i, int a) { return data_[index(k, i, a)]; }
  double at(int k, int i, int a) const { return data_[index(k, i, a)]; }
  const Eigen::VectorXd& data() const { return data_; }
  Eigen::VectorXd& data() { return data_; }

 private:
  Eigen::Index index(int k, int i, int a) const {
    return (static_cast<Eigen::Index>(k) * players_ + i) * arcs_ + a;
  }
  int pairs_ = 0, players_ = 0, arcs_ = 0;
  Eigen::VectorXd data_;
};

/// Frobenius norm of the elementwise difference over all (k, i, a).
double flow_error(const FlowTensor& original, const FlowTensor& recovered);

/// flow_error divided by pairs * players * arcs.
double normalized_flow_error(const FlowTensor& original, const FlowTensor& recovered);

struct SpectralReport {
  double min_eig_symmetric_part = 0.0;
  bool is_positive_definite = false;
  double modulus_lower_bound = 0.0;  // min diag C, shared mode only
};

/// Minimum eigenvalue of the symmetric part of the interaction matrix.
/// Since every C_i is diagonal, (M + M')/2 splits into one independent
/// N x N problem per arc; the sweep works on those blocks.
SpectralReport spectral_check(const CostParameterization& params, int players);

/// The per-arc N x N symmetric block for arc `a`:
/// diag 2 C_i(a), off-diagonal (C_i(a) + C_j(a)) / 2.
Eigen::MatrixXd arc_symmetric_block(const CostParameterization& params, int players, int a);

/// All eigenvalues of a symmetric matrix, ascending. Householder
/// tridiagonalization followed by implicit-shift QL iteration.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& matrix);

struct TrialSummary {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;
  std::vector<double> outliers;
};

/// Boxplot statistics: linear-interpolation quartiles, whiskers at
/// q1 - 1.5 (q3 - q1) and q3 + 1.5 (q3 - q1), outliers beyond the whiskers.
TrialSummary summarize_trials(const std::vector<double>& values);

}  // namespace rgio
