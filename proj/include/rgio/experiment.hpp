#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rgio/analysis.hpp"
#include "rgio/equilibrium.hpp"
#include "rgio/game.hpp"
#include "rgio/inverse.hpp"
#include "rgio/network.hpp"

namespace rgio {

/// Deterministic stream: splitmix64-hashed substream labels feeding a
/// mersenne-twister-64 engine, uniforms mapped from the top 53 bits. The
/// whole chain is pinned so identical seeds reproduce identical draws on
/// any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }

  /// Substream seed for (seed, label, index).
  static std::uint64_t derive(std::uint64_t seed, const std::string& label,
                              std::uint64_t index);

 private:
  std::mt19937_64 engine_;
};

enum class AlphaRule { HalfN, FullN, Explicit };

std::string to_string(AlphaRule rule);

struct CostIntervals {
  double c_int_low = 1.0, c_int_high = 5.0;
  double c_base_low = 5.0, c_base_high = 20.0;
};

struct ExperimentConfig {
  std::vector<int> grid_sides = {2, 3, 4};  // ignored when network_file set
  std::string network_file;
  CostMode cost_mode = CostMode::SharedAcrossPlayers;
  std::vector<int> player_counts = {2, 5};
  std::vector<AlphaRule> alpha_rules = {AlphaRule::HalfN, AlphaRule::FullN};
  Eigen::VectorXd explicit_alpha;  // used by AlphaRule::Explicit
  int trials = 3;
  std::uint64_t seed = 0;
  bool seed_set = false;  // run-experiment requires an explicit seed
  CostIntervals intervals;
  // Recovery bounds default to the randomization intervals.
  SolverSettings solver;
  std::string output_directory;
  int threads = 1;
  double time_budget_seconds = 600.0;
  bool dump_flow_tensors = false;

  void validate() const;
};

struct PhaseTimings {
  double forward_true_seconds = 0.0;
  double lp_build_seconds = 0.0;
  double lp_solve_seconds = 0.0;
  double forward_recovered_seconds = 0.0;
  double total_seconds = 0.0;
};

struct TrialRecord {
  std::string group_label;  // "grid/players/alpha" per the boxplot labels
  int trial = 0;
  bool complete = false;
  std::vector<std::string> flags;
  CostParameterization true_params;
  CostParameterization recovered_params;
  double io_objective = 0.0;
  double flow_error_value = 0.0;
  double normalized_flow_error_value = 0.0;
  double c_gap_frobenius = 0.0;
  double c_base_gap_2norm = 0.0;
  std::vector<int> unconverged_pairs;
  SpectralReport spectral;
  PhaseTimings timings;
  long lp_iterations = 0;
};

/// Uniform draws from the closed intervals; one parameter pair in shared
/// mode, one per player otherwise.
CostParameterization randomize_costs(SeededRng& rng, CostMode mode,
                                     const CostIntervals& intervals, int players,
                                     int arcs);

/// Solves the game once per OD pair (all pairs, every player shipping one
/// unit). Infeasible pairs abort with an error; pairs whose solve does not
/// converge are excluded and recorded in `unconverged`, and the run
/// continues.
ObservationSet generate_observations(const Network& network,
                                     const CostParameterization& params, int players,
                                     const Eigen::VectorXd& capacity,
                                     const SolverSettings& settings,
                                     std::vector<int>* unconverged = nullptr);

TrialRecord run_trial(const ExperimentConfig& config, const Network& network,
                      int players, AlphaRule rule, int trial_index);

struct SummaryRow {
  std::string metric;
  std::string group_label;
  TrialSummary stats;
};

struct GroupResult {
  std::vector<TrialRecord> records;
  std::vector<SummaryRow> summaries;
  int completed = 0;
  int incomplete = 0;
};

GroupResult run_group(const ExperimentConfig& config);

/// One JSON document per group plus boxplot-ready CSV rows. Wall times are
/// omitted when include_timings is false so same-seed reports compare
/// bit-identically.
std::string group_report_json(const ExperimentConfig& config, const GroupResult& result,
                              bool include_timings);
std::string summaries_csv(const GroupResult& result);
void write_group_report(const ExperimentConfig& config, const GroupResult& result);

}  // namespace rgio
