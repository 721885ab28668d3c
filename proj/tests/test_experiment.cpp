#include <set>

#include <doctest.h>

#include "rgio/errors.hpp"
#include "rgio/experiment.hpp"

using namespace rgio;

TEST_CASE("randomize_costs draws stay inside the intervals and repeat with the seed") {
  SeededRng rng(SeededRng::derive(42, "draws", 0));
  CostIntervals intervals;  // [1,5] and [5,20]
  const auto params = randomize_costs(rng, CostMode::SharedAcrossPlayers, intervals, 3, 10);
  REQUIRE(params.players() == 3);
  for (const auto& v : params.c_int) {
    CHECK(v.minCoeff() >= 1.0);
    CHECK(v.maxCoeff() <= 5.0);
  }
  for (const auto& v : params.c_base) {
    CHECK(v.minCoeff() >= 5.0);
    CHECK(v.maxCoeff() <= 20.0);
  }
  CHECK(params.c_int[0] == params.c_int[2]);  // shared mode duplicates rows

  SeededRng rng2(SeededRng::derive(42, "draws", 0));
  const auto again = randomize_costs(rng2, CostMode::SharedAcrossPlayers, intervals, 3, 10);
  CHECK(params.c_int[0] == again.c_int[0]);
  CHECK(params.c_base[0] == again.c_base[0]);

  SeededRng rng3(SeededRng::derive(42, "draws", 1));
  const auto different = randomize_costs(rng3, CostMode::SharedAcrossPlayers, intervals, 3, 10);
  CHECK(params.c_int[0] != different.c_int[0]);

  SeededRng rng4(SeededRng::derive(42, "draws", 2));
  const auto pp = randomize_costs(rng4, CostMode::PerPlayer, intervals, 3, 10);
  CHECK(pp.c_int[0] != pp.c_int[1]);
}

TEST_CASE("generate_observations covers all od pairs with conserved totals") {
  const Network net = build_grid(2);
  SeededRng rng(SeededRng::derive(7, "obs", 0));
  CostIntervals intervals;
  const auto params = randomize_costs(rng, CostMode::SharedAcrossPlayers, intervals, 2, 8);
  SolverSettings settings;
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(8, 2.0);
  std::vector<int> unconverged;
  const ObservationSet obs =
      generate_observations(net, params, 2, alpha, settings, &unconverged);
  CHECK(obs.observation_count() == 12);
  CHECK(unconverged.empty());
  // Total outflow at the origin is N units for every observation.
  for (int k = 0; k < obs.observation_count(); ++k) {
    const OdPair od = obs.od_pairs[k];
    double out_minus_in = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int a : net.out_arcs(od.origin)) out_minus_in += obs.flows[k][i](a);
      for (int a : net.in_arcs(od.origin)) out_minus_in -= obs.flows[k][i](a);
    }
    CHECK(out_minus_in == doctest::Approx(2.0).epsilon(1e-7));
  }
}

TEST_CASE("half-N capacity binds on the 2x2 grid with two players") {
  const Network net = build_grid(2);
  SeededRng rng(SeededRng::derive(11, "tight", 0));
  CostIntervals intervals;
  const auto params = randomize_costs(rng, CostMode::SharedAcrossPlayers, intervals, 2, 8);
  SolverSettings settings;
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(8, 1.0);  // 0.5 N
  const ObservationSet obs = generate_observations(net, params, 2, alpha, settings);
  bool some_tight = false;
  for (int k = 0; k < obs.observation_count(); ++k) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(8);
    for (int i = 0; i < 2; ++i) total += obs.flows[k][i];
    if (((alpha - total).array() <= 1e-6).any()) some_tight = true;
  }
  CHECK(some_tight);
}

TEST_CASE("run_trial completes the full pipeline on the 2x2 grid") {
  ExperimentConfig config;
  config.grid_sides = {2};
  config.player_counts = {2};
  config.trials = 1;
  config.seed = 99;
  config.seed_set = true;
  const Network net = build_grid(2);
  const TrialRecord record = run_trial(config, net, 2, AlphaRule::FullN, 0);
  REQUIRE(record.complete);
  CHECK(record.group_label == "2/2/2.0");
  CHECK(record.io_objective <= 1e-5);
  CHECK(record.io_objective >= -1e-9);
  CHECK(record.flow_error_value >= 0.0);
  CHECK(record.flow_error_value <= 1e-4);
  CHECK(record.c_gap_frobenius >= 0.0);
  CHECK(record.c_base_gap_2norm >= 0.0);
  CHECK(record.unconverged_pairs.empty());
}

TEST_CASE("trivial network end-to-end trial has tiny objective") {
  // Two parallel one-way arcs force a single od pair; run the pipeline by
  // hand at the scale of the spec's smallest example.
  ExperimentConfig config;
  config.player_counts = {1};
  config.trials = 1;
  config.seed = 5;
  config.seed_set = true;
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(2, 2.0);
  config.explicit_alpha = alpha;
  const Network net(2, {{1, 2}, {2, 1}}, "two-cycle");
  const TrialRecord record = run_trial(config, net, 1, AlphaRule::FullN, 0);
  REQUIRE(record.complete);
  CHECK(record.io_objective <= 1e-6);
}

TEST_CASE("same-seed trials repeat bit-identically apart from wall times") {
  ExperimentConfig config;
  config.grid_sides = {2};
  config.player_counts = {2};
  config.trials = 1;
  config.seed = 314159;
  config.seed_set = true;
  const Network net = build_grid(2);
  const TrialRecord a = run_trial(config, net, 2, AlphaRule::HalfN, 0);
  const TrialRecord b = run_trial(config, net, 2, AlphaRule::HalfN, 0);
  REQUIRE(a.complete);
  REQUIRE(b.complete);
  CHECK(a.io_objective == b.io_objective);
  CHECK(a.flow_error_value == b.flow_error_value);
  CHECK(a.c_gap_frobenius == b.c_gap_frobenius);
  for (int i = 0; i < 2; ++i) {
    CHECK(a.true_params.c_int[i] == b.true_params.c_int[i]);
    CHECK(a.recovered_params.c_int[i] == b.recovered_params.c_int[i]);
  }
}

TEST_CASE("run_group emits the configured product of records") {
  ExperimentConfig config;
  config.grid_sides = {2};
  config.player_counts = {1, 2};
  config.alpha_rules = {AlphaRule::HalfN, AlphaRule::FullN};
  config.trials = 2;
  config.seed = 2718;
  config.seed_set = true;
  const GroupResult result = run_group(config);
  CHECK(result.records.size() == 1 * 2 * 2 * 2);
  CHECK(result.completed + result.incomplete == static_cast<int>(result.records.size()));
  // Labels follow grid/players/alpha.
  std::set<std::string> labels;
  for (const auto& r : result.records) labels.insert(r.group_label);
  CHECK(labels.count("2/2/1.0") == 1);
  CHECK(labels.count("2/2/2.0") == 1);
  CHECK(labels.count("2/1/0.5") == 1);
  // Summaries cover every group with at least one completed trial.
  bool found_io = false;
  for (const auto& row : result.summaries)
    if (row.metric == "io_objective" && row.group_label == "2/2/2.0") found_io = true;
  CHECK(found_io);

  // Report writing is exercised through the string paths.
  const std::string json_a = group_report_json(config, result, false);
  const std::string csv = summaries_csv(result);
  CHECK(json_a.find("\"records\"") != std::string::npos);
  CHECK(csv.find("io_objective") != std::string::npos);

  // Same-seed rerun reproduces the timing-free report exactly.
  const GroupResult rerun = run_group(config);
  CHECK(group_report_json(config, rerun, false) == json_a);
}

TEST_CASE("run_group runs identically with two worker threads") {
  ExperimentConfig config;
  config.grid_sides = {2};
  config.player_counts = {2};
  config.alpha_rules = {AlphaRule::FullN};
  config.trials = 2;
  config.seed = 777;
  config.seed_set = true;
  const GroupResult serial = run_group(config);
  config.threads = 2;
  const GroupResult parallel = run_group(config);
  CHECK(group_report_json(config, serial, false) ==
        group_report_json(config, parallel, false));
}

TEST_CASE("config validation rejects bad setups") {
  ExperimentConfig config;
  config.seed_set = true;
  config.player_counts = {};
  CHECK_THROWS_AS(config.validate(), Error);
  config.player_counts = {2};
  config.trials = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  config.trials = 1;
  config.alpha_rules = {AlphaRule::Explicit};
  CHECK_THROWS_AS(config.validate(), Error);  // no explicit alpha given
  config.alpha_rules = {AlphaRule::FullN};
  CHECK_NOTHROW(config.validate());
  ExperimentConfig unseeded;
  CHECK_THROWS_AS(run_group(unseeded), Error);
}
