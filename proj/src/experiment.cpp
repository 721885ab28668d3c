#include "rgio/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rgio/errors.hpp"

namespace rgio {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_alpha(double value) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << value;
  return out.str();
}

}  // namespace

std::uint64_t SeededRng::derive(std::uint64_t seed, const std::string& label,
                                std::uint64_t index) {
  return splitmix64(seed ^ fnv1a64(label) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

std::string to_string(AlphaRule rule) {
  switch (rule) {
    case AlphaRule::HalfN: return "half";
    case AlphaRule::FullN: return "full";
    case AlphaRule::Explicit: return "explicit";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw Error("trials must be >= 1");
  if (player_counts.empty()) throw Error("player_counts must not be empty");
  if (alpha_rules.empty()) throw Error("alpha_rules must not be empty");
  if (grid_sides.empty() && network_file.empty())
    throw Error("either grid sides or a network file must be given");
  for (int side : grid_sides)
    if (side < 2) throw Error("grid sides must be >= 2");
  for (int players : player_counts)
    if (players < 1) throw Error("player counts must be >= 1");
  if (intervals.c_int_low <= 0 || intervals.c_base_low <= 0 ||
      intervals.c_int_low > intervals.c_int_high ||
      intervals.c_base_low > intervals.c_base_high)
    throw Error("cost intervals must be positive with low <= high");
  for (AlphaRule rule : alpha_rules)
    if (rule == AlphaRule::Explicit && explicit_alpha.size() == 0)
      throw Error("explicit alpha rule needs an alpha vector");
  solver.validate();
  if (threads < 1) throw Error("threads must be >= 1");
}

CostParameterization randomize_costs(SeededRng& rng, CostMode mode,
                                     const CostIntervals& intervals, int players,
                                     int arcs) {
  const auto draw = [&](double lo, double hi) {
    Eigen::VectorXd v(arcs);
    for (int a = 0; a < arcs; ++a) v(a) = rng.uniform(lo, hi);
    return v;
  };
  if (mode == CostMode::SharedAcrossPlayers) {
    const Eigen::VectorXd c = draw(intervals.c_int_low, intervals.c_int_high);
    const Eigen::VectorXd base = draw(intervals.c_base_low, intervals.c_base_high);
    return CostParameterization::shared(c, base, players);
  }
  std::vector<Eigen::VectorXd> c_int, c_base;
  for (int i = 0; i < players; ++i) {
    c_int.push_back(draw(intervals.c_int_low, intervals.c_int_high));
    c_base.push_back(draw(intervals.c_base_low, intervals.c_base_high));
  }
  return CostParameterization::per_player(std::move(c_int), std::move(c_base));
}

ObservationSet generate_observations(const Network& network,
                                     const CostParameterization& params, int players,
                                     const Eigen::VectorXd& capacity,
                                     const SolverSettings& settings,
                                     std::vector<int>* unconverged) {
  ObservationSet obs;
  obs.network = network;
  obs.players = players;
  obs.capacity = capacity;
  const auto pairs = enumerate_od_pairs(network);

  GameInstance inst;
  inst.network = network;
  inst.players = players;
  inst.capacity = capacity;

  for (size_t k = 0; k < pairs.size(); ++k) {
    inst.od = pairs[k];
    const EquilibriumResult res = solve_equilibrium(inst, params, settings);
    if (res.info.status == SolveStatus::Infeasible)
      throw Error("OD pair " + std::to_string(k) +
                  " is infeasible under the chosen capacity rule");
    if (res.info.status == SolveStatus::DidNotConverge) {
      if (unconverged) unconverged->push_back(static_cast<int>(k));
      continue;  // pair excluded, run continues
    }
    obs.od_pairs.push_back(pairs[k]);
    std::vector<Eigen::VectorXd> flows = res.solution.flows;
    for (auto& x : flows) x = x.cwiseMax(0.0);  // strip solver-level noise
    obs.flows.push_back(std::move(flows));
  }
  if (obs.od_pairs.empty()) throw Error("no OD pair converged");
  obs.validate();
  return obs;
}

namespace {

double cost_gap_frobenius(const CostParameterization& a, const CostParameterization& b) {
  const int rows = a.mode == CostMode::SharedAcrossPlayers ? 1 : a.players();
  double sum = 0.0;
  for (int i = 0; i < rows; ++i) sum += (a.c_int[i] - b.c_int[i]).squaredNorm();
  return std::sqrt(sum);
}

double base_gap_2norm(const CostParameterization& a, const CostParameterization& b) {
  const int rows = a.mode == CostMode::SharedAcrossPlayers ? 1 : a.players();
  double sum = 0.0;
  for (int i = 0; i < rows; ++i) sum += (a.c_base[i] - b.c_base[i]).squaredNorm();
  return std::sqrt(sum);
}

FlowTensor tensor_from_observations(const ObservationSet& obs,
                                    const std::vector<int>& keep) {
  FlowTensor t(static_cast<int>(keep.size()), obs.players, obs.network.arc_count());
  for (size_t slot = 0; slot < keep.size(); ++slot)
    for (int i = 0; i < obs.players; ++i)
      for (int a = 0; a < obs.network.arc_count(); ++a)
        t.at(static_cast<int>(slot), i, a) = obs.flows[keep[slot]][i](a);
  return t;
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& config, const Network& network,
                      int players, AlphaRule rule, int trial_index) {
  TrialRecord record;
  record.trial = trial_index;

  Eigen::VectorXd capacity;
  double alpha_value = 0.0;
  switch (rule) {
    case AlphaRule::HalfN:
      alpha_value = 0.5 * players;
      capacity = Eigen::VectorXd::Constant(network.arc_count(), alpha_value);
      break;
    case AlphaRule::FullN:
      alpha_value = players;
      capacity = Eigen::VectorXd::Constant(network.arc_count(), alpha_value);
      break;
    case AlphaRule::Explicit:
      capacity = config.explicit_alpha;
      alpha_value = capacity.size() > 0 ? capacity(0) : 0.0;
      break;
  }
  const bool is_grid = network.name().rfind("grid", 0) == 0;
  const std::string net_label =
      is_grid ? std::to_string(static_cast<int>(std::lround(
                    std::sqrt(static_cast<double>(network.node_count())))))
              : network.name();
  record.group_label = net_label + "/" + std::to_string(players) + "/" +
                       (rule == AlphaRule::Explicit ? "custom" : format_alpha(alpha_value));

  const std::string substream_label =
      record.group_label + "/" + to_string(config.cost_mode);
  SeededRng rng(SeededRng::derive(config.seed, substream_label,
                                  static_cast<std::uint64_t>(trial_index)));

  const auto t_start = std::chrono::steady_clock::now();
  const auto out_of_budget = [&] {
    return config.time_budget_seconds > 0 &&
           seconds_since(t_start) > config.time_budget_seconds;
  };

  try {
    record.true_params = randomize_costs(rng, config.cost_mode, config.intervals,
                                         players, network.arc_count());
    record.spectral = spectral_check(record.true_params, players);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> unconverged_true;
    const ObservationSet observed = generate_observations(
        network, record.true_params, players, capacity, config.solver, &unconverged_true);
    record.timings.forward_true_seconds = seconds_since(t0);
    if (out_of_budget()) {
      record.flags.push_back("time-budget-exceeded:forward");
      record.timings.total_seconds = seconds_since(t_start);
      return record;
    }

    const ParameterBounds bounds = [&] {
      ParameterBounds b;
      const int n = network.arc_count();
      b.c_int_lower = Eigen::VectorXd::Constant(n, config.intervals.c_int_low);
      b.c_int_upper = Eigen::VectorXd::Constant(n, config.intervals.c_int_high);
      b.c_base_lower = Eigen::VectorXd::Constant(n, config.intervals.c_base_low);
      b.c_base_upper = Eigen::VectorXd::Constant(n, config.intervals.c_base_high);
      return b;
    }();

    t0 = std::chrono::steady_clock::now();
    const ResidualProgram program =
        build_residual_program(observed, bounds, config.cost_mode);
    record.timings.lp_build_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const LpResult lp_result = solve_lp(program.lp);
    record.timings.lp_solve_seconds = seconds_since(t0);
    record.lp_iterations = lp_result.iterations;
    if (lp_result.status != LpStatus::Optimal) {
      record.flags.push_back("lp-" + to_string(lp_result.status));
      record.timings.total_seconds = seconds_since(t_start);
      return record;
    }

    // Extraction through the same path recover_parameters uses.
    RecoveredParameters rec;
    {
      const auto& layout = program.layout;
      std::vector<Eigen::VectorXd> c_int(players), c_base(players);
      for (int i = 0; i < players; ++i) {
        c_int[i].resize(network.arc_count());
        c_base[i].resize(network.arc_count());
        for (int a = 0; a < network.arc_count(); ++a) {
          c_int[i](a) = lp_result.z(layout.c_int_var(i, a));
          c_base[i](a) = lp_result.z(layout.c_base_var(i, a));
        }
      }
      rec.params.mode = config.cost_mode;
      rec.params.c_int = std::move(c_int);
      rec.params.c_base = std::move(c_base);
      rec.params.validate();
      rec.io_objective = lp_result.objective_value;
      rec.objective_nonnegative = rec.io_objective >= -1e-9;
    }
    record.recovered_params = rec.params;
    record.io_objective = rec.io_objective;
    if (!rec.objective_nonnegative) record.flags.push_back("negative-io-objective");
    if (out_of_budget()) {
      record.flags.push_back("time-budget-exceeded:lp");
      record.timings.total_seconds = seconds_since(t_start);
      return record;
    }

    t0 = std::chrono::steady_clock::now();
    std::vector<int> unconverged_replay;
    const ObservationSet replayed =
        generate_observations(network, record.recovered_params, players, capacity,
                              config.solver, &unconverged_replay);
    record.timings.forward_recovered_seconds = seconds_since(t0);

    // Pairs must match between the two simulations before comparing flows.
    record.unconverged_pairs = unconverged_true;
    for (int k : unconverged_replay) record.unconverged_pairs.push_back(k);
    std::sort(record.unconverged_pairs.begin(), record.unconverged_pairs.end());
    record.unconverged_pairs.erase(
        std::unique(record.unconverged_pairs.begin(), record.unconverged_pairs.end()),
        record.unconverged_pairs.end());
    if (!record.unconverged_pairs.empty())
      record.flags.push_back("unconverged-od-pairs:" +
                             std::to_string(record.unconverged_pairs.size()));

    const auto keep_indices = [&](const ObservationSet& set,
                                  const std::vector<OdPair>& all) {
      std::vector<int> keep;
      size_t cursor = 0;
      for (size_t k = 0; k < all.size(); ++k) {
        if (cursor < set.od_pairs.size() &&
            set.od_pairs[cursor].origin == all[k].origin &&
            set.od_pairs[cursor].destination == all[k].destination) {
          bool excluded = false;
          for (int bad : record.unconverged_pairs)
            if (bad == static_cast<int>(k)) excluded = true;
          if (!excluded) keep.push_back(static_cast<int>(cursor));
          ++cursor;
        }
      }
      return keep;
    };
    const auto all_pairs = enumerate_od_pairs(network);
    const std::vector<int> keep_true = keep_indices(observed, all_pairs);
    const std::vector<int> keep_replay = keep_indices(replayed, all_pairs);
    if (keep_true.size() != keep_replay.size())
      throw Error("mismatched observation coverage between simulations");

    const FlowTensor original = tensor_from_observations(observed, keep_true);
    const FlowTensor recovered = tensor_from_observations(replayed, keep_replay);
    record.flow_error_value = flow_error(original, recovered);
    record.normalized_flow_error_value = normalized_flow_error(original, recovered);
    record.c_gap_frobenius = cost_gap_frobenius(record.true_params, record.recovered_params);
    record.c_base_gap_2norm = base_gap_2norm(record.true_params, record.recovered_params);
    record.complete = record.flags.empty();
  } catch (const std::exception& e) {
    record.flags.push_back(std::string("error:") + e.what());
    record.complete = false;
  }
  record.timings.total_seconds = seconds_since(t_start);
  return record;
}

GroupResult run_group(const ExperimentConfig& config) {
  config.validate();
  if (!config.seed_set) throw Error("run_group requires an explicit seed");

  std::vector<Network> networks;
  if (!config.network_file.empty()) {
    networks.push_back(load_network_file(config.network_file));
  } else {
    for (int side : config.grid_sides) networks.push_back(build_grid(side));
  }

  struct Task {
    const Network* network;
    int players;
    AlphaRule rule;
    int trial;
  };
  std::vector<Task> tasks;
  for (const Network& net : networks)
    for (int players : config.player_counts)
      for (AlphaRule rule : config.alpha_rules)
        for (int trial = 0; trial < config.trials; ++trial)
          tasks.push_back({&net, players, rule, trial});

  GroupResult result;
  result.records.resize(tasks.size());

  if (config.threads <= 1 || tasks.size() <= 1) {
    for (size_t t = 0; t < tasks.size(); ++t)
      result.records[t] = run_trial(config, *tasks[t].network, tasks[t].players,
                                    tasks[t].rule, tasks[t].trial);
  } else {
    std::atomic<size_t> next{0};
    const int workers = std::min<int>(config.threads, static_cast<int>(tasks.size()));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const size_t t = next.fetch_add(1);
          if (t >= tasks.size()) return;
          result.records[t] = run_trial(config, *tasks[t].network, tasks[t].players,
                                        tasks[t].rule, tasks[t].trial);
        }
      });
    for (std::thread& th : pool) th.join();
  }

  for (const TrialRecord& record : result.records)
    record.complete ? ++result.completed : ++result.incomplete;

  // Boxplot rows per (group label, metric) over the completed trials.
  std::vector<std::string> group_order;
  for (const TrialRecord& record : result.records)
    if (std::find(group_order.begin(), group_order.end(), record.group_label) ==
        group_order.end())
      group_order.push_back(record.group_label);
  const auto add_summary = [&](const std::string& metric, const std::string& label,
                               const std::vector<double>& values) {
    if (values.empty()) return;
    result.summaries.push_back({metric, label, summarize_trials(values)});
  };
  for (const std::string& label : group_order) {
    std::vector<double> io, fe, nfe, wall;
    for (const TrialRecord& record : result.records) {
      if (record.group_label != label || !record.complete) continue;
      io.push_back(record.io_objective);
      fe.push_back(record.flow_error_value);
      nfe.push_back(record.normalized_flow_error_value);
      wall.push_back(record.timings.total_seconds);
    }
    add_summary("io_objective", label, io);
    add_summary("flow_error", label, fe);
    add_summary("normalized_flow_error", label, nfe);
    add_summary("wall_seconds", label, wall);
  }
  return result;
}

namespace {

nlohmann::json params_to_json(const CostParameterization& params) {
  nlohmann::json doc;
  if (params.c_int.empty()) return doc;
  doc["mode"] = to_string(params.mode);
  auto rows = [](const std::vector<Eigen::VectorXd>& vs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : vs) out.push_back(std::vector<double>(v.begin(), v.end()));
    return out;
  };
  doc["c_int"] = rows(params.c_int);
  doc["c_base"] = rows(params.c_base);
  return doc;
}

}  // namespace

std::string group_report_json(const ExperimentConfig& config, const GroupResult& result,
                              bool include_timings) {
  nlohmann::json doc;
  doc["config"] = {
      {"cost_mode", to_string(config.cost_mode)},
      {"trials", config.trials},
      {"seed", config.seed},
      {"player_counts", config.player_counts},
      {"grid_sides", config.grid_sides},
      {"network_file", config.network_file},
      {"tolerance", config.solver.tolerance},
      {"c_int_interval", {config.intervals.c_int_low, config.intervals.c_int_high}},
      {"c_base_interval", {config.intervals.c_base_low, config.intervals.c_base_high}},
  };
  doc["completed"] = result.completed;
  doc["incomplete"] = result.incomplete;
  doc["records"] = nlohmann::json::array();
  for (const TrialRecord& r : result.records) {
    nlohmann::json rec = {
        {"group", r.group_label},
        {"trial", r.trial},
        {"complete", r.complete},
        {"flags", r.flags},
        {"io_objective", r.io_objective},
        {"flow_error", r.flow_error_value},
        {"normalized_flow_error", r.normalized_flow_error_value},
        {"c_gap_frobenius", r.c_gap_frobenius},
        {"c_base_gap_2norm", r.c_base_gap_2norm},
        {"unconverged_pairs", r.unconverged_pairs},
        {"min_eig_symmetric_part", r.spectral.min_eig_symmetric_part},
        {"is_positive_definite", r.spectral.is_positive_definite},
        {"lp_iterations", r.lp_iterations},
        {"true_params", params_to_json(r.true_params)},
        {"recovered_params", params_to_json(r.recovered_params)},
    };
    if (include_timings)
      rec["timings"] = {
          {"forward_true_seconds", r.timings.forward_true_seconds},
          {"lp_build_seconds", r.timings.lp_build_seconds},
          {"lp_solve_seconds", r.timings.lp_solve_seconds},
          {"forward_recovered_seconds", r.timings.forward_recovered_seconds},
          {"total_seconds", r.timings.total_seconds},
      };
    doc["records"].push_back(std::move(rec));
  }
  return doc.dump(2);
}

std::string summaries_csv(const GroupResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,group,q1,median,q3,whisker_low,whisker_high,outliers\n";
  for (const SummaryRow& row : result.summaries) {
    out << row.metric << "," << row.group_label << "," << row.stats.q1 << ","
        << row.stats.median << "," << row.stats.q3 << "," << row.stats.whisker_low << ","
        << row.stats.whisker_high << ",";
    for (size_t i = 0; i < row.stats.outliers.size(); ++i)
      out << (i ? ";" : "") << row.stats.outliers[i];
    out << "\n";
  }
  return out.str();
}

void write_group_report(const ExperimentConfig& config, const GroupResult& result) {
  if (config.output_directory.empty()) throw Error("output directory not set");
  std::filesystem::create_directories(config.output_directory);
  const std::string stem =
      config.output_directory + "/group_" + to_string(config.cost_mode);
  {
    std::ofstream out(stem + ".json");
    if (!out) throw Error("cannot write report JSON");
    out << group_report_json(config, result, true) << "\n";
  }
  {
    std::ofstream out(stem + "_summary.csv");
    if (!out) throw Error("cannot write summary CSV");
    out << summaries_csv(result);
  }
}

}  // namespace rgio
