#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stockrl/experiment.hpp"

namespace stockrl {

/// Bad invocation; reported with exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cli {

inline constexpr int kExitUsage = 2;

/// Relative output paths resolve under $STOCKRL_OUTPUT_DIR when it is set.
inline std::string output_path(const std::string& p) {
  const char* dir = std::getenv("STOCKRL_OUTPUT_DIR");
  std::filesystem::path out = p;
  if (dir && *dir && out.is_relative()) out = std::filesystem::path(dir) / out;
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  return out.string();
}

/// Options selecting the clusters an experiment runs on.
struct ClusterOptions {
  std::string config;
  std::string catalog;
  std::vector<std::int64_t> items;
  bool shared = false;
  std::optional<std::int64_t> capacity;
  std::vector<std::int64_t> init_levels;
  std::vector<double> weights;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
    app.add_option("--catalog", catalog, "Item catalog JSON (default: built-in 50 items)")->check(CLI::ExistingFile);
    app.add_option("--items", items, "Item ids (comma separated)")->delimiter(',');
    app.add_flag("--shared", shared, "Put the items in one cluster sharing storage");
    app.add_option("--capacity", capacity, "Storage capacity override")->check(CLI::PositiveNumber);
    app.add_option("--init-levels", init_levels, "Initial on-hand levels per item")->delimiter(',');
    app.add_option("--weights", weights, "Cost weights: order,hold,shortage")->delimiter(',')->expected(3);
    seed_opt = app.add_option("--seed", seed, "Root seed");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : experiment_from_json(read_json_file(config, "config"));
    if (!catalog.empty()) c.catalog = catalog;
    if (seed_opt && seed_opt->count()) c.seed = seed;
    if (!weights.empty()) c.cost_weights = {weights[0], weights[1], weights[2]};
    if (!items.empty()) {
      ClusterConfig k;
      for (std::size_t i = 0; i < items.size(); ++i) k.name += (i ? "+" : "") + std::to_string(items[i]);
      k.items = items;
      k.shared = shared;
      k.capacity = capacity;
      if (!init_levels.empty()) k.initial_levels = init_levels;
      c.clusters = {k};
    } else if (capacity || !init_levels.empty() || shared) {
      throw UsageError("--shared, --capacity and --init-levels need --items");
    }
    if (c.clusters.empty()) throw UsageError("no items selected (use --items or a config with clusters)");
    return c;
  }
};

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

inline void print_report(std::ostream& os, const EvalReport& r) {
  for (const auto& s : r.items)
    os << "  item " << s.id << "  " << r.policy << "  cost " << fmt(s.mean_cost) << " +/- " << fmt(s.std_cost)
       << "  shortages " << fmt(s.mean_shortages, 4) << '\n';
  os << "  cluster " << r.cluster << "  " << r.policy << "  cost " << fmt(r.cluster_stats.mean_cost)
     << "  shortages " << fmt(r.cluster_stats.mean_shortages, 4) << '\n';
}

inline void write_replication_logs(std::span<const EvalReport> reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(12)
      << "cluster,policy,replication,seed,item_id,cost,weighted_cost,shortages,cost_order,cost_hold,cost_short\n";
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.logs.size(); ++k) {
      const auto& l = r.logs[k];
      for (std::size_t i = 0; i < r.items.size(); ++i)
        out << r.cluster << ',' << r.policy << ',' << k << ',' << l.seed << ',' << r.items[i].id << ',' << l.cost[i]
            << ',' << l.weighted_cost[i] << ',' << l.shortages[i] << ',' << l.parts[i].order << ','
            << l.parts[i].hold << ',' << l.parts[i].shortage << '\n';
    }
}

// ---------------------------------------------------------------------------

struct FitCommand {
  std::string demands, leads, costs, out = "fitted.json";

  void add_to(CLI::App& app) {
    app.add_option("--demands", demands, "Demand history CSV (item_id,period,value)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--leads", leads, "Lead-time history CSV (item_id,order_id,lead_time)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--costs", costs, "Catalog supplying unit costs and volumes")->check(CLI::ExistingFile);
    app.add_option("--out", out, "Fitted catalog JSON");
  }

  int run(std::ostream& os) const {
    std::optional<ItemCatalog> cost_cat;
    if (!costs.empty()) cost_cat = load_catalog(costs);
    const auto fitted = fit_catalog(read_demand_history(demands), read_lead_history(leads),
                                    cost_cat ? &*cost_cat : nullptr);
    const auto path = output_path(out);
    save_catalog(fitted, path);
    for (const auto& r : fitted.records())
      os << "item " << r.id << "  b " << fmt(r.b) << "  mu " << fmt(r.mu) << "  p " << fmt(r.p) << '\n';
    os << "wrote " << path << '\n';
    return 0;
  }
};

struct EvalCommand {
  ClusterOptions clusters;
  std::string policy;
  int horizon = 240, reps = 100, threads = 1;
  double service_level = 0.90;
  bool units = false;
  std::string out = "report.csv", logs;
  CLI::Option *policy_opt = nullptr, *horizon_opt = nullptr, *reps_opt = nullptr, *sl_opt = nullptr;

  void add_to(CLI::App& app) {
    clusters.add_to(app);
    policy_opt = app.add_option("--policy", policy, "minmax, oracle or zero")
                     ->check(CLI::IsMember({"minmax", "oracle", "zero"}));
    horizon_opt = app.add_option("--horizon", horizon, "Periods per replication")->check(CLI::PositiveNumber);
    reps_opt = app.add_option("--reps", reps, "Replications")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sl_opt = app.add_option("--service-level", service_level, "MinMax service level")->check(CLI::Range(0.0, 1.0));
    app.add_flag("--units", units, "Count backlogged units instead of shortage periods");
    app.add_option("--out", out, "Report CSV");
    app.add_option("--logs", logs, "Optional per-replication CSV");
  }

  int run(std::ostream& os) const {
    ExperimentConfig c = clusters.resolve();
    if (policy_opt->count()) c.policy = policy;
    if (horizon_opt->count()) c.horizon = horizon;
    if (reps_opt->count()) c.replications = reps;
    if (sl_opt->count()) c.service_level = service_level;
    if (units) c.shortage_units = true;
    c.validate();
    const auto catalog = catalog_for(c);
    EvalOptions opt;
    opt.horizon = c.horizon;
    opt.replications = c.replications;
    opt.root_seed = c.seed;
    opt.threads = threads;
    opt.shortage_units = c.shortage_units;
    std::vector<EvalReport> reports;
    for (const auto& [name, spec] : named_clusters(c, catalog)) {
      auto r = evaluate(spec, baseline_policy(c.policy, spec, c.service_level), opt);
      r.cluster = name;
      r.config_hash = config_hash(c);
      print_report(os, r);
      reports.push_back(std::move(r));
    }
    const auto path = output_path(out.empty() ? c.output : out);
    export_report(reports, path);
    if (!logs.empty()) write_replication_logs(reports, output_path(logs));
    os << "wrote " << path << '\n';
    return 0;
  }
};

struct TrainCommand {
  ClusterOptions clusters;
  std::string preset_name;
  std::vector<std::string> sets;
  std::int64_t timesteps = 0;
  int threads = 1;
  bool average = false, verbose = false;
  std::string out;
  CLI::Option *preset_opt = nullptr, *ts_opt = nullptr;

  void add_to(CLI::App& app) {
    clusters.add_to(app);
    preset_opt = app.add_option("--preset", preset_name, "Training preset");
    app.add_option("--set", sets, "Override a training field: key=value (JSON value)");
    ts_opt = app.add_option("--timesteps", timesteps, "Environment steps")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "Rollout worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--average", average, "Train one agent on the average of unshared items");
    app.add_flag("--verbose", verbose, "Print every iteration");
    app.add_option("--out", out, "Run directory");
  }

  PpoConfig training_config(const ExperimentConfig& c) const {
    nlohmann::json overrides = c.training;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
      try {
        overrides[key] = nlohmann::json::parse(value);
      } catch (const nlohmann::json::parse_error&) {
        overrides[key] = value;
      }
    }
    PpoConfig cfg = config_from_json(overrides, preset(c.preset));
    if (ts_opt->count()) cfg.total_timesteps = timesteps;
    cfg.workers = threads;
    cfg.validate();
    return cfg;
  }

  int train_one(std::ostream& os, RunManifest run, const std::string& dir) const {
    std::vector<CurvePoint> curve;
    TrainHooks hooks;
    hooks.on_iteration = [&](const CurvePoint& p, const AgentSet&) {
      curve.push_back(p);
      if (verbose)
        os << "  iter " << p.iteration << "  steps " << p.timesteps << "  reward " << fmt(p.mean_reward)
           << "  kl " << fmt(p.kl, 3) << "  entropy " << fmt(p.entropy, 3) << '\n';
      return true;
    };
    try {
      const auto res = run.cluster.size() == 1 ? ppo_train_item(run.cluster, run.config, run.seed, hooks)
                                               : ippo_train(run.cluster, run.config, run.seed, hooks);
      run.agents = res.agents;
      run.reward_scale = res.reward_scale;
    } catch (const TrainingDiverged& e) {
      run.agents = e.last_good();
      run.timesteps = curve.empty() ? 0 : curve.back().timesteps;
      save_run(run, curve, dir);
      throw std::runtime_error(std::string(e.what()) + "; last finite parameters saved to " + dir);
    }
    run.timesteps = curve.empty() ? 0 : curve.back().timesteps;
    save_run(run, curve, dir);
    os << "  " << to_string(run.mode) << " run, " << run.timesteps << " steps, final reward "
       << (curve.empty() ? std::string("n/a") : fmt(curve.back().mean_reward)) << " -> " << dir << '\n';
    return 0;
  }

  int run(std::ostream& os) const {
    ExperimentConfig c = clusters.resolve();
    if (preset_opt->count()) c.preset = preset_name;
    c.validate();
    const PpoConfig cfg = training_config(c);
    const auto catalog = catalog_for(c);
    const std::string base =
        output_path(!out.empty() ? out : !c.output.empty() ? c.output : "runs/" + c.preset + "_s" + std::to_string(c.seed));

    std::vector<RunManifest> runs;
    std::vector<std::string> names;
    for (const auto& k : c.clusters) {
      if (average && !k.shared && k.items.size() > 1) {
        RunManifest run;
        run.mode = TrainMode::average;
        run.targets = catalog.items(k.items);
        run.cluster = ClusterSpec::make({average_item(run.targets)}, k.capacity, c.cost_weights);
        runs.push_back(std::move(run));
        names.push_back(k.name);
        continue;
      }
      for (auto& spec : build_clusters(k, catalog, c.cost_weights)) {
        RunManifest run;
        run.mode = spec.size() == 1 ? TrainMode::single : TrainMode::ippo;
        names.push_back(k.shared ? k.name : std::to_string(spec.items.front().id));
        run.cluster = std::move(spec);
        runs.push_back(std::move(run));
      }
    }
    for (std::size_t r = 0; r < runs.size(); ++r) {
      auto& run = runs[r];
      run.preset = c.preset;
      run.config = cfg;
      run.seed = c.seed;
      run.observe_space = observes_space(run.cluster, cfg);
      const std::string dir = runs.size() == 1 ? base : (std::filesystem::path(base) / names[r]).string();
      os << "training " << c.preset << " on " << names[r] << '\n';
      train_one(os, std::move(run), dir);
    }
    return 0;
  }
};

inline std::string manifest_in(const std::string& p) {
  return std::filesystem::is_directory(p) ? (std::filesystem::path(p) / "manifest.json").string() : p;
}

struct ReplayCommand {
  std::string run_path;
  int horizon = 240, reps = 100, threads = 1;
  std::uint64_t seed = 0;
  bool units = false;
  std::optional<std::int64_t> capacity;
  std::string out = "report.csv", logs;

  void add_to(CLI::App& app) {
    app.add_option("--run", run_path, "Run directory or manifest")->required()->check(CLI::ExistingPath);
    app.add_option("--horizon", horizon, "Periods per replication")->check(CLI::PositiveNumber);
    app.add_option("--reps", reps, "Replications")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Root seed");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--units", units, "Count backlogged units instead of shortage periods");
    app.add_option("--capacity", capacity, "Capacity of each target item (average runs)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Report CSV");
    app.add_option("--logs", logs, "Optional per-replication CSV");
  }

  int run(std::ostream& os) const {
    const auto manifest = manifest_in(run_path);
    if (!std::filesystem::exists(manifest)) throw UsageError("no manifest at '" + manifest + "'");
    const auto r = load_run(manifest);
    EvalOptions opt;
    opt.horizon = horizon;
    opt.replications = reps;
    opt.root_seed = seed;
    opt.threads = threads;
    opt.shortage_units = units;
    opt.observe_space = r.observe_space;
    std::vector<EvalReport> reports;
    for (const auto& [spec, policy] : replay_targets(r, capacity)) {
      auto rep = evaluate(spec, policy, opt);
      rep.cluster = spec.size() == 1 ? std::to_string(spec.items.front().id) : [&] {
        std::string n;
        for (std::size_t i = 0; i < spec.size(); ++i) n += (i ? "+" : "") + std::to_string(spec.items[i].id);
        return n;
      }();
      print_report(os, rep);
      reports.push_back(std::move(rep));
    }
    const auto path = output_path(out);
    export_report(reports, path);
    if (!logs.empty()) write_replication_logs(reports, output_path(logs));
    os << "wrote " << path << '\n';
    return 0;
  }
};

struct CurvesCommand {
  std::vector<std::string> runs, curves;
  ClusterOptions clusters;
  int reps = 100, horizon = 0;
  bool no_baselines = false;
  std::string out = "curves.csv";

  void add_to(CLI::App& app) {
    app.add_option("--run", runs, "Run directories or manifests")->check(CLI::ExistingPath);
    app.add_option("--curve", curves, "Raw curve CSVs")->check(CLI::ExistingFile);
    clusters.add_to(app);
    app.add_option("--reps", reps, "Baseline replications")->check(CLI::PositiveNumber);
    app.add_option("--horizon", horizon, "Baseline episode length (default: training horizon)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--no-baselines", no_baselines, "Skip the MinMax and Oracle lines");
    app.add_option("--out", out, "Plot-ready CSV");
  }

  int run(std::ostream& os) const {
    if (runs.empty() && curves.empty()) throw UsageError("curves needs at least one --run or --curve");
    std::vector<std::pair<std::string, std::vector<CurvePoint>>> series;
    std::optional<ClusterSpec> cluster;
    int train_horizon = 200;
    auto unique_name = [&](std::string n) {
      std::string cand = n;
      for (int k = 2; std::any_of(series.begin(), series.end(), [&](const auto& s) { return s.first == cand; }); ++k)
        cand = n + "_" + std::to_string(k);
      return cand;
    };
    for (const auto& r : runs) {
      const auto manifest = manifest_in(r);
      if (!std::filesystem::exists(manifest)) throw UsageError("no manifest at '" + manifest + "'");
      const auto run = load_run(manifest);
      std::vector<std::int64_t> ids;
      for (const auto& it : run.cluster.items) ids.push_back(it.id);
      if (cluster) {
        std::vector<std::int64_t> first;
        for (const auto& it : cluster->items) first.push_back(it.id);
        if (first != ids) throw UsageError("runs were trained on different clusters");
      } else {
        cluster = run.cluster;
        train_horizon = run.config.horizon;
      }
      const auto dir = std::filesystem::absolute(manifest).parent_path();
      series.emplace_back(unique_name(dir.filename().string()), read_curve((dir / run.curve_file).string()));
    }
    for (const auto& f : curves)
      series.emplace_back(unique_name(std::filesystem::path(f).stem().string()), read_curve(f));

    BaselineLines lines;
    if (!no_baselines) {
      if (!cluster && (!clusters.items.empty() || !clusters.config.empty())) {
        const auto c = clusters.resolve();
        const auto named = named_clusters(c, catalog_for(c));
        if (named.size() != 1) throw UsageError("baselines need exactly one cluster");
        cluster = named.front().second;
      }
      if (cluster) {
        const std::uint64_t seed = clusters.seed_opt->count() ? clusters.seed : 0;
        lines = baseline_reward_lines(*cluster, reps, seed, horizon > 0 ? horizon : train_horizon);
        for (const auto& l : lines.lines)
          os << "  " << l.policy << " mean step reward " << fmt(l.mean_reward) << "  normalized "
             << fmt(l.normalized, 4) << '\n';
      }
    }
    for (const auto& [name, curve] : series)
      if (!curve.empty())
        os << "  " << name << " final reward " << fmt(curve.back().mean_reward) << "  normalized "
           << fmt(lines.normalize(curve.back().mean_reward), 4) << '\n';
    const auto path = output_path(out);
    write_plot_csv(series, lines, path);
    os << "wrote " << path << '\n';
    return 0;
  }
};

}  // namespace cli

/// Command-line entry point; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Multi-item inventory control: baselines, PPO and independent PPO"};
  app.name("stockrl");
  app.require_subcommand(1);
  cli::FitCommand fit;
  cli::EvalCommand eval;
  cli::TrainCommand train;
  cli::ReplayCommand replay;
  cli::CurvesCommand curves;
  auto* fit_app = app.add_subcommand("fit", "Fit demand and lead-time models from history CSVs");
  auto* eval_app = app.add_subcommand("eval", "Evaluate a baseline policy over seeded replications");
  auto* train_app = app.add_subcommand("train", "Train PPO or independent PPO agents");
  auto* replay_app = app.add_subcommand("replay", "Evaluate a trained run");
  auto* curves_app = app.add_subcommand("curves", "Merge learning curves with baseline lines");
  fit.add_to(*fit_app);
  eval.add_to(*eval_app);
  train.add_to(*train_app);
  replay.add_to(*replay_app);
  curves.add_to(*curves_app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return cli::kExitUsage;
  }

  try {
    if (fit_app->parsed()) return fit.run(out);
    if (eval_app->parsed()) return eval.run(out);
    if (train_app->parsed()) return train.run(out);
    if (replay_app->parsed()) return replay.run(out);
    if (curves_app->parsed()) return curves.run(out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return cli::kExitUsage;
}

}  // namespace stockrl
