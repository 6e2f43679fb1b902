#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stockrl/catalog.hpp"
#include "stockrl/evaluate.hpp"
#include "stockrl/ippo.hpp"
#include "stockrl/presets.hpp"
#include "stockrl/stochastic.hpp"
#include "stockrl/trainer.hpp"

namespace stockrl {

// ---------------------------------------------------------------------------
// Experiment configuration

struct ClusterConfig {
  std::string name;
  std::vector<std::int64_t> items;
  /// Items share one storage area; otherwise each item gets its own.
  bool shared = true;
  std::optional<std::int64_t> capacity;
  std::optional<std::vector<std::int64_t>> initial_levels;
};

struct ExperimentConfig {
  std::string catalog;  // empty: built-in catalog
  std::vector<ClusterConfig> clusters;
  std::string policy = "minmax";
  std::string preset = "ppo_c";
  /// Field overrides applied on top of the preset.
  nlohmann::json training = nlohmann::json::object();
  int horizon = 240;
  int replications = 100;
  std::uint64_t seed = 0;
  CostWeights cost_weights;
  double service_level = 0.90;
  bool shortage_units = false;
  std::string output;

  void validate() const {
    if (horizon <= 0) throw ConfigError("horizon must be positive");
    if (replications <= 0) throw ConfigError("replications must be positive");
    if (!(service_level > 0.0 && service_level < 1.0)) throw ConfigError("service level must lie in (0,1)");
    cost_weights.validate();
    for (const auto& c : clusters)
      if (c.items.empty()) throw ConfigError("cluster '" + c.name + "' has no items");
  }
};

inline nlohmann::json to_json(const ClusterConfig& c) {
  nlohmann::json j{{"name", c.name}, {"items", c.items}, {"shared", c.shared}};
  j["capacity"] = c.capacity ? nlohmann::json(*c.capacity) : nlohmann::json(nullptr);
  j["initial_levels"] = c.initial_levels ? nlohmann::json(*c.initial_levels) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& k : c.clusters) clusters.push_back(to_json(k));
  return nlohmann::json{{"catalog", c.catalog},
                        {"clusters", clusters},
                        {"policy", c.policy},
                        {"preset", c.preset},
                        {"training", c.training},
                        {"horizon", c.horizon},
                        {"replications", c.replications},
                        {"seed", c.seed},
                        {"cost_weights", {c.cost_weights.order, c.cost_weights.hold, c.cost_weights.shortage}},
                        {"service_level", c.service_level},
                        {"shortage_units", c.shortage_units},
                        {"output", c.output}};
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("experiment config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "catalog") c.catalog = v.get<std::string>();
      else if (key == "policy") c.policy = v.get<std::string>();
      else if (key == "preset") c.preset = v.get<std::string>();
      else if (key == "training") c.training = v;
      else if (key == "horizon") c.horizon = v.get<int>();
      else if (key == "replications") c.replications = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "service_level") c.service_level = v.get<double>();
      else if (key == "shortage_units") c.shortage_units = v.get<bool>();
      else if (key == "output") c.output = v.get<std::string>();
      else if (key == "cost_weights") {
        const auto w = v.get<std::vector<double>>();
        if (w.size() != 3) throw ParseError("cost_weights needs three entries (order, hold, shortage)");
        c.cost_weights = {w[0], w[1], w[2]};
      } else if (key == "clusters") {
        if (!v.is_array()) throw ParseError("clusters must be an array");
        std::size_t idx = 0;
        for (const auto& kj : v) {
          ClusterConfig k;
          k.name = std::to_string(idx++);
          for (const auto& [ck, cv] : kj.items()) {
            if (ck == "name") k.name = cv.get<std::string>();
            else if (ck == "items") k.items = cv.get<std::vector<std::int64_t>>();
            else if (ck == "shared") k.shared = cv.get<bool>();
            else if (ck == "capacity") {
              if (!cv.is_null()) k.capacity = cv.get<std::int64_t>();
            } else if (ck == "initial_levels") {
              if (!cv.is_null()) k.initial_levels = cv.get<std::vector<std::int64_t>>();
            } else {
              throw ParseError("unknown cluster field '" + ck + "'");
            }
          }
          c.clusters.push_back(std::move(k));
        }
      } else {
        throw ParseError("unknown config field '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("config field '" + key + "': " + e.what());
    }
  }
  return c;
}

inline nlohmann::json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string("cannot open ") + what + " '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string(what) + " '" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("error writing '" + path + "'");
}

/// FNV-1a over the canonical JSON form.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) h = (h ^ ch) * 0x100000001b3ULL;
  return h;
}

inline ItemCatalog catalog_for(const ExperimentConfig& c) {
  return c.catalog.empty() ? builtin_catalog() : load_catalog(c.catalog);
}

/// Cluster specs of one cluster definition: one shared cluster, or one
/// single-item cluster per item.
inline std::vector<ClusterSpec> build_clusters(const ClusterConfig& k, const ItemCatalog& catalog,
                                               const CostWeights& weights) {
  std::vector<ClusterSpec> out;
  if (k.shared) {
    auto spec = ClusterSpec::make(catalog.items(k.items), k.capacity, weights);
    if (k.initial_levels) {
      if (k.initial_levels->size() != k.items.size())
        throw ConfigError("cluster '" + k.name + "': initial_levels needs one entry per item");
      spec.initial_levels = *k.initial_levels;
    }
    spec.validate();
    out.push_back(std::move(spec));
    return out;
  }
  for (std::size_t i = 0; i < k.items.size(); ++i) {
    auto spec = ClusterSpec::make({catalog.item(k.items[i])}, k.capacity, weights);
    if (k.initial_levels) {
      if (k.initial_levels->size() != k.items.size())
        throw ConfigError("cluster '" + k.name + "': initial_levels needs one entry per item");
      spec.initial_levels = std::vector<std::int64_t>{(*k.initial_levels)[i]};
    }
    spec.validate();
    out.push_back(std::move(spec));
  }
  return out;
}

/// Every cluster of the config with a display name. Shared clusters keep
/// their name; unshared ones are split into one cluster per item named by id.
inline std::vector<std::pair<std::string, ClusterSpec>> named_clusters(const ExperimentConfig& c,
                                                                       const ItemCatalog& catalog) {
  std::vector<std::pair<std::string, ClusterSpec>> out;
  for (const auto& k : c.clusters) {
    auto specs = build_clusters(k, catalog, c.cost_weights);
    for (auto& s : specs) {
      std::string name = k.shared ? k.name : std::to_string(s.items.front().id);
      out.emplace_back(std::move(name), std::move(s));
    }
  }
  return out;
}

inline PolicySet baseline_policy(const std::string& name, const ClusterSpec& cluster, double service_level) {
  if (name == "minmax") return minmax_policy(cluster, service_level);
  if (name == "oracle") return oracle_policy(cluster);
  if (name == "zero") return zero_order_policy(cluster);
  throw ConfigError("unknown policy '" + name + "' (expected minmax, oracle or zero)");
}

/// Virtual product whose parameters and costs are the means over `items`.
inline ItemSpec average_item(const std::vector<ItemSpec>& items) {
  if (items.empty()) throw ConfigError("average item needs at least one item");
  ItemSpec a{-1, DemandModel{0, 0}, LeadTimeModel{0}, 0, 0, 0, 0};
  const double n = static_cast<double>(items.size());
  for (const auto& it : items) {
    a.demand.b += it.demand.b / n;
    a.demand.mu += it.demand.mu / n;
    a.lead.p += it.lead.p / n;
    a.cost_order += it.cost_order / n;
    a.cost_hold += it.cost_hold / n;
    a.cost_short += it.cost_short / n;
    a.volume += it.volume / n;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Historical data

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::int64_t parse_int_cell(const std::string& s, const std::string& path, std::size_t line,
                                   const std::string& column) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw ParseError(path + ":" + std::to_string(line) + ": column '" + column + "' is not an integer: '" + s + "'");
  return v;
}

/// Reads a three-column integer CSV with the given header into
/// item -> (key, value) pairs sorted by key.
inline std::map<std::int64_t, std::vector<std::int64_t>> read_keyed_series(const std::string& path,
                                                                           const std::array<std::string, 3>& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open history '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto cols = split_csv_line(line);
  if (cols.size() != 3 || cols[0] != header[0] || cols[1] != header[1] || cols[2] != header[2])
    throw ParseError(path + ": expected header '" + header[0] + "," + header[1] + "," + header[2] + "'");
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, std::int64_t>>> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw ParseError(path + ":" + std::to_string(n) + ": expected 3 columns");
    const auto id = parse_int_cell(cells[0], path, n, header[0]);
    const auto key = parse_int_cell(cells[1], path, n, header[1]);
    const auto val = parse_int_cell(cells[2], path, n, header[2]);
    rows[id].emplace_back(key, val);
  }
  std::map<std::int64_t, std::vector<std::int64_t>> out;
  for (auto& [id, kv] : rows) {
    std::stable_sort(kv.begin(), kv.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 1; k < kv.size(); ++k)
      if (kv[k].first == kv[k - 1].first)
        throw ParseError(path + ": item " + std::to_string(id) + " repeats " + header[1] + " " +
                         std::to_string(kv[k].first));
    for (const auto& [k, v] : kv) out[id].push_back(v);
  }
  return out;
}

}  // namespace detail

/// Demand histories: CSV `item_id,period,value`.
inline std::map<std::int64_t, HistorySeries> read_demand_history(const std::string& path) {
  std::map<std::int64_t, HistorySeries> out;
  for (auto& [id, v] : detail::read_keyed_series(path, {"item_id", "period", "value"}))
    out[id] = HistorySeries{std::move(v), HistoryKind::demand};
  return out;
}

/// Lead-time histories: CSV `item_id,order_id,lead_time`.
inline std::map<std::int64_t, HistorySeries> read_lead_history(const std::string& path) {
  std::map<std::int64_t, HistorySeries> out;
  for (auto& [id, v] : detail::read_keyed_series(path, {"item_id", "order_id", "lead_time"}))
    out[id] = HistorySeries{std::move(v), HistoryKind::lead_time};
  return out;
}

/// Fits every item present in both histories. Unit costs and volumes come
/// from `costs` when it lists the item, otherwise they are zero (volume 1).
inline ItemCatalog fit_catalog(const std::map<std::int64_t, HistorySeries>& demands,
                               const std::map<std::int64_t, HistorySeries>& leads,
                               const ItemCatalog* costs = nullptr) {
  std::vector<CatalogRecord> recs;
  for (const auto& [id, d] : demands) {
    const auto it = leads.find(id);
    if (it == leads.end()) throw ParseError("item " + std::to_string(id) + " has demand but no lead-time history");
    CatalogRecord r;
    r.id = id;
    try {
      const auto dm = fit_demand_mle(d);
      const auto lm = fit_lead_time_mle(it->second);
      r.b = dm.b;
      r.mu = dm.mu;
      r.p = lm.p;
    } catch (const std::invalid_argument& e) {
      throw ParseError("item " + std::to_string(id) + ": " + e.what());
    }
    if (costs) {
      for (const auto& c : costs->records())
        if (c.id == id) {
          r.cost_order = c.cost_order;
          r.cost_hold = c.cost_hold;
          r.cost_short = c.cost_short;
          r.volume = c.volume;
        }
    }
    recs.push_back(r);
  }
  for (const auto& [id, l] : leads)
    if (!demands.count(id)) throw ParseError("item " + std::to_string(id) + " has lead-time but no demand history");
  return ItemCatalog(std::move(recs));
}

// ---------------------------------------------------------------------------
// Checkpoints and learning curves

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const Architecture& a) {
  return nlohmann::json{{"input_dim", a.input_dim},
                        {"hidden", a.hidden},
                        {"head", to_string(a.head)},
                        {"num_actions", a.num_actions},
                        {"share_layers", a.share_layers},
                        {"activation", nn::to_string(a.activation)}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.head = head_from_string(j.at("head").get<std::string>());
  a.num_actions = j.at("num_actions").get<int>();
  a.share_layers = j.at("share_layers").get<bool>();
  a.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  return a;
}

inline nlohmann::json checkpoint_json(const Agent& agent, std::size_t index) {
  std::vector<double> theta(agent.params.theta.data(), agent.params.theta.data() + agent.params.theta.size());
  return nlohmann::json{{"format", "stockrl-checkpoint"},
                        {"version", kCheckpointVersion},
                        {"agent", index},
                        {"architecture", to_json(agent.params.arch)},
                        {"action_map", {{"bound", agent.map.bound}, {"stride", agent.map.stride}}},
                        {"kl_coeff", agent.kl_coeff},
                        {"theta", theta}};
}

inline Agent agent_from_checkpoint(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "stockrl-checkpoint") throw ParseError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ParseError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    Agent a;
    a.params.arch = architecture_from_json(j.at("architecture"));
    const auto theta = j.at("theta").get<std::vector<double>>();
    const ActorCritic net(a.params.arch);
    if (theta.size() != net.param_count())
      throw ParseError("checkpoint has " + std::to_string(theta.size()) + " parameters, architecture needs " +
                       std::to_string(net.param_count()));
    a.params.theta = Eigen::Map<const nn::Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    if (!a.params.finite()) throw ParseError("checkpoint parameters are not finite");
    a.map.bound = j.at("action_map").at("bound").get<std::int64_t>();
    a.map.stride = j.at("action_map").at("stride").get<std::int64_t>();
    a.kl_coeff = j.at("kl_coeff").get<double>();
    a.adam = AdamState(a.params.theta.size());
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

inline constexpr const char* kCurveHeader = "iteration,timesteps,mean_reward,std_reward,kl,entropy";

inline void write_curve(const std::vector<CurvePoint>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curve '" + path + "'");
  out << std::setprecision(12) << kCurveHeader << '\n';
  for (const auto& p : curve)
    out << p.iteration << ',' << p.timesteps << ',' << p.mean_reward << ',' << p.std_reward << ',' << p.kl << ','
        << p.entropy << '\n';
}

inline std::vector<CurvePoint> read_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.substr(0, line.find_last_not_of("\r") + 1) != kCurveHeader)
    throw ParseError(path + ": expected header '" + std::string(kCurveHeader) + "'");
  std::vector<CurvePoint> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 6) throw ParseError(path + ":" + std::to_string(n) + ": expected 6 columns");
    try {
      out.push_back({std::stoi(c[0]), std::stoll(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4]),
                     std::stod(c[5])});
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(n) + ": malformed number");
    }
  }
  return out;
}

/// Training modes recorded in a run manifest.
enum class TrainMode { single, ippo, average };

inline std::string to_string(TrainMode m) {
  return m == TrainMode::single ? "single" : m == TrainMode::ippo ? "ippo" : "average";
}
inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "single") return TrainMode::single;
  if (s == "ippo") return TrainMode::ippo;
  if (s == "average") return TrainMode::average;
  throw ParseError("unknown training mode '" + s + "'");
}

inline nlohmann::json to_json(const ItemSpec& it) {
  return to_json(CatalogRecord{it.id, it.demand.b, it.demand.mu, it.lead.p, it.cost_order, it.cost_hold,
                               it.cost_short, it.volume});
}

/// A trained run: the cluster it was trained on, the evaluation targets
/// and one checkpoint per learner.
struct RunManifest {
  TrainMode mode = TrainMode::single;
  std::string preset;
  PpoConfig config;
  /// Training environment (the virtual item in average mode).
  ClusterSpec cluster;
  /// Items the agents are evaluated on in average mode.
  std::vector<ItemSpec> targets;
  bool observe_space = false;
  std::uint64_t seed = 0;
  double reward_scale = 1.0;
  std::int64_t timesteps = 0;
  AgentSet agents;
  std::string curve_file = "curve.csv";
};

inline nlohmann::json cluster_json(const ClusterSpec& c) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : c.items) items.push_back(to_json(it));
  nlohmann::json j{{"items", items},
                   {"capacity", c.capacity},
                   {"item_capacity", c.item_capacity},
                   {"cost_weights", {c.cost_weights.order, c.cost_weights.hold, c.cost_weights.shortage}}};
  j["initial_levels"] = c.initial_levels ? nlohmann::json(*c.initial_levels) : nlohmann::json(nullptr);
  return j;
}

inline ClusterSpec cluster_from_json(const nlohmann::json& j) {
  ClusterSpec c;
  c.items = catalog_from_json(j.at("items")).items([&] {
    std::vector<std::int64_t> ids;
    for (const auto& it : j.at("items")) ids.push_back(it.at("id").get<std::int64_t>());
    return ids;
  }());
  c.capacity = j.at("capacity").get<std::int64_t>();
  c.item_capacity = j.at("item_capacity").get<std::vector<std::int64_t>>();
  const auto w = j.at("cost_weights").get<std::vector<double>>();
  if (w.size() != 3) throw ParseError("cost_weights needs three entries");
  c.cost_weights = {w[0], w[1], w[2]};
  if (j.contains("initial_levels") && !j.at("initial_levels").is_null())
    c.initial_levels = j.at("initial_levels").get<std::vector<std::int64_t>>();
  c.validate();
  return c;
}

/// Writes `manifest.json`, one `agent_<k>.json` per learner and the curve.
inline void save_run(const RunManifest& run, const std::vector<CurvePoint>& curve, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t k = 0; k < run.agents.learners.size(); ++k) {
    const std::string name = "agent_" + std::to_string(k) + ".json";
    write_json_file((std::filesystem::path(dir) / name).string(), checkpoint_json(run.agents.learners[k], k));
    files.push_back(name);
  }
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : run.targets) targets.push_back(to_json(t));
  const nlohmann::json m{{"format", "stockrl-manifest"},
                         {"version", kCheckpointVersion},
                         {"mode", to_string(run.mode)},
                         {"preset", run.preset},
                         {"config", to_json(run.config)},
                         {"cluster", cluster_json(run.cluster)},
                         {"targets", targets},
                         {"observe_space", run.observe_space},
                         {"seed", run.seed},
                         {"reward_scale", run.reward_scale},
                         {"timesteps", run.timesteps},
                         {"num_agents", run.agents.num_agents},
                         {"shared_policy", run.agents.shared},
                         {"agents", files},
                         {"curve", run.curve_file}};
  write_json_file((std::filesystem::path(dir) / "manifest.json").string(), m);
  write_curve(curve, (std::filesystem::path(dir) / run.curve_file).string());
}

/// Loads a manifest and its checkpoints; relative files resolve next to it.
inline RunManifest load_run(const std::string& manifest_path) {
  const auto j = read_json_file(manifest_path, "manifest");
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  RunManifest run;
  try {
    if (j.at("format").get<std::string>() != "stockrl-manifest") throw ParseError("not a run manifest");
    if (j.at("version").get<int>() != kCheckpointVersion) throw ParseError("unsupported manifest version");
    run.mode = train_mode_from_string(j.at("mode").get<std::string>());
    run.preset = j.at("preset").get<std::string>();
    run.config = config_from_json(j.at("config"));
    run.cluster = cluster_from_json(j.at("cluster"));
    for (const auto& t : j.at("targets")) run.targets.push_back(catalog_from_json(nlohmann::json::array({t})).records()[0].to_item());
    run.observe_space = j.at("observe_space").get<bool>();
    run.seed = j.at("seed").get<std::uint64_t>();
    run.reward_scale = j.at("reward_scale").get<double>();
    run.timesteps = j.at("timesteps").get<std::int64_t>();
    run.agents.num_agents = j.at("num_agents").get<std::size_t>();
    run.agents.shared = j.at("shared_policy").get<bool>();
    run.curve_file = j.at("curve").get<std::string>();
    for (const auto& f : j.at("agents"))
      run.agents.learners.push_back(
          agent_from_checkpoint(read_json_file((dir / f.get<std::string>()).string(), "checkpoint")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + manifest_path + "': " + e.what());
  }
  const std::size_t expect = run.agents.shared ? 1 : run.agents.num_agents;
  if (run.agents.learners.size() != expect || run.agents.num_agents != run.cluster.size())
    throw ParseError("manifest '" + manifest_path + "': agent count does not match the cluster");
  return run;
}

/// Clusters a trained run is evaluated on, each paired with the learned policy.
inline std::vector<std::pair<ClusterSpec, PolicySet>> replay_targets(const RunManifest& run,
                                                                     const std::optional<std::int64_t>& capacity = {}) {
  std::vector<std::pair<ClusterSpec, PolicySet>> out;
  if (run.mode != TrainMode::average) {
    out.emplace_back(run.cluster, learned_policy(run.agents, "ppo"));
    return out;
  }
  for (const auto& item : run.targets) {
    auto spec = ClusterSpec::make({item}, capacity, run.cluster.cost_weights);
    AgentSet set = run.agents;
    // The normalized action maps onto each target's own capacity.
    Agent& a = set.learners[0];
    a.map.bound = spec.item_capacity[0];
    if (a.params.arch.head == HeadKind::discrete)
      a.map.stride = std::max<std::int64_t>(1, (a.map.bound + a.params.arch.num_actions - 2) /
                                                   (a.params.arch.num_actions - 1));
    out.emplace_back(spec, learned_policy(std::move(set), "ppo"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plot-ready curves

inline constexpr const char* kPlotHeader = "series,iteration,timesteps,mean_reward,std_reward,normalized_reward";

/// Long-format CSV: every run's curve, the across-run mean curve (std over
/// runs) and one flat line per baseline spanning the run's timesteps.
inline void write_plot_csv(const std::vector<std::pair<std::string, std::vector<CurvePoint>>>& runs,
                           const BaselineLines& lines, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(12) << kPlotHeader << '\n';
  std::int64_t t_min = 0, t_max = 0;
  std::size_t len = runs.empty() ? 0 : runs.front().second.size();
  for (const auto& [name, curve] : runs) {
    for (const auto& p : curve)
      out << name << ',' << p.iteration << ',' << p.timesteps << ',' << p.mean_reward << ',' << p.std_reward << ','
          << lines.normalize(p.mean_reward) << '\n';
    len = std::min(len, curve.size());
    if (!curve.empty()) {
      t_min = t_min == 0 ? curve.front().timesteps : std::min(t_min, curve.front().timesteps);
      t_max = std::max(t_max, curve.back().timesteps);
    }
  }
  if (runs.size() > 1) {
    for (std::size_t k = 0; k < len; ++k) {
      std::vector<double> xs;
      for (const auto& r : runs) xs.push_back(r.second[k].mean_reward);
      const auto [m, s] = detail::mean_std(xs);
      const auto& p = runs.front().second[k];
      out << "mean," << p.iteration << ',' << p.timesteps << ',' << m << ',' << s << ',' << lines.normalize(m) << '\n';
    }
  }
  for (const auto& l : lines.lines)
    for (auto t : {t_min, t_max})
      out << l.policy << ",," << t << ',' << l.mean_reward << ",0," << l.normalized << '\n';
}

}  // namespace stockrl
