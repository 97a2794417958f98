#include "koopmpc/config.hpp"

#include <functional>
#include <map>

#include <yaml-cpp/yaml.h>

#include "koopmpc/io.hpp"

namespace koopmpc {

namespace {

using Setter = std::function<void(ExperimentConfig&, const YAML::Node&)>;

[[noreturn]] void fail(const std::string& source, const std::string& key, const YAML::Node& node,
                       const std::string& msg) {
  throw Error(ErrorKind::Parse, source + ":" + std::to_string(node.Mark().line + 1) + ": key '" + key + "': " + msg);
}

template <class T>
T scalar(const std::string& source, const std::string& key, const YAML::Node& node, const char* what) {
  if (!node.IsScalar()) fail(source, key, node, std::string("expected ") + what);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(source, key, node, std::string("expected ") + what + ", got '" + node.Scalar() + "'");
  }
}

std::vector<double> numbers(const std::string& source, const std::string& key, const YAML::Node& node) {
  if (!node.IsSequence()) fail(source, key, node, "expected a list of numbers");
  std::vector<double> out;
  for (const auto& item : node) out.push_back(scalar<double>(source, key, item, "number"));
  return out;
}

// [lo, hi] applies to both coordinates; [[lo1, hi1], [lo2, hi2]] per coordinate.
Box box_from(const std::string& source, const std::string& key, const YAML::Node& node) {
  if (!node.IsSequence() || node.size() == 0) fail(source, key, node, "expected [lo, hi] or [[lo, hi], ...]");
  Box b;
  if (node[0].IsSequence()) {
    const auto n = static_cast<Eigen::Index>(node.size());
    b.lo.resize(n);
    b.hi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto v = numbers(source, key, node[static_cast<std::size_t>(i)]);
      if (v.size() != 2) fail(source, key, node, "each range needs exactly two numbers");
      b.lo(i) = v[0];
      b.hi(i) = v[1];
    }
  } else {
    const auto v = numbers(source, key, node);
    if (v.size() != 2) fail(source, key, node, "expected [lo, hi]");
    b.lo = Vec::Constant(2, v[0]);
    b.hi = Vec::Constant(2, v[1]);
  }
  return b;
}

Vec vec_from(const std::string& source, const std::string& key, const YAML::Node& node) {
  const auto v = numbers(source, key, node);
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::map<std::string, Setter> setters(const std::string& src) {
  std::map<std::string, Setter> m;
  auto add_num = [&](const std::string& key, auto setter) {
    m[key] = [src, key, setter](ExperimentConfig& c, const YAML::Node& n) { setter(c, scalar<double>(src, key, n, "number")); };
  };
  auto add_count = [&](const std::string& key, auto setter) {
    m[key] = [src, key, setter](ExperimentConfig& c, const YAML::Node& n) {
      const auto v = scalar<long long>(src, key, n, "non-negative integer");
      if (v < 0) fail(src, key, n, "must be non-negative");
      setter(c, static_cast<std::size_t>(v));
    };
  };
  auto add_box = [&](const std::string& key, Box ExperimentConfig::*field) {
    m[key] = [src, key, field](ExperimentConfig& c, const YAML::Node& n) { c.*field = box_from(src, key, n); };
  };

  m["plant"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    c.plant = scalar<std::string>(src, "plant", n, "string");
    if (c.plant != "vanderpol" && c.plant != "zero") fail(src, "plant", n, "expected vanderpol or zero");
  };
  add_num("mu", [](ExperimentConfig& c, double v) { c.mu = v; });
  add_count("n_traj", [](ExperimentConfig& c, std::size_t v) { c.n_traj = v; });
  add_box("train_box", &ExperimentConfig::train_box);
  add_num("t_train", [](ExperimentConfig& c, double v) { c.t_train = v; });
  add_num("dt", [](ExperimentConfig& c, double v) { c.dt = v; });
  add_num("forcing_amplitude", [](ExperimentConfig& c, double v) { c.forcing_amplitude = v; });
  add_num("omega_sigma", [](ExperimentConfig& c, double v) { c.omega_sigma = v; });
  m["seed"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    c.seed = scalar<std::uint64_t>(src, "seed", n, "non-negative integer");
  };
  add_num("svd_tol", [](ExperimentConfig& c, double v) { c.svd_tol = v; });
  add_count("edmdc_order", [](ExperimentConfig& c, std::size_t v) { c.edmdc_order = v; });
  m["edmdc_constant"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    c.edmdc_constant = scalar<bool>(src, "edmdc_constant", n, "boolean");
  };
  add_count("delay_depth", [](ExperimentConfig& c, std::size_t v) { c.delay_depth = v; });
  m["validation_forcing"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    c.validation_forcing = scalar<std::string>(src, "validation_forcing", n, "string");
    if (c.validation_forcing != "same" && c.validation_forcing != "zero") fail(src, "validation_forcing", n, "expected same or zero");
  };
  m["delay_embed"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    c.delay_embed = scalar<std::string>(src, "delay_embed", n, "string");
    if (c.delay_embed != "full" && c.delay_embed != "x1") fail(src, "delay_embed", n, "expected full or x1");
  };
  add_count("horizon", [](ExperimentConfig& c, std::size_t v) { c.mpc.horizon = v; });
  m["q_diag"] = [src](ExperimentConfig& c, const YAML::Node& n) { c.mpc.q = vec_from(src, "q_diag", n).asDiagonal(); };
  m["terminal_weight_diag"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    if (n.IsNull()) {
      c.mpc.terminal_weight.reset();
    } else {
      c.mpc.terminal_weight = Mat(vec_from(src, "terminal_weight_diag", n).asDiagonal());
    }
  };
  add_num("ru", [](ExperimentConfig& c, double v) { c.mpc.ru = v; });
  add_num("rdu", [](ExperimentConfig& c, double v) { c.mpc.rdu = v; });
  add_num("u_min", [](ExperimentConfig& c, double v) { c.mpc.u_min = v; });
  add_num("u_max", [](ExperimentConfig& c, double v) { c.mpc.u_max = v; });
  add_num("du_min", [](ExperimentConfig& c, double v) { c.mpc.du_min = v; });
  add_num("du_max", [](ExperimentConfig& c, double v) { c.mpc.du_max = v; });
  m["reference"] = [src](ExperimentConfig& c, const YAML::Node& n) { c.mpc.reference = vec_from(src, "reference", n); };
  add_count("n_validation", [](ExperimentConfig& c, std::size_t v) { c.n_validation = v; });
  add_box("validation_box", &ExperimentConfig::validation_box);
  add_num("t_validation", [](ExperimentConfig& c, double v) { c.t_validation = v; });
  add_count("rollout_steps", [](ExperimentConfig& c, std::size_t v) { c.rollout_steps = v; });
  add_num("t_closed_loop", [](ExperimentConfig& c, double v) { c.t_closed_loop = v; });
  add_num("success_threshold", [](ExperimentConfig& c, double v) { c.success_threshold = v; });
  add_count("grid_n", [](ExperimentConfig& c, std::size_t v) { c.grid_n = v; });
  add_box("grid_box", &ExperimentConfig::grid_box);
  add_num("band_width", [](ExperimentConfig& c, double v) { c.band_width = v; });
  add_count("export_runs", [](ExperimentConfig& c, std::size_t v) { c.export_runs = v; });
  add_box("ulam_box", &ExperimentConfig::ulam_box);
  m["ulam_counts"] = [src](ExperimentConfig& c, const YAML::Node& n) {
    c.ulam_counts.clear();
    for (double v : numbers(src, "ulam_counts", n)) {
      if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) fail(src, "ulam_counts", n, "counts must be positive integers");
      c.ulam_counts.push_back(static_cast<std::size_t>(v));
    }
  };
  m["ulam_levels"] = [src](ExperimentConfig& c, const YAML::Node& n) { c.ulam_levels = numbers(src, "ulam_levels", n); };
  add_num("ulam_tau", [](ExperimentConfig& c, double v) { c.ulam_tau = v; });
  add_count("ulam_samples", [](ExperimentConfig& c, std::size_t v) { c.ulam_samples = v; });
  return m;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : setters("")) keys.push_back(k);
  return keys;
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::InvalidInput, "config: " + msg); };
  if (!(dt > 0.0)) bad("dt must be positive");
  if (n_traj == 0) bad("n_traj must be at least 1");
  if (!(t_train >= dt * (1.0 - 1e-9))) bad("t_train must cover at least one step");
  if (!(t_validation > 0.0) || !(t_closed_loop > 0.0)) bad("durations must be positive");
  if (edmdc_order == 0) bad("edmdc_order must be at least 1");
  if (delay_depth == 0) bad("delay_depth must be at least 1");
  if (grid_n == 0) bad("grid_n must be at least 1");
  if (!(band_width > 0.0)) bad("band_width must be positive");
  if (!(success_threshold > 0.0)) bad("success_threshold must be positive");
  for (const Box* b : {&train_box, &validation_box, &grid_box, &ulam_box}) {
    if (b->lo.size() != 2 || b->hi.size() != 2 || !(b->hi.array() >= b->lo.array()).all()) {
      bad("boxes must be two-dimensional with lo <= hi");
    }
  }
  if (ulam_counts.size() != 2) bad("ulam_counts needs one count per state coordinate");
  if (ulam_levels.empty()) bad("ulam_levels must not be empty");
  if (!(ulam_tau > 0.0) || ulam_samples == 0) bad("ulam_tau and ulam_samples must be positive");
  if (mpc.q.rows() != 2) bad("q_diag needs two entries");
  mpc.validate();
  const auto steps = step_count(t_validation, dt);
  if (delay_depth + rollout_steps > steps + 1) bad("validation trajectories are too short for the delay depth plus the rollout horizon");
}

ControlSystem ExperimentConfig::make_plant() const {
  return plant == "zero" ? make_zero_system(2, 1) : make_vanderpol(mu);
}

TrainingSpec ExperimentConfig::training_spec(std::size_t parallel) const {
  TrainingSpec s;
  s.n_traj = n_traj;
  s.box = train_box;
  s.t_end = t_train;
  s.dt = dt;
  s.forcing.amplitude = forcing_amplitude;
  s.forcing.omega_sigma = omega_sigma;
  s.seed = derive_seed(seed, 1);
  s.parallel = parallel;
  return s;
}

TrainingSpec ExperimentConfig::validation_spec(std::size_t parallel) const {
  TrainingSpec s = training_spec(parallel);
  s.n_traj = n_validation;
  s.box = validation_box;
  s.t_end = t_validation;
  s.seed = derive_seed(seed, 2);
  if (validation_forcing == "zero") s.forcing.kind = ForcingFamily::Kind::Zero;
  return s;
}

nlohmann::json ExperimentConfig::to_json() const {
  using io::vector_to_json;
  auto box = [](const Box& b) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.lo.size(); ++i) j.push_back({b.lo(i), b.hi(i)});
    return j;
  };
  nlohmann::json j;
  j["plant"] = plant;
  j["mu"] = mu;
  j["n_traj"] = n_traj;
  j["train_box"] = box(train_box);
  j["t_train"] = t_train;
  j["dt"] = dt;
  j["forcing_amplitude"] = forcing_amplitude;
  j["omega_sigma"] = omega_sigma;
  j["seed"] = seed;
  j["svd_tol"] = svd_tol;
  j["edmdc_order"] = edmdc_order;
  j["edmdc_constant"] = edmdc_constant;
  j["delay_depth"] = delay_depth;
  j["delay_embed"] = delay_embed;
  j["validation_forcing"] = validation_forcing;
  j["horizon"] = mpc.horizon;
  j["q_diag"] = vector_to_json(mpc.q.diagonal());
  j["terminal_weight_diag"] = mpc.terminal_weight ? vector_to_json(mpc.terminal_weight->diagonal()) : nlohmann::json(nullptr);
  j["ru"] = mpc.ru;
  j["rdu"] = mpc.rdu;
  j["u_min"] = mpc.u_min;
  j["u_max"] = mpc.u_max;
  j["du_min"] = mpc.du_min;
  j["du_max"] = mpc.du_max;
  j["reference"] = vector_to_json(mpc.reference);
  j["n_validation"] = n_validation;
  j["validation_box"] = box(validation_box);
  j["t_validation"] = t_validation;
  j["rollout_steps"] = rollout_steps;
  j["t_closed_loop"] = t_closed_loop;
  j["success_threshold"] = success_threshold;
  j["grid_n"] = grid_n;
  j["grid_box"] = box(grid_box);
  j["band_width"] = band_width;
  j["export_runs"] = export_runs;
  j["ulam_box"] = box(ulam_box);
  j["ulam_counts"] = ulam_counts;
  j["ulam_levels"] = ulam_levels;
  j["ulam_tau"] = ulam_tau;
  j["ulam_samples"] = ulam_samples;
  return j;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorKind::Parse, source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  ExperimentConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw Error(ErrorKind::Parse, source + ": expected a mapping of key: value");
  const auto table = setters(source);
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = table.find(key);
    if (it == table.end()) {
      throw Error(ErrorKind::Parse, source + ":" + std::to_string(kv.first.Mark().line + 1) + ": unknown key '" + key + "'");
    }
    it->second(cfg, kv.second);
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  return parse_config_text(io::read_text(path), path);
}

}  // namespace koopmpc
