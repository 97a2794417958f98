// koopmpc command line: data generation, fitting, prediction, closed-loop MPC,
// Ulam transfer operators and the full benchmark.
//
// Exit codes: 0 success, 2 usage or config error, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koopmpc/bench.hpp"
#include "koopmpc/config.hpp"
#include "koopmpc/io.hpp"
#include "koopmpc/transfer.hpp"

namespace fs = std::filesystem;
using namespace koopmpc;
using nlohmann::json;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string seed;
  std::string out = "out";
  std::size_t parallel = 1;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto num = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("--seed expects INT or A..B, got '" + text + "'");
    }
    return static_cast<std::uint64_t>(std::stoull(s));
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) return {num(text)};
  const auto a = num(text.substr(0, dots));
  const auto b = num(text.substr(dots + 2));
  if (b < a) throw UsageError("--seed range must be increasing");
  std::vector<std::uint64_t> out;
  for (auto s = a; s <= b; ++s) out.push_back(s);
  return out;
}

ExperimentConfig load(const Common& c, bool allow_range = false) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : parse_config(c.config);
  if (!c.seed.empty()) {
    const auto seeds = parse_seeds(c.seed);
    if (seeds.size() != 1 && !allow_range) throw UsageError("seed ranges are only supported by 'benchmark'");
    cfg.seed = seeds.front();
  }
  return cfg;
}

Vec parse_vec(const std::string& text, const std::string& flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t pos = 0;
      v.push_back(std::stod(cell, &pos));
      if (pos != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError(flag + " expects comma-separated numbers, got '" + text + "'");
    }
  }
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  io::write_text(path.string(), text);
}

template <class W>
void write_with(const fs::path& path, W&& writer) {
  std::ostringstream os;
  writer(os);
  write(path, os.str());
}

struct LoadedData {
  SampleSet samples;
  std::vector<Trajectory> trajectories;
};

LoadedData load_samples(const fs::path& dir) {
  const json manifest = json::parse(io::read_text((dir / "samples_manifest.json").string()));
  std::ifstream f(dir / "samples.csv");
  if (!f) throw Error(ErrorKind::Parse, "cannot read '" + (dir / "samples.csv").string() + "'");
  LoadedData d;
  d.samples = io::read_samples_csv(f, manifest.at("dt").get<double>());
  d.samples.seed = manifest.value("seed", std::uint64_t{0});
  d.trajectories = io::trajectories_from_samples(d.samples);
  return d;
}

int cmd_generate(const Common& c) {
  const auto cfg = load(c);
  const auto data = generate_trajectories(cfg.make_plant(), cfg.training_spec(c.parallel));
  const fs::path out(c.out);
  write_with(out / "samples.csv", [&](std::ostream& os) { io::write_samples_csv(os, data.samples); });
  write(out / "samples_manifest.json", io::samples_manifest(data.samples, cfg.n_traj).dump(2) + "\n");
  if (!data.dropped.empty()) std::cerr << "warning: dropped " << data.dropped.size() << " diverged trajectories\n";
  std::cout << "generate: " << data.samples.size() << " snapshot pairs from " << data.trajectories.size()
            << " trajectories (" << data.dropped.size() << " diverged) -> " << (out / "samples.csv").string() << "\n";
  return 0;
}

int cmd_fit(const Common& c, const std::string& model, const std::string& data_dir) {
  const auto cfg = load(c);
  const auto data = load_samples(data_dir.empty() ? fs::path(c.out) : fs::path(data_dir));
  const auto nm = fit_named_model(model, cfg, data.samples, data.trajectories);
  const fs::path path = fs::path(c.out) / ("model_" + model + ".json");
  write(path, io::model_to_json(nm.model).dump(2) + "\n");
  std::cout << "fit: " << model << " lifted dim " << nm.model.lifted_dim() << ", relative residual "
            << nm.model.fit_residual << " -> " << path.string() << "\n";
  return 0;
}

LinearControlModel load_model(const std::string& path) { return io::model_from_json(json::parse(io::read_text(path))); }

int cmd_predict(const Common& c, const std::string& model_file, const std::string& data_dir, std::size_t steps) {
  load(c);
  const auto model = to_augmented(load_model(model_file));
  const auto data = load_samples(data_dir.empty() ? fs::path(c.out) : fs::path(data_dir));
  const std::size_t ns = model.state_history() + 1;
  const std::size_t ni = model.input_history();
  const std::size_t start = std::max(ns - 1, ni);
  const fs::path path = fs::path(c.out) / "predictions.csv";
  std::size_t written = 0;
  write_with(path, [&](std::ostream& os) {
    os << "traj,step,t";
    for (Eigen::Index i = 0; i < model.output_dim(); ++i) os << ",y" << (i + 1) << "_pred";
    for (Eigen::Index i = 0; i < data.samples.x.rows(); ++i) os << ",x" << (i + 1) << "_true";
    os << '\n';
    for (std::size_t t = 0; t < data.trajectories.size(); ++t) {
      const auto& traj = data.trajectories[t];
      if (traj.states.size() <= start + 1) continue;
      const std::size_t n = std::min(steps == 0 ? traj.inputs.size() - start : steps, traj.inputs.size() - start);
      History h;
      for (std::size_t i = 0; i < ns; ++i) h.states.push_back(traj.states[start - i]);
      for (std::size_t i = 1; i <= ni; ++i) h.inputs.push_back(traj.inputs[start - i]);
      const std::vector<Vec> inputs(traj.inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                    traj.inputs.begin() + static_cast<std::ptrdiff_t>(start + n));
      const auto pred = predict_rollout(model, h, inputs);
      for (std::size_t s = 0; s < pred.states.size(); ++s) {
        os << t << ',' << s << ',' << io::format_double(traj.times[start + s]);
        for (Eigen::Index i = 0; i < pred.states[s].size(); ++i) os << ',' << io::format_double(pred.states[s](i));
        for (Eigen::Index i = 0; i < traj.states[start + s].size(); ++i) os << ',' << io::format_double(traj.states[start + s](i));
        os << '\n';
      }
      ++written;
    }
  });
  std::cout << "predict: " << written << " trajectories -> " << path.string() << "\n";
  return 0;
}

int cmd_mpc(const Common& c, const std::string& model, const std::string& model_file, const std::string& x0_text) {
  const auto cfg = load(c);
  const ControlSystem plant = cfg.make_plant();
  LinearControlModel m;
  if (!model_file.empty()) {
    m = load_model(model_file);
  } else {
    const auto data = generate_trajectories(plant, cfg.training_spec(c.parallel));
    m = fit_named_model(model, cfg, data.samples, data.trajectories).model;
  }
  const Vec x0 = parse_vec(x0_text, "--x0");
  if (x0.size() != static_cast<Eigen::Index>(plant.state_dim)) throw UsageError("--x0 needs one value per state");
  ClosedLoopResult res;
  std::string status = "ok";
  int code = 0;
  try {
    res = closed_loop_run(plant, m, cfg.mpc, x0, cfg.t_closed_loop, cfg.dt);
  } catch (const ClosedLoopError& e) {
    res = e.partial();
    status = e.what();
    code = kRuntime;
  }
  const fs::path out(c.out);
  write_with(out / "closed_loop.csv", [&](std::ostream& os) { io::write_closed_loop_csv(os, res); });
  json summary = io::closed_loop_summary(res, cfg.success_threshold);
  summary["status"] = status;
  summary["model"] = to_string(m.kind);
  summary["x0"] = io::vector_to_json(x0);
  write(out / "closed_loop_summary.json", summary.dump(2) + "\n");
  std::cout << "mpc: final |x| = " << res.final_state_norm() << ", cost = " << res.total_cost() << " (" << status << ")\n";
  if (code) std::cerr << "error: " << status << "\n";
  return code;
}

int cmd_ulam(const Common& c) {
  const auto cfg = load(c);
  const ControlSystem plant = cfg.make_plant();
  BoxPartition part{cfg.ulam_box.lo, cfg.ulam_box.hi, cfg.ulam_counts};
  std::vector<Vec> levels;
  for (double u : cfg.ulam_levels) levels.push_back(Vec::Constant(static_cast<Eigen::Index>(plant.input_dim), u));
  UlamOptions opts;
  opts.samples_per_box = cfg.ulam_samples;
  opts.seed = derive_seed(cfg.seed, 3);
  opts.parallel = c.parallel;
  const ControlledChain chain = estimate_controlled_transition(plant, part, levels, cfg.ulam_tau, opts);

  const fs::path out(c.out);
  write(out / "chain.json", io::chain_to_json(chain).dump() + "\n");
  std::vector<Vec> densities;
  json per_level = json::array();
  for (std::size_t l = 0; l < chain.mats.size(); ++l) {
    write_with(out / ("transition_level" + std::to_string(l) + ".csv"), [&](std::ostream& os) { io::write_matrix_csv(os, chain.mats[l].p); });
    const Vec start = uniform_density(chain.mats[l]);
    Vec pi;
    bool converged = true;
    try {
      pi = invariant_density(chain.mats[l], start);
    } catch (const ConvergenceError& e) {
      pi = e.best();
      converged = false;
    }
    densities.push_back(pi);
    const auto d = static_cast<Eigen::Index>(chain.partition.size());
    per_level.push_back({{"level", cfg.ulam_levels[l]},
                         {"converged", converged},
                         {"interior_mass", pi.head(d).sum()},
                         {"outside_mass", pi(d)},
                         {"max_deviation_from_uniform", (pi - start).cwiseAbs().maxCoeff()},
                         {"escaped_columns", chain.mats[l].escaped_columns.size()}});
  }
  write_with(out / "densities.csv", [&](std::ostream& os) {
    os << "box,x1_center,x2_center";
    for (std::size_t l = 0; l < densities.size(); ++l) os << ",level" << l;
    os << '\n';
    for (std::size_t b = 0; b <= chain.partition.size(); ++b) {
      if (b < chain.partition.size()) {
        const Box bx = chain.partition.box(b);
        const Vec mid = 0.5 * (bx.lo + bx.hi);
        os << b << ',' << io::format_double(mid(0)) << ',' << io::format_double(mid(1));
      } else {
        os << "outside,,";
      }
      for (const auto& pi : densities) os << ',' << io::format_double(pi(static_cast<Eigen::Index>(b)));
      os << '\n';
    }
  });
  write(out / "ulam_summary.json", json{{"plant", cfg.plant}, {"tau", cfg.ulam_tau}, {"boxes", chain.partition.size()},
                                        {"levels", per_level}}.dump(2) + "\n");
  std::cout << "ulam: " << chain.partition.size() << " boxes x " << levels.size() << " levels -> " << out.string() << "\n";
  return 0;
}

int cmd_benchmark(const Common& c) {
  const auto base = load(c, true);
  const auto seeds = c.seed.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seeds(c.seed);
  for (auto seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const fs::path dir = seeds.size() > 1 ? fs::path(c.out) / ("seed_" + std::to_string(seed)) : fs::path(c.out);
    const auto res = run_benchmark(cfg, dir.string(), c.parallel);
    const auto& meta = res.report["metadata"];
    const auto dropped = meta["training_diverged"].get<std::size_t>() + meta["validation_diverged"].get<std::size_t>();
    if (dropped) std::cerr << "warning: seed " << seed << " dropped " << dropped << " diverged trajectories\n";
    const auto& models = res.report["models"];
    const auto& closed = res.report["closed_loop"];
    std::cout << "seed " << seed << ":";
    for (const char* m : {"dmdc", "edmdc", "delay"}) {
      std::cout << "  " << m << " rollout_rms=" << models[m]["rollout_rms"].get<double>()
                << " stabilized=" << closed[m]["validation"]["success_rate"].get<double>();
    }
    std::cout << "  (" << res.wall_seconds << " s) -> " << (dir / "report.json").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman-model MPC toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "YAML config (flat key: value)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "master seed (benchmark accepts A..B)");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--parallel", common.parallel, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("generate", "simulate forced training trajectories");
  add_common(gen);

  std::string model = "dmdc", data_dir, model_file, x0 = "1,1";
  std::size_t steps = 0;
  auto* fit = app.add_subcommand("fit", "fit a model to generated samples");
  add_common(fit);
  fit->add_option("--model", model, "dmdc | edmdc | delay")->check(CLI::IsMember({"dmdc", "edmdc", "delay"}));
  fit->add_option("--data", data_dir, "directory holding samples.csv (default: --out)");

  auto* pred = app.add_subcommand("predict", "roll a fitted model along recorded inputs");
  add_common(pred);
  pred->add_option("--model-file", model_file, "model JSON")->required()->check(CLI::ExistingFile);
  pred->add_option("--data", data_dir, "directory holding samples.csv (default: --out)");
  pred->add_option("--steps", steps, "rollout length (0: whole trajectory)");

  auto* mpc = app.add_subcommand("mpc", "closed-loop MPC on the plant");
  add_common(mpc);
  mpc->add_option("--model", model, "model to fit when no --model-file is given")->check(CLI::IsMember({"dmdc", "edmdc", "delay"}));
  mpc->add_option("--model-file", model_file, "model JSON")->check(CLI::ExistingFile);
  mpc->add_option("--x0", x0, "initial state, comma separated");

  auto* ulam = app.add_subcommand("ulam", "controlled Ulam transition matrices and invariant densities");
  add_common(ulam);

  auto* bench = app.add_subcommand("benchmark", "full comparison of DMDc, eDMDc and delay-DMDc under MPC");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) return cmd_generate(common);
    if (*fit) return cmd_fit(common, model, data_dir);
    if (*pred) return cmd_predict(common, model_file, data_dir, steps);
    if (*mpc) return cmd_mpc(common, model, model_file, x0);
    if (*ulam) return cmd_ulam(common);
    if (*bench) return cmd_benchmark(common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Parse ? kUsage : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
