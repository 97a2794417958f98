#include "koopmpc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "koopmpc/dictionary.hpp"
#include "koopmpc/io.hpp"
#include "koopmpc/mpc.hpp"
#include "koopmpc/parallel.hpp"

namespace koopmpc {

namespace fs = std::filesystem;
using nlohmann::json;

NamedModel fit_named_model(const std::string& name, const ExperimentConfig& cfg, const SampleSet& samples,
                           const std::vector<Trajectory>& trajectories) {
  if (name == "dmdc") return {name, fit_dmdc(samples, FitOptions{cfg.svd_tol})};
  if (name == "edmdc") {
    const auto dict = monomials_dictionary(2, static_cast<int>(cfg.edmdc_order), cfg.edmdc_constant);
    return {name, fit_edmdc(samples, dict, FitOptions{cfg.svd_tol})};
  }
  if (name == "delay") {
    DelaySpec spec{cfg.delay_depth, cfg.delay_depth, 1};
    DelayFitOptions opts;
    opts.svd_tol = cfg.svd_tol;
    if (cfg.delay_embed == "x1") opts.coords = {0};
    return {name, fit_delay_augmented(trajectories, spec, cfg.dt, opts)};
  }
  throw Error(ErrorKind::InvalidInput, "unknown model '" + name + "' (expected dmdc, edmdc or delay)");
}

std::vector<NamedModel> fit_benchmark_models(const ExperimentConfig& cfg, const SampleSet& samples,
                                             const std::vector<Trajectory>& trajectories) {
  std::vector<NamedModel> out;
  for (const char* name : {"dmdc", "edmdc", "delay"}) out.push_back(fit_named_model(name, cfg, samples, trajectories));
  return out;
}

namespace {

History history_at(const Trajectory& traj, std::size_t k, std::size_t n_states, std::size_t n_inputs) {
  History h;
  for (std::size_t i = 0; i < n_states && i <= k; ++i) h.states.push_back(traj.states[k - i]);
  for (std::size_t i = 1; i <= n_inputs && i <= k; ++i) h.inputs.push_back(traj.inputs[k - i]);
  return h;
}

// Recovered-state error restricted to the coordinates the model predicts.
double squared_error(const LinearControlModel& m, const Vec& pred, const Vec& truth) {
  if (!m.is_delay()) return (pred - truth).squaredNorm();
  double s = 0.0;
  for (std::size_t c = 0; c < m.delay.coords.size(); ++c) {
    const double e = pred(static_cast<Eigen::Index>(c)) - truth(m.delay.coords[c]);
    s += e * e;
  }
  return s;
}

}  // namespace

ValidationErrors validation_errors(const LinearControlModel& model, const std::vector<Trajectory>& validation,
                                   std::size_t start, std::size_t rollout_steps) {
  const LinearControlModel m = to_augmented(model);
  const std::size_t ns = m.state_history() + 1;
  const std::size_t ni = m.input_history();
  if (start + 1 < ns || start < ni) throw Error(ErrorKind::MissingHistory, "validation_errors: start index leaves no room for the model history");
  const double width = static_cast<double>(m.output_dim());
  ValidationErrors out;
  for (const auto& traj : validation) {
    const std::size_t len = traj.states.size();
    if (start + rollout_steps >= len) throw Error(ErrorKind::InsufficientData, "validation_errors: trajectory shorter than the rollout window");

    double one = 0.0;
    std::size_t count = 0;
    for (std::size_t k = start; k + 1 < len; ++k) {
      const Vec z = m.lift(history_at(traj, k, ns, ni));
      const Vec pred = m.c * (m.a * z + m.b * traj.inputs[k]);
      one += squared_error(m, pred, traj.states[k + 1]);
      ++count;
    }
    out.one_step.push_back(std::sqrt(one / (static_cast<double>(count) * width)));

    const std::vector<Vec> inputs(traj.inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                  traj.inputs.begin() + static_cast<std::ptrdiff_t>(start + rollout_steps));
    const Trajectory pred = predict_rollout(m, history_at(traj, start, ns, ni), inputs);
    double roll = 0.0;
    for (std::size_t s = 1; s <= rollout_steps; ++s) roll += squared_error(m, pred.states[s], traj.states[start + s]);
    out.rollout.push_back(std::sqrt(roll / (static_cast<double>(rollout_steps) * width)));
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Vec> ic_grid(const Box& box, std::size_t n) {
  std::vector<Vec> out;
  auto coord = [n](double lo, double hi, std::size_t i) {
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  // x1 fastest
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      Vec x(2);
      x << coord(box.lo(0), box.hi(0), i), coord(box.lo(1), box.hi(1), j);
      out.push_back(x);
    }
  }
  return out;
}

std::string report_text(const json& report) { return report.dump(2) + "\n"; }

namespace {

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw BenchmarkError(e.kind(), name, e.what());
  } catch (const std::exception& e) {
    throw BenchmarkError(ErrorKind::InvalidInput, name, e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) { io::write_text(path.string(), text); }

template <class W>
void write_stream(const fs::path& path, W&& writer) {
  std::ostringstream os;
  writer(os);
  write_file(path, os.str());
}

std::string status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Divergence:
      return "diverged";
    case ErrorKind::Infeasible:
      return "infeasible";
    case ErrorKind::Convergence:
      return "solver_failed";
    default:
      return "error";
  }
}

}  // namespace

BenchmarkOutput run_benchmark(const ExperimentConfig& cfg, const std::string& out_dir, std::size_t parallel) {
  const auto t0 = std::chrono::steady_clock::now();
  stage("config", [&] { cfg.validate(); return 0; });
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "config.json", cfg.to_json().dump(2) + "\n");
  const ControlSystem plant = cfg.make_plant();

  const GeneratedData train = stage("generate-training", [&] { return generate_trajectories(plant, cfg.training_spec(parallel)); });
  write_stream(out / "training_samples.csv", [&](std::ostream& os) { io::write_samples_csv(os, train.samples); });
  write_file(out / "training_manifest.json", io::samples_manifest(train.samples, cfg.n_traj).dump(2) + "\n");

  const std::vector<NamedModel> models = stage("fit", [&] { return fit_benchmark_models(cfg, train.samples, train.trajectories); });
  for (const auto& nm : models) write_file(out / ("model_" + nm.name + ".json"), io::model_to_json(nm.model).dump(2) + "\n");

  const GeneratedData val = stage("generate-validation", [&] { return generate_trajectories(plant, cfg.validation_spec(parallel)); });
  const std::size_t start = cfg.delay_depth - 1;

  json report;
  report["config"] = cfg.to_json();
  report["metadata"] = {{"version", kVersion},
                        {"seed", cfg.seed},
                        {"training_seed", cfg.training_spec(1).seed},
                        {"validation_seed", cfg.validation_spec(1).seed},
                        {"training_hash", train.samples.x.size() ? hash_samples(train.samples) : ""},
                        {"training_columns", train.samples.size()},
                        {"training_diverged", train.dropped.size()},
                        {"validation_trajectories", val.trajectories.size()},
                        {"validation_diverged", val.dropped.size()},
                        {"validation_start_index", start}};

  std::map<std::string, ValidationErrors> errors;
  stage("validate", [&] {
    for (const auto& nm : models) errors[nm.name] = validation_errors(nm.model, val.trajectories, start, cfg.rollout_steps);
    return 0;
  });
  json model_json = json::object();
  for (const auto& nm : models) {
    const auto& e = errors[nm.name];
    model_json[nm.name] = {{"one_step_rms", median(e.one_step)}, {"rollout_rms", median(e.rollout)}};
  }
  report["models"] = model_json;
  write_stream(out / "validation_errors.csv", [&](std::ostream& os) {
    os << "traj,model,one_step_rms,rollout_rms\n";
    for (const auto& nm : models) {
      const auto& e = errors[nm.name];
      for (std::size_t i = 0; i < e.rollout.size(); ++i) {
        os << i << ',' << nm.name << ',' << io::format_double(e.one_step[i]) << ',' << io::format_double(e.rollout[i]) << '\n';
      }
    }
  });
  // Predicted vs true rollouts for the first few validation trajectories.
  write_stream(out / "validation_predictions.csv", [&](std::ostream& os) {
    os << "traj,model,step,t,x1_pred,x2_pred,x1_true,x2_true\n";
    const std::size_t n_export = std::min(cfg.export_runs, val.trajectories.size());
    for (std::size_t i = 0; i < n_export; ++i) {
      const auto& traj = val.trajectories[i];
      for (const auto& nm : models) {
        const LinearControlModel m = to_augmented(nm.model);
        const std::vector<Vec> inputs(traj.inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                      traj.inputs.begin() + static_cast<std::ptrdiff_t>(start + cfg.rollout_steps));
        const Trajectory pred = predict_rollout(m, history_at(traj, start, m.state_history() + 1, m.input_history()), inputs);
        for (std::size_t s = 0; s < pred.states.size(); ++s) {
          const Vec& truth = traj.states[start + s];
          os << i << ',' << nm.name << ',' << s << ',' << io::format_double(traj.times[start + s]);
          for (Eigen::Index c = 0; c < 2; ++c) {
            os << ',';
            if (c < pred.states[s].size()) os << io::format_double(pred.states[s](c));
          }
          os << ',' << io::format_double(truth(0)) << ',' << io::format_double(truth(1)) << '\n';
        }
      }
    }
  });

  // Closed loop from every validation IC and every grid point, for each model.
  struct Job {
    std::string set;
    std::size_t index;
    Vec x0;
    std::size_t model;
  };
  std::vector<Job> jobs;
  const auto grid = ic_grid(cfg.grid_box, cfg.grid_n);
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    for (std::size_t i = 0; i < val.trajectories.size(); ++i) jobs.push_back({"validation", i, val.trajectories[i].states.front(), mi});
    for (std::size_t i = 0; i < grid.size(); ++i) jobs.push_back({"grid", i, grid[i], mi});
  }
  std::vector<IcOutcome> outcomes(jobs.size());
  std::vector<ClosedLoopResult> exported(jobs.size());
  stage("closed-loop", [&] {
    parallel_for(jobs.size(), parallel, [&](std::size_t j) {
      const Job& job = jobs[j];
      IcOutcome& o = outcomes[j];
      o.set = job.set;
      o.index = job.index;
      o.x0 = job.x0;
      o.model = models[job.model].name;
      ClosedLoopResult res;
      try {
        res = closed_loop_run(plant, models[job.model].model, cfg.mpc, job.x0, cfg.t_closed_loop, cfg.dt);
        o.status = "ok";
      } catch (const ClosedLoopError& e) {
        res = e.partial();
        o.status = status_of(e.kind());
      }
      o.cost = res.total_cost();
      o.final_norm = res.final_state_norm();
      o.success = o.status == "ok" && o.final_norm < cfg.success_threshold;
      if (job.set == "validation" && job.index < cfg.export_runs) exported[j] = std::move(res);
    });
    return 0;
  });

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (jobs[j].set == "validation" && jobs[j].index < cfg.export_runs) {
      write_stream(out / ("closed_loop_" + outcomes[j].model + "_ic" + std::to_string(jobs[j].index) + ".csv"),
                   [&](std::ostream& os) { io::write_closed_loop_csv(os, exported[j]); });
    }
  }
  write_stream(out / "closed_loop_costs.csv", [&](std::ostream& os) {
    os << "set,index,x1_0,x2_0,model,cost,final_norm,success,status\n";
    for (const auto& o : outcomes) {
      os << o.set << ',' << o.index << ',' << io::format_double(o.x0(0)) << ',' << io::format_double(o.x0(1)) << ','
         << o.model << ',' << io::format_double(o.cost) << ',' << io::format_double(o.final_norm) << ','
         << (o.success ? 1 : 0) << ',' << o.status << '\n';
    }
  });

  // Success rates per set and, on the grid, per distance band |x0| in [k w, (k+1) w).
  json closed = json::object();
  for (const auto& nm : models) {
    json entry;
    for (const char* set : {"validation", "grid"}) {
      std::size_t n = 0, ok = 0;
      std::vector<double> costs;
      for (const auto& o : outcomes) {
        if (o.model != nm.name || o.set != set) continue;
        ++n;
        ok += o.success ? 1 : 0;
        costs.push_back(o.cost);
      }
      entry[set] = {{"runs", n},
                    {"successes", ok},
                    {"success_rate", n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0},
                    {"median_cost", median(costs)}};
    }
    struct Band {
      std::size_t runs = 0, successes = 0;
      std::vector<double> costs;
    };
    std::map<std::size_t, Band> bands;
    for (const auto& o : outcomes) {
      if (o.model != nm.name || o.set != "grid") continue;
      auto& b = bands[static_cast<std::size_t>(std::floor(o.x0.norm() / cfg.band_width))];
      ++b.runs;
      b.successes += o.success ? 1 : 0;
      b.costs.push_back(o.cost);
    }
    json band_json = json::array();
    for (const auto& [b, band] : bands) {
      band_json.push_back({{"band", b},
                           {"min_distance", static_cast<double>(b) * cfg.band_width},
                           {"runs", band.runs},
                           {"successes", band.successes},
                           {"success_rate", static_cast<double>(band.successes) / static_cast<double>(band.runs)},
                           {"median_cost", median(band.costs)}});
    }
    entry["grid_bands"] = band_json;
    closed[nm.name] = entry;
  }
  report["closed_loop"] = closed;

  json table = json::array();
  const std::size_t per_model = val.trajectories.size() + grid.size();
  for (std::size_t j = 0; j < per_model; ++j) {
    json costs = json::object(), success = json::object();
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      const auto& o = outcomes[mi * per_model + j];
      costs[o.model] = o.cost;
      success[o.model] = o.success;
    }
    const auto& o = outcomes[j];
    table.push_back({{"set", o.set}, {"index", o.index}, {"x0", io::vector_to_json(o.x0)}, {"cost", costs}, {"success", success}});
  }
  report["ic_costs"] = table;

  write_file(out / "report.json", report_text(report));
  BenchmarkOutput result;
  result.report = std::move(report);
  result.outcomes = std::move(outcomes);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(out / "timing.json", json{{"wall_seconds", result.wall_seconds}, {"parallel", parallel}}.dump(2) + "\n");
  return result;
}

}  // namespace koopmpc
