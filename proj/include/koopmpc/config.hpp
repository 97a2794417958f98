#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmpc/dynamics.hpp"
#include "koopmpc/mpc.hpp"

namespace koopmpc {

// Every field has the benchmark default, so an empty file is a full config.
struct ExperimentConfig {
  // plant
  std::string plant = "vanderpol";  // vanderpol | zero
  double mu = 0.2;

  // training data
  std::size_t n_traj = 200;
  Box train_box{Vec::Constant(2, -6.0), Vec::Constant(2, 6.0)};
  double t_train = 1.0;
  double dt = 0.05;
  double forcing_amplitude = 5.0;
  double omega_sigma = 10.0;
  std::uint64_t seed = 1;

  // models
  double svd_tol = 1e-10;
  std::size_t edmdc_order = 5;
  bool edmdc_constant = false;
  std::size_t delay_depth = 5;
  std::string delay_embed = "full";  // full | x1

  // controller
  MpcConfig mpc;

  // validation
  std::size_t n_validation = 50;
  Box validation_box{Vec::Constant(2, -3.0), Vec::Constant(2, 3.0)};
  double t_validation = 1.0;
  std::string validation_forcing = "same";  // same | zero
  std::size_t rollout_steps = 15;

  // closed loop
  double t_closed_loop = 30.0;
  double success_threshold = 0.05;
  std::size_t grid_n = 9;
  Box grid_box{Vec::Constant(2, -4.0), Vec::Constant(2, 4.0)};
  double band_width = 1.0;
  std::size_t export_runs = 3;

  // transfer operator
  Box ulam_box{Vec::Constant(2, -4.0), Vec::Constant(2, 4.0)};
  std::vector<std::size_t> ulam_counts{20, 20};
  std::vector<double> ulam_levels{-1.0, 0.0, 1.0};
  double ulam_tau = 0.5;
  std::size_t ulam_samples = 100;

  void validate() const;
  ControlSystem make_plant() const;
  TrainingSpec training_spec(std::size_t parallel) const;
  TrainingSpec validation_spec(std::size_t parallel) const;
  // Resolved values, enough to rerun the experiment.
  nlohmann::json to_json() const;
};

// Flat mapping of key: value. Unknown keys and type mismatches raise
// ErrorKind::Parse naming the key and line.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<string>");
ExperimentConfig parse_config(const std::string& path);

std::vector<std::string> config_keys();

}  // namespace koopmpc
