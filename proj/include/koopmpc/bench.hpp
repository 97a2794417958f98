#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmpc/config.hpp"
#include "koopmpc/sysid.hpp"

namespace koopmpc {

// Raised by run_benchmark; names the stage that failed.
class BenchmarkError : public Error {
 public:
  BenchmarkError(ErrorKind kind, std::string stage, const std::string& what)
      : Error(kind, "benchmark stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct NamedModel {
  std::string name;  // dmdc | edmdc | delay
  LinearControlModel model;
};

std::vector<NamedModel> fit_benchmark_models(const ExperimentConfig& cfg, const SampleSet& samples,
                                             const std::vector<Trajectory>& trajectories);
NamedModel fit_named_model(const std::string& name, const ExperimentConfig& cfg, const SampleSet& samples,
                           const std::vector<Trajectory>& trajectories);

// Per-trajectory errors of one model on the validation set. Every model starts
// from the same index (delay depth - 1) so the windows match.
struct ValidationErrors {
  std::vector<double> one_step;  // RMS of one-step predictions per trajectory
  std::vector<double> rollout;   // RMS over the rollout horizon per trajectory
};

ValidationErrors validation_errors(const LinearControlModel& model, const std::vector<Trajectory>& validation,
                                   std::size_t start, std::size_t rollout_steps);

double median(std::vector<double> v);

struct IcOutcome {
  std::string set;  // validation | grid
  std::size_t index = 0;
  Vec x0;
  std::string model;
  double cost = 0.0;
  double final_norm = 0.0;
  bool success = false;
  std::string status;  // ok | diverged | infeasible | ...
};

std::vector<Vec> ic_grid(const Box& box, std::size_t n);

// Report plus the location of the written artifacts. wall_seconds is kept out
// of the report so that repeated runs stay byte-identical.
struct BenchmarkOutput {
  nlohmann::json report;
  std::vector<IcOutcome> outcomes;
  double wall_seconds = 0.0;
};

// Writes artifacts into out_dir (created if missing). parallel only affects
// speed, never the output.
BenchmarkOutput run_benchmark(const ExperimentConfig& cfg, const std::string& out_dir, std::size_t parallel = 1);

std::string report_text(const nlohmann::json& report);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace koopmpc
