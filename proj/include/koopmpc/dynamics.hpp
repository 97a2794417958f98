#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "koopmpc/numerics.hpp"

namespace koopmpc {

// dx/dt = rhs(x, u, t)
struct ControlSystem {
  std::size_t state_dim = 0;
  std::size_t input_dim = 0;
  std::function<Vec(const Vec& x, const Vec& u, double t)> rhs;
  std::string name;

  Vec operator()(const Vec& x, const Vec& u, double t = 0.0) const { return rhs(x, u, t); }
};

// Inputs are held over each step, so inputs.size() == states.size() - 1.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> inputs;

  std::size_t steps() const { return inputs.size(); }
};

// Column j holds one snapshot pair (x[:, j] -> xp[:, j]) under input u[:, j].
struct SampleSet {
  Mat x;
  Mat xp;
  Mat u;
  double dt = 0.0;
  std::vector<std::size_t> trajectory_index;  // source trajectory per column
  std::vector<double> times;                  // t_k per column
  std::uint64_t seed = 0;
  std::size_t diverged = 0;  // trajectories dropped during generation

  Eigen::Index size() const { return x.cols(); }
  void validate() const;
};

struct Box {
  Vec lo;
  Vec hi;
};

struct ForcingSignal {
  enum class Kind { ProductSines, Constant, Zero, PiecewiseConstant };
  Kind kind = Kind::Zero;
  double amplitude = 0.0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  std::vector<double> values;  // Constant: values[0]; PiecewiseConstant: one per step
  double step = 0.0;           // PiecewiseConstant hold length

  static ForcingSignal zero() { return {}; }
  static ForcingSignal constant(double v);
  static ForcingSignal product_sines(double amplitude, double omega1, double omega2);
  static ForcingSignal piecewise(std::vector<double> values, double step);

  double operator()(double t) const;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, Trajectory partial)
      : Error(ErrorKind::Divergence, what), partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Trajectory partial_;
};

inline constexpr double kDivergenceBound = 1e6;

// Van der Pol with additive forcing: x1' = x2, x2' = mu (1 - x1^2) x2 - x1 + u.
ControlSystem make_vanderpol(double mu);

// Zero vector field, any dimensions.
ControlSystem make_zero_system(std::size_t state_dim, std::size_t input_dim);

// x' = a x + b u for a continuous-time linear plant.
ControlSystem make_linear_system(const Mat& a, const Mat& b);

// x1' = mu x1, x2' = lambda (x2 - x1^2), with optional additive input on x2.
ControlSystem make_slow_manifold(double mu, double lambda);

// One classical Runge-Kutta step with u held constant.
Vec rk4_step(const ControlSystem& sys, const Vec& x, const Vec& u, double t, double dt);

// Advances over a duration using ceil(duration / max_dt) equal RK4 substeps.
Vec flow(const ControlSystem& sys, const Vec& x, const Vec& u, double duration, double max_dt);

// floor(t_end / dt) zero-order-hold steps. Throws DivergenceError when any
// |x_i| exceeds kDivergenceBound.
Trajectory simulate(const ControlSystem& sys, const Vec& x0, const ForcingSignal& forcing, double t_end,
                    double dt);

std::size_t step_count(double t_end, double dt);

// Per-trajectory forcing for training and validation: amplitude * sin(|w1| t)
// sin(|w2| t) with w_i ~ N(0, omega_sigma).
struct ForcingFamily {
  enum class Kind { ProductSines, Zero };
  Kind kind = Kind::ProductSines;
  double amplitude = 5.0;
  double omega_sigma = 10.0;  // standard deviation
};

struct TrainingSpec {
  std::size_t n_traj = 200;
  Box box;
  double t_end = 1.0;
  double dt = 0.05;
  ForcingFamily forcing;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
};

// Everything derived from the master seed and trajectory index, so the result
// is independent of the thread count.
struct GeneratedData {
  SampleSet samples;
  std::vector<Trajectory> trajectories;  // kept trajectories, in index order
  std::vector<std::size_t> dropped;      // indices of diverged trajectories
};

GeneratedData generate_trajectories(const ControlSystem& sys, const TrainingSpec& spec);

SampleSet sample_training_set(const ControlSystem& sys, const TrainingSpec& spec);

// Snapshot pairs (states[k], states[k+1], inputs[k]) across trajectories.
SampleSet snapshots_from(const std::vector<Trajectory>& trajs, double dt);

// Deterministic per-stream seed from a master seed and a stream index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace koopmpc
