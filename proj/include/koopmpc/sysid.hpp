#pragma once

#include <string>
#include <vector>

#include "koopmpc/dictionary.hpp"
#include "koopmpc/dynamics.hpp"
#include "koopmpc/numerics.hpp"

namespace koopmpc {

enum class ModelKind { Dmdc, Edmdc, DelayMiso, DelayAugmented };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Measurement history, newest first. states[0] is the current state; inputs[0]
// is the most recently applied input u_{k-1}.
struct History {
  std::vector<Vec> states;
  std::vector<Vec> inputs;

  static History current(const Vec& x) { return History{{x}, {}}; }
};

struct DelayDescriptor {
  std::size_t state_depth = 1;
  std::size_t input_depth = 1;
  std::size_t tau_steps = 1;
  std::vector<Eigen::Index> coords;  // embedded state components
  std::size_t state_dim = 0;         // full plant state dimension
  std::size_t input_dim = 0;
};

// z_{k+1} = a z_k + b u_k, x_k = c z_k.
struct LinearControlModel {
  ModelKind kind = ModelKind::Dmdc;
  Mat a;
  Mat b;
  Mat c;
  double dt = 0.0;
  Dictionary dict;        // dictionary kinds
  DelayDescriptor delay;  // delay kinds
  double fit_residual = 0.0;  // ||Z' - A Z - B U||_F / ||Z'||_F on training data
  std::string training_hash;
  std::size_t training_columns = 0;

  Eigen::Index lifted_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
  Eigen::Index output_dim() const { return c.rows(); }
  bool is_delay() const { return kind == ModelKind::DelayMiso || kind == ModelKind::DelayAugmented; }
  // Number of past states (beyond the current one) and past inputs needed to lift.
  std::size_t state_history() const { return is_delay() ? (delay.state_depth - 1) * delay.tau_steps : 0; }
  std::size_t input_history() const { return kind == ModelKind::DelayAugmented ? delay.input_depth - 1 : 0; }

  // Lifted coordinates from the current measurement and its history.
  Vec lift(const History& h) const;
  Vec lift(const Vec& x) const { return lift(History::current(x)); }
  void validate() const;
};

struct FitOptions {
  double svd_tol = kDefaultSvdTol;
};

LinearControlModel fit_dmdc(const SampleSet& data, const FitOptions& opts = {});

LinearControlModel fit_edmdc(const SampleSet& data, const Dictionary& dict, const FitOptions& opts = {});

struct DelayFitOptions {
  double svd_tol = kDefaultSvdTol;
  std::vector<Eigen::Index> coords;  // empty embeds the full state
  // Keep only the leading rank singular directions of the Hankel regressor (0 = off).
  std::size_t hankel_rank = 0;
};

// z_{k+1} = A z_k + B v_k on Hankel coordinates, v_k = (u_k, ..., u_{k-d+1}).
LinearControlModel fit_delay_miso(const std::vector<Trajectory>& trajs, const DelaySpec& spec, double dt,
                                  const DelayFitOptions& opts = {});

// The same regression rearranged so the state carries the past inputs and u_k
// is the only input. The rows below the Hankel block are the exact shift.
// Requires tau_steps == 1.
LinearControlModel fit_delay_augmented(const std::vector<Trajectory>& trajs, const DelaySpec& spec, double dt,
                                       const DelayFitOptions& opts = {});

// Augmented form of a delay-miso model; other kinds are returned unchanged.
LinearControlModel to_augmented(const LinearControlModel& model);

struct ParametrizedFamily {
  std::vector<Vec> levels;
  std::vector<Mat> mats;
  Dictionary dict;
  double dt = 0.0;

  // Index of the level equal to u within tol, or -1.
  long find_level(const Vec& u, double tol = 1e-12) const;
};

// One (e)DMD fit per discrete input level on the columns recorded at that level.
ParametrizedFamily fit_parametrized(const SampleSet& data, const Dictionary& dict, const std::vector<Vec>& levels,
                                    const FitOptions& opts = {});

// Rolls the model forward from the lifted history without re-lifting; returned
// states are c z_k.
Trajectory predict_rollout(const LinearControlModel& model, const History& h0, const std::vector<Vec>& inputs);
Trajectory predict_rollout(const ParametrizedFamily& family, const Vec& x0, const std::vector<Vec>& inputs);

// Frobenius residual of the one-step regression on the given data.
double one_step_residual(const Mat& z, const Mat& u, const Mat& z_next, const Mat& a, const Mat& b);

// FNV-1a over the raw sample bytes; identifies the training set in model files.
std::string hash_samples(const SampleSet& data);

// --- eigenfunction identification ---

struct ThresholdStep {
  std::size_t support_size = 0;
  double truncated_residual = 0.0;  // after zeroing small coefficients
  double resolved_residual = 0.0;   // after re-solving on the support
};

struct EigenfunctionEntry {
  double lambda = 0.0;
  Vec xi;  // unit norm, largest-magnitude coefficient positive
  double residual = 0.0;           // ||M xi|| / ||xi||
  double relative_residual = 0.0;  // residual / sigma_max(M)
  std::vector<std::size_t> support;
  std::vector<ThresholdStep> history;
  std::size_t sparsity() const { return support.size(); }
};

struct EigenSearchOptions {
  double sparsity_threshold = 0.05;  // relative to max |xi|
  std::size_t max_iterations = 20;
  double max_relative_residual = 1e-6;
};

// Sparse vector in the null space of rows x_dot . grad(theta) - lambda theta.
EigenfunctionEntry identify_eigenfunctions(const Mat& x, const Mat& x_dot, const Dictionary& theta, double lambda,
                                           const EigenSearchOptions& opts = {});

class NoEigenfunctionError : public Error {
 public:
  NoEigenfunctionError(const std::string& what, double residual)
      : Error(ErrorKind::NoEigenfunction, what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// z = (phi_1 .. phi_r) with z' = diag(lambda) z + B(x) u for known input gain G.
struct EigenfunctionModel {
  Dictionary theta;
  std::vector<EigenfunctionEntry> entries;

  Vec eval(const Vec& x) const;
  Vec lambdas() const;
  // r x q coupling grad(phi)(x) G(x).
  Mat coupling(const Vec& x, const Mat& g_of_x) const;
};

// Analytic derivatives rhs(x_j, u_j) at every sample.
Mat analytic_derivatives(const ControlSystem& sys, const SampleSet& data);

// Central differences along a trajectory (one-sided at the ends).
Mat finite_difference_derivatives(const Trajectory& traj);

}  // namespace koopmpc
