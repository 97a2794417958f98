#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "koopmpc/dynamics.hpp"
#include "koopmpc/numerics.hpp"
#include "koopmpc/sysid.hpp"

namespace koopmpc {

// Stage cost (y - r)' Q (y - r) + ru |u|^2 + rdu |u - u_prev|^2 over horizon
// steps, terminal weight on the last predicted output.
struct MpcConfig {
  Mat q = Mat::Identity(2, 2);
  double ru = 0.1;
  double rdu = 0.1;
  std::size_t horizon = 15;
  double u_min = -5.0;
  double u_max = 5.0;
  double du_min = -50.0;
  double du_max = 50.0;
  Vec reference = Vec::Zero(2);
  std::optional<Mat> terminal_weight;  // defaults to q

  void validate() const;
};

// The condensed problem over U = (u_0, ..., u_{N-1}) plus the constant that
// makes objective(U) + constant equal the predicted cost.
struct CondensedQp {
  QpProblem qp;
  double constant = 0.0;
};

// Condensing matrices that do not depend on the initial state; built once per
// model/config pair.
class CondensedMpc {
 public:
  CondensedMpc(const LinearControlModel& model, const MpcConfig& cfg);

  CondensedQp build(const Vec& z0, const Vec& u_prev) const;
  const LinearControlModel& model() const { return model_; }
  const MpcConfig& config() const { return cfg_; }
  // Output weight matched to the model's recovered coordinates.
  const Mat& output_weight() const { return q_out_; }
  const Vec& output_reference() const { return r_out_; }

 private:
  LinearControlModel model_;
  MpcConfig cfg_;
  Mat q_out_;
  Vec r_out_;
  Mat phi_;     // stacked C A^{k+1}
  Mat gamma_;   // block lower triangular C A^{k-j} B
  Mat qbar_;
  Mat diff_;    // (D U)_k = u_k - u_{k-1}
  Mat hessian_;
  Mat a_ineq_;
};

CondensedQp condense_qp(const LinearControlModel& model, const Vec& z0, const Vec& u_prev, const MpcConfig& cfg);

struct MpcSolveStats {
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
  bool warm_start_feasible = false;
};

struct MpcStepResult {
  Vec u0;
  std::vector<Vec> sequence;  // optimized u_0 .. u_{N-1}
  MpcSolveStats stats;
};

// Receding-horizon controller. Keeps the previous solution for warm starts.
class MpcController {
 public:
  MpcController(const LinearControlModel& model, const MpcConfig& cfg, QpOptions qp_opts = {});

  // Lifts the measured history, solves the QP and returns the first input.
  MpcStepResult step(const History& measured, const Vec& u_prev);
  void reset() { warm_.resize(0); }
  const CondensedMpc& condensed() const { return condensed_; }

 private:
  CondensedMpc condensed_;
  QpOptions qp_opts_;
  Vec warm_;
};

// Stateless single step (cold start).
MpcStepResult mpc_step(const LinearControlModel& model, const History& measured, const Vec& u_prev, const MpcConfig& cfg);

struct ClosedLoopResult {
  Trajectory trajectory;  // true plant states and applied inputs
  std::vector<double> stage_costs;
  std::vector<double> cumulative_cost;
  std::vector<MpcSolveStats> solve_stats;
  std::size_t warmup_steps = 0;  // steps with u = 0 while filling the delay history

  double total_cost() const { return cumulative_cost.empty() ? 0.0 : cumulative_cost.back(); }
  double final_state_norm() const { return trajectory.states.empty() ? 0.0 : trajectory.states.back().norm(); }
};

class ClosedLoopError : public Error {
 public:
  ClosedLoopError(ErrorKind kind, const std::string& what, std::size_t step, ClosedLoopResult partial)
      : Error(kind, what), step_(step), partial_(std::move(partial)) {}
  std::size_t step() const noexcept { return step_; }
  const ClosedLoopResult& partial() const noexcept { return partial_; }

 private:
  std::size_t step_;
  ClosedLoopResult partial_;
};

// measure -> MPC -> one RK4 step of the plant, until t_end. Stage cost is on
// the true state with the full-state weight cfg.q.
ClosedLoopResult closed_loop_run(const ControlSystem& plant, const LinearControlModel& model, const MpcConfig& cfg,
                                 const Vec& x0, double t_end, double dt);

}  // namespace koopmpc
