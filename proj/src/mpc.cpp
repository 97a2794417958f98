#include "koopmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace koopmpc {

void MpcConfig::validate() const {
  if (horizon < 1) throw Error(ErrorKind::InvalidInput, "MpcConfig: horizon must be at least 1");
  if (u_min > u_max) throw Error(ErrorKind::InvalidInput, "MpcConfig: u_min exceeds u_max");
  if (du_min > du_max) throw Error(ErrorKind::InvalidInput, "MpcConfig: du_min exceeds du_max");
  if (ru < 0.0 || rdu < 0.0) throw Error(ErrorKind::InvalidInput, "MpcConfig: input weights must be nonnegative");
  if (q.rows() != q.cols() || reference.size() != q.rows()) {
    throw Error(ErrorKind::InvalidInput, "MpcConfig: state weight and reference sizes disagree");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (q + q.transpose()));
  if (eig.eigenvalues().minCoeff() < -1e-12) throw Error(ErrorKind::InvalidInput, "MpcConfig: state weight is not PSD");
}

namespace {

// Weight and reference restricted to the coordinates the model recovers.
std::pair<Mat, Vec> output_weights(const LinearControlModel& model, const Mat& w, const Vec& r) {
  const Eigen::Index ny = model.output_dim();
  if (w.rows() == ny) return {w, r};
  if (model.is_delay() && static_cast<Eigen::Index>(model.delay.state_dim) == w.rows()) {
    const auto& coords = model.delay.coords;
    Mat wo(ny, ny);
    Vec ro(ny);
    for (Eigen::Index i = 0; i < ny; ++i) {
      ro(i) = r(coords[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < ny; ++j) wo(i, j) = w(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
    }
    return {wo, ro};
  }
  throw Error(ErrorKind::InvalidInput, "MPC: state weight does not match the model output dimension");
}

}  // namespace

CondensedMpc::CondensedMpc(const LinearControlModel& model, const MpcConfig& cfg)
    : model_(to_augmented(model)), cfg_(cfg) {
  cfg_.validate();
  model_.validate();
  std::tie(q_out_, r_out_) = output_weights(model_, cfg_.q, cfg_.reference);
  const Mat qf = cfg_.terminal_weight ? output_weights(model_, *cfg_.terminal_weight, cfg_.reference).first : q_out_;

  const auto n_h = static_cast<Eigen::Index>(cfg_.horizon);
  const Eigen::Index d = model_.lifted_dim();
  const Eigen::Index q = model_.input_dim();
  const Eigen::Index ny = model_.output_dim();

  // c_ak[k] = C A^k
  std::vector<Mat> c_ak;
  c_ak.reserve(static_cast<std::size_t>(n_h + 1));
  c_ak.push_back(model_.c);
  for (Eigen::Index k = 1; k <= n_h; ++k) c_ak.push_back(c_ak.back() * model_.a);

  phi_.resize(n_h * ny, d);
  gamma_ = Mat::Zero(n_h * ny, n_h * q);
  for (Eigen::Index k = 0; k < n_h; ++k) {
    phi_.middleRows(k * ny, ny) = c_ak[static_cast<std::size_t>(k + 1)];
    for (Eigen::Index j = 0; j <= k; ++j) {
      gamma_.block(k * ny, j * q, ny, q) = c_ak[static_cast<std::size_t>(k - j)] * model_.b;
    }
  }
  qbar_ = Mat::Zero(n_h * ny, n_h * ny);
  for (Eigen::Index k = 0; k < n_h; ++k) qbar_.block(k * ny, k * ny, ny, ny) = k + 1 == n_h ? qf : q_out_;

  diff_ = Mat::Identity(n_h * q, n_h * q);
  for (Eigen::Index k = 1; k < n_h; ++k) diff_.block(k * q, (k - 1) * q, q, q) = -Mat::Identity(q, q);

  hessian_ = 2.0 * (gamma_.transpose() * qbar_ * gamma_ + cfg_.ru * Mat::Identity(n_h * q, n_h * q) +
                    cfg_.rdu * diff_.transpose() * diff_);
  hessian_ = 0.5 * (hessian_ + hessian_.transpose()).eval();

  a_ineq_.resize(2 * n_h * q, n_h * q);
  a_ineq_ << diff_, -diff_;
}

CondensedQp CondensedMpc::build(const Vec& z0, const Vec& u_prev) const {
  const auto n_h = static_cast<Eigen::Index>(cfg_.horizon);
  const Eigen::Index q = model_.input_dim();
  if (z0.size() != model_.lifted_dim() || u_prev.size() != q) {
    throw Error(ErrorKind::InvalidInput, "condense_qp: initial lifted state or previous input has wrong size");
  }
  Vec rbar(r_out_.size() * n_h);
  for (Eigen::Index k = 0; k < n_h; ++k) rbar.segment(k * r_out_.size(), r_out_.size()) = r_out_;
  const Vec free_resp = phi_ * z0 - rbar;
  Vec e_prev = Vec::Zero(n_h * q);
  e_prev.head(q) = u_prev;

  CondensedQp out;
  out.qp.h = hessian_;
  out.qp.g = 2.0 * (gamma_.transpose() * (qbar_ * free_resp) - cfg_.rdu * (diff_.transpose() * e_prev));
  out.qp.lb = Vec::Constant(n_h * q, cfg_.u_min);
  out.qp.ub = Vec::Constant(n_h * q, cfg_.u_max);
  out.qp.a_ineq = a_ineq_;
  out.qp.b_ineq.resize(2 * n_h * q);
  out.qp.b_ineq << Vec::Constant(n_h * q, cfg_.du_max) + e_prev, Vec::Constant(n_h * q, -cfg_.du_min) - e_prev;

  const Vec y0 = model_.c * z0 - r_out_;
  out.constant = y0.dot(q_out_ * y0) + free_resp.dot(qbar_ * free_resp) + cfg_.rdu * u_prev.squaredNorm();
  return out;
}

CondensedQp condense_qp(const LinearControlModel& model, const Vec& z0, const Vec& u_prev, const MpcConfig& cfg) {
  return CondensedMpc(model, cfg).build(z0, u_prev);
}

MpcController::MpcController(const LinearControlModel& model, const MpcConfig& cfg, QpOptions qp_opts)
    : condensed_(model, cfg), qp_opts_(qp_opts) {}

MpcStepResult MpcController::step(const History& measured, const Vec& u_prev) {
  const auto& model = condensed_.model();
  const auto& cfg = condensed_.config();
  const Eigen::Index q = model.input_dim();
  const auto n_h = static_cast<Eigen::Index>(cfg.horizon);

  // The history's latest input slot must be the applied one.
  History h = measured;
  if (model.input_history() > 0) {
    if (h.inputs.empty()) throw Error(ErrorKind::MissingHistory, "mpc_step: delay model needs past inputs");
    h.inputs.front() = u_prev;
  }
  const CondensedQp cq = condensed_.build(model.lift(h), u_prev);

  Vec start;
  if (warm_.size() == n_h * q) {
    start.resize(n_h * q);
    start.head((n_h - 1) * q) = warm_.tail((n_h - 1) * q);
    start.tail(q) = warm_.tail(q);
  }
  const QpResult res = solve_qp(cq.qp, start, qp_opts_);
  warm_ = res.x;

  MpcStepResult out;
  out.stats.iterations = res.iterations;
  out.stats.kkt_residual = res.kkt_residual;
  out.stats.warm_start_feasible = res.warm_start_feasible;
  for (Eigen::Index k = 0; k < n_h; ++k) out.sequence.push_back(res.x.segment(k * q, q));

  // Remove rounding-level excursions so the applied input meets every bound exactly.
  Vec u0 = res.x.head(q);
  const double lo_tol = 1e-7 * (1.0 + std::abs(cfg.u_min) + std::abs(cfg.du_min));
  const double hi_tol = 1e-7 * (1.0 + std::abs(cfg.u_max) + std::abs(cfg.du_max));
  for (Eigen::Index i = 0; i < q; ++i) {
    const double lo = std::max(cfg.u_min, u_prev(i) + cfg.du_min);
    const double hi = std::min(cfg.u_max, u_prev(i) + cfg.du_max);
    if (u0(i) < lo - lo_tol || u0(i) > hi + hi_tol) {
      std::ostringstream os;
      os << "mpc_step: solver returned u0 = " << u0(i) << " outside [" << lo << ", " << hi << "]";
      throw Error(ErrorKind::Convergence, os.str());
    }
    u0(i) = std::clamp(u0(i), lo, hi);
  }
  out.sequence.front() = u0;
  out.u0 = u0;
  return out;
}

MpcStepResult mpc_step(const LinearControlModel& model, const History& measured, const Vec& u_prev, const MpcConfig& cfg) {
  MpcController ctrl(model, cfg);
  return ctrl.step(measured, u_prev);
}

ClosedLoopResult closed_loop_run(const ControlSystem& plant, const LinearControlModel& model, const MpcConfig& cfg,
                                 const Vec& x0, double t_end, double dt) {
  if (std::abs(dt - model.dt) > 1e-12 * std::max(1.0, model.dt)) {
    throw Error(ErrorKind::InvalidInput, "closed_loop_run: dt must equal the model sampling time");
  }
  if (!(t_end > 0.0)) throw Error(ErrorKind::InvalidInput, "closed_loop_run: t_end must be positive");
  if (cfg.q.rows() != static_cast<Eigen::Index>(plant.state_dim)) {
    throw Error(ErrorKind::InvalidInput, "closed_loop_run: state weight must match the plant state");
  }
  MpcController ctrl(model, cfg);
  const LinearControlModel& m = ctrl.condensed().model();
  const std::size_t steps = step_count(t_end, dt);
  const auto q = static_cast<Eigen::Index>(plant.input_dim);
  const std::size_t need_states = m.state_history() + 1;
  const std::size_t need_inputs = m.input_history();

  ClosedLoopResult res;
  res.trajectory.times.push_back(0.0);
  res.trajectory.states.push_back(x0);
  History hist{{x0}, {}};
  Vec u_prev = Vec::Zero(q);
  double total = 0.0;

  for (std::size_t k = 0; k < steps; ++k) {
    const Vec x = res.trajectory.states.back();
    const double t = static_cast<double>(k) * dt;
    Vec u;
    MpcSolveStats stats;
    if (hist.states.size() < need_states || hist.inputs.size() < need_inputs) {
      u = Vec::Zero(q);
      ++res.warmup_steps;
    } else {
      try {
        MpcStepResult sr = ctrl.step(hist, u_prev);
        u = sr.u0;
        stats = sr.stats;
      } catch (const Error& e) {
        throw ClosedLoopError(e.kind(), "closed_loop_run: step " + std::to_string(k) + ": " + e.what(), k, res);
      }
    }
    const Vec dx = x - cfg.reference;
    const double stage = dx.dot(cfg.q * dx) + cfg.ru * u.squaredNorm() + cfg.rdu * (u - u_prev).squaredNorm();
    total += stage;

    Vec next;
    try {
      next = rk4_step(plant, x, u, t, dt);
    } catch (const Error& e) {
      throw ClosedLoopError(ErrorKind::Divergence, std::string("closed_loop_run: ") + e.what(), k, res);
    }
    res.stage_costs.push_back(stage);
    res.cumulative_cost.push_back(total);
    res.solve_stats.push_back(stats);
    res.trajectory.inputs.push_back(u);
    res.trajectory.times.push_back(static_cast<double>(k + 1) * dt);
    res.trajectory.states.push_back(next);
    if (next.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw ClosedLoopError(ErrorKind::Divergence, "closed_loop_run: plant diverged at step " + std::to_string(k), k, res);
    }

    hist.states.insert(hist.states.begin(), next);
    if (hist.states.size() > need_states) hist.states.pop_back();
    hist.inputs.insert(hist.inputs.begin(), u);
    if (hist.inputs.size() > std::max<std::size_t>(need_inputs, 1)) hist.inputs.pop_back();
    u_prev = u;
  }
  return res;
}

}  // namespace koopmpc
