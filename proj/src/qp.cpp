#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "koopmpc/numerics.hpp"

namespace koopmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// All constraints as rows of g_rows x <= h_rows. Disabled rows (infinite
// bounds) stay in place with enabled = false so multiplier indices are stable.
struct RowSystem {
  Mat g_rows;
  Vec h_rows;
  std::vector<bool> enabled;
};

RowSystem expand_rows(const QpProblem& q) {
  const Eigen::Index n = q.size();
  const Eigen::Index m_ineq = q.a_ineq.rows();
  const Eigen::Index m = m_ineq + 2 * n;
  RowSystem rs;
  rs.g_rows = Mat::Zero(m, n);
  rs.h_rows = Vec::Zero(m);
  rs.enabled.assign(static_cast<std::size_t>(m), false);
  for (Eigen::Index i = 0; i < m_ineq; ++i) {
    rs.g_rows.row(i) = q.a_ineq.row(i);
    rs.h_rows(i) = q.b_ineq(i);
    rs.enabled[static_cast<std::size_t>(i)] = std::isfinite(q.b_ineq(i));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index up = m_ineq + i;
    const Eigen::Index lo = m_ineq + n + i;
    rs.g_rows(up, i) = 1.0;
    rs.g_rows(lo, i) = -1.0;
    if (q.ub.size() == n && std::isfinite(q.ub(i))) {
      rs.h_rows(up) = q.ub(i);
      rs.enabled[static_cast<std::size_t>(up)] = true;
    }
    if (q.lb.size() == n && std::isfinite(q.lb(i))) {
      rs.h_rows(lo) = -q.lb(i);
      rs.enabled[static_cast<std::size_t>(lo)] = true;
    }
  }
  return rs;
}

struct ActiveSetOutcome {
  Vec x;
  Vec lambda;
  std::size_t iterations = 0;
  bool converged = false;
};

Mat null_space(const Mat& aw, Eigen::Index n) {
  if (aw.rows() == 0) return Mat::Identity(n, n);
  Eigen::HouseholderQR<Mat> qr(aw.transpose());
  const Mat q_full = qr.householderQ() * Mat::Identity(n, n);
  return q_full.rightCols(n - aw.rows());
}

bool independent_of(const Mat& aw, const Eigen::RowVectorXd& row) {
  if (aw.rows() == 0) return row.norm() > 0.0;
  if (aw.rows() >= aw.cols()) return false;
  Mat stacked(aw.rows() + 1, aw.cols());
  stacked << aw, row;
  Eigen::ColPivHouseholderQR<Mat> qr(stacked.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == stacked.rows();
}

// Primal active-set iteration from a feasible x. The equality-constrained
// subproblem is solved in the null space of the working rows; directions of
// zero reduced curvature are followed to the nearest blocking row.
ActiveSetOutcome active_set(const Mat& h, const Vec& g, const RowSystem& rs, Vec x,
                            std::vector<Eigen::Index> working, double tol,
                            std::size_t max_iterations) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = rs.g_rows.rows();
  const double h_scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  const double step_tol = 1e-13;

  ActiveSetOutcome out;
  std::vector<bool> in_working(static_cast<std::size_t>(m), false);
  for (auto w : working) in_working[static_cast<std::size_t>(w)] = true;

  for (std::size_t it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    const Vec grad = h * x + g;
    Mat aw(static_cast<Eigen::Index>(working.size()), n);
    for (std::size_t k = 0; k < working.size(); ++k) aw.row(static_cast<Eigen::Index>(k)) = rs.g_rows.row(working[k]);

    Vec p = Vec::Zero(n);
    bool unbounded_direction = false;
    if (aw.rows() < n) {
      const Mat z = null_space(aw, n);
      const Mat hr = z.transpose() * h * z;
      const Vec gr = z.transpose() * grad;
      Eigen::SelfAdjointEigenSolver<Mat> eig(hr);
      const Vec& lam = eig.eigenvalues();
      const Mat& v = eig.eigenvectors();
      const double curv_tol = 1e-11 * h_scale;
      const Vec c = v.transpose() * gr;
      Vec newton = Vec::Zero(c.size());
      Vec flat = Vec::Zero(c.size());
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        if (lam(i) > curv_tol) {
          newton(i) = -c(i) / lam(i);
        } else {
          flat(i) = -c(i);
        }
      }
      const double grad_scale = 1.0 + grad.cwiseAbs().maxCoeff();
      if (flat.cwiseAbs().maxCoeff() > 1e-12 * grad_scale) {
        unbounded_direction = true;
        p = z * (v * flat);
      } else {
        p = z * (v * newton);
      }
    }

    if (!unbounded_direction && p.cwiseAbs().maxCoeff() <= step_tol * (1.0 + x.cwiseAbs().maxCoeff())) {
      // Stationary on the working set: check multiplier signs.
      Vec lw = Vec::Zero(aw.rows());
      if (aw.rows() > 0) {
        lw = aw.transpose().colPivHouseholderQr().solve(-grad);
      }
      Eigen::Index worst = -1;
      double most_negative = -tol;
      for (Eigen::Index k = 0; k < lw.size(); ++k) {
        if (lw(k) < most_negative) {
          most_negative = lw(k);
          worst = k;
        }
      }
      if (worst < 0) {
        out.x = x;
        out.lambda = Vec::Zero(m);
        for (std::size_t k = 0; k < working.size(); ++k) {
          out.lambda(working[k]) = std::max(0.0, lw(static_cast<Eigen::Index>(k)));
        }
        out.converged = true;
        return out;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(worst)])] = false;
      working.erase(working.begin() + worst);
      continue;
    }

    double alpha = unbounded_direction ? kInf : 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!rs.enabled[static_cast<std::size_t>(i)] || in_working[static_cast<std::size_t>(i)]) continue;
      const double gp = rs.g_rows.row(i).dot(p);
      if (gp <= 1e-14 * (1.0 + p.cwiseAbs().maxCoeff())) continue;
      const double slack = std::max(0.0, rs.h_rows(i) - rs.g_rows.row(i).dot(x));
      const double a = slack / gp;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    if (!std::isfinite(alpha)) {
      throw Error(ErrorKind::InvalidInput, "solve_qp: objective unbounded below on the feasible set");
    }
    x += alpha * p;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = true;
    }
  }
  out.x = x;
  out.lambda = Vec::Zero(m);
  out.converged = false;
  return out;
}

std::vector<Eigen::Index> initial_working_set(const RowSystem& rs, const Vec& x, double tol) {
  std::vector<Eigen::Index> working;
  Mat aw(0, x.size());
  for (Eigen::Index i = 0; i < rs.g_rows.rows(); ++i) {
    if (!rs.enabled[static_cast<std::size_t>(i)]) continue;
    const double slack = rs.h_rows(i) - rs.g_rows.row(i).dot(x);
    if (std::abs(slack) > tol) continue;
    if (!independent_of(aw, rs.g_rows.row(i))) continue;
    aw.conservativeResize(aw.rows() + 1, Eigen::NoChange);
    aw.row(aw.rows() - 1) = rs.g_rows.row(i);
    working.push_back(i);
  }
  return working;
}

double max_violation(const RowSystem& rs, const Vec& x) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < rs.g_rows.rows(); ++i) {
    if (!rs.enabled[static_cast<std::size_t>(i)]) continue;
    v = std::max(v, rs.g_rows.row(i).dot(x) - rs.h_rows(i));
  }
  return v;
}

// Phase one: minimize s over (x, s) with general rows relaxed by s and box
// rows kept hard. Returns a point satisfying every row.
Vec find_feasible(const QpProblem& q, const RowSystem& rs, const Vec& x_box, double tol,
                  std::size_t max_iterations) {
  const Eigen::Index n = q.size();
  const Eigen::Index m_ineq = q.a_ineq.rows();
  const Eigen::Index m = rs.g_rows.rows();

  RowSystem aug;
  aug.g_rows = Mat::Zero(m + 1, n + 1);
  aug.h_rows = Vec::Zero(m + 1);
  aug.enabled = rs.enabled;
  aug.enabled.push_back(true);
  aug.g_rows.topLeftCorner(m, n) = rs.g_rows;
  aug.h_rows.head(m) = rs.h_rows;
  for (Eigen::Index i = 0; i < m_ineq; ++i) aug.g_rows(i, n) = -1.0;
  aug.g_rows(m, n) = -1.0;  // s >= 0

  Vec xs(n + 1);
  xs.head(n) = x_box;
  xs(n) = max_violation(rs, x_box);

  const Mat h_aug = Mat::Zero(n + 1, n + 1);
  Vec g_aug = Vec::Zero(n + 1);
  g_aug(n) = 1.0;

  const auto working = initial_working_set(aug, xs, 1e-12);
  ActiveSetOutcome res = active_set(h_aug, g_aug, aug, xs, working, 1e-12, max_iterations);
  const double feas_tol = tol * (1.0 + rs.h_rows.cwiseAbs().maxCoeff());
  if (!res.converged) {
    throw ConvergenceError("solve_qp: phase one did not converge", res.x(n), res.x.head(n));
  }
  if (res.x(n) > feas_tol) {
    std::ostringstream os;
    os << "solve_qp: constraints cannot be satisfied (minimum violation " << res.x(n) << ")";
    throw Error(ErrorKind::Infeasible, os.str());
  }
  return res.x.head(n);
}

}  // namespace

void QpProblem::validate() const {
  const Eigen::Index n = g.size();
  if (h.rows() != n || h.cols() != n) throw Error(ErrorKind::InvalidInput, "QpProblem: Hessian size mismatch");
  if (a_ineq.rows() != b_ineq.size() || (a_ineq.rows() > 0 && a_ineq.cols() != n)) {
    throw Error(ErrorKind::InvalidInput, "QpProblem: inequality block size mismatch");
  }
  if ((lb.size() != 0 && lb.size() != n) || (ub.size() != 0 && ub.size() != n)) {
    throw Error(ErrorKind::InvalidInput, "QpProblem: bound size mismatch");
  }
  if (!h.allFinite() || !g.allFinite()) throw Error(ErrorKind::InvalidInput, "QpProblem: non-finite objective");
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, h.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::InvalidInput, "QpProblem: Hessian not symmetric");
  }
  if (lb.size() == n && ub.size() == n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lb(i) > ub(i)) throw Error(ErrorKind::Infeasible, "QpProblem: lower bound exceeds upper bound");
    }
  }
}

double kkt_residual(const QpProblem& q, const Vec& x, const Vec& multipliers) {
  const RowSystem rs = expand_rows(q);
  const Vec lambda = multipliers.size() == rs.g_rows.rows() ? multipliers : Vec::Zero(rs.g_rows.rows());
  const Vec grad = q.h * x + q.g;
  const double scale = 1.0 + std::max(grad.cwiseAbs().maxCoeff(), q.g.size() ? q.g.cwiseAbs().maxCoeff() : 0.0);
  double r = (grad + rs.g_rows.transpose() * lambda).cwiseAbs().maxCoeff() / scale;
  for (Eigen::Index i = 0; i < rs.g_rows.rows(); ++i) {
    if (!rs.enabled[static_cast<std::size_t>(i)]) {
      r = std::max(r, std::abs(lambda(i)));
      continue;
    }
    const double slack = rs.h_rows(i) - rs.g_rows.row(i).dot(x);
    r = std::max(r, -slack);
    r = std::max(r, -lambda(i));
    r = std::max(r, std::abs(lambda(i) * slack) / scale);
  }
  return std::max(r, 0.0);
}

QpResult solve_qp(const QpProblem& q, const Vec& x0, const QpOptions& opts) {
  q.validate();
  const Eigen::Index n = q.size();
  const RowSystem rs = expand_rows(q);

  Vec x = x0.size() == n ? x0 : Vec::Zero(n);
  if (!x.allFinite()) x.setZero();
  QpResult result;
  const double feas_tol = 1e-12 * (1.0 + rs.h_rows.cwiseAbs().maxCoeff());
  result.warm_start_feasible = x0.size() == n && max_violation(rs, x0) <= feas_tol;

  if (q.lb.size() == n) x = x.cwiseMax(q.lb);
  if (q.ub.size() == n) x = x.cwiseMin(q.ub);
  if (max_violation(rs, x) > feas_tol) {
    x = find_feasible(q, rs, x, opts.tol, opts.max_iterations);
  }

  const auto working = initial_working_set(rs, x, feas_tol);
  ActiveSetOutcome res = active_set(q.h, q.g, rs, x, working, opts.tol * 1e-3, opts.max_iterations);
  if (!res.converged) {
    std::ostringstream os;
    os << "solve_qp: no convergence in " << opts.max_iterations << " iterations";
    throw ConvergenceError(os.str(), kkt_residual(q, res.x, res.lambda), res.x);
  }
  result.x = res.x;
  result.multipliers = res.lambda;
  result.iterations = res.iterations;
  result.kkt_residual = kkt_residual(q, result.x, result.multipliers);
  return result;
}

}  // namespace koopmpc
