#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>

#include "koopmpc/errors.hpp"

namespace koopmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kDefaultSvdTol = 1e-10;

struct SvdFactors {
  Mat u;
  Vec s;  // nonincreasing
  Mat vt;
  std::size_t rank = 0;
};

// Thin SVD of m; rank counts s[i] > tol * s[0].
SvdFactors truncated_svd(const Mat& m, double tol = kDefaultSvdTol);

// Minimum-norm minimizer of ||a X - b||_F, singular values below tol * s_max dropped.
Mat lstsq_min_norm(const Mat& a, const Mat& b, double tol = kDefaultSvdTol);

struct StationaryOptions {
  std::size_t max_iterations = 100000;
  double tolerance = 1e-10;
  double stochastic_tol = 1e-10;
  // Iterates with damping * I + (1 - damping) * P; 0.5 removes period-2 cycles.
  // Zero gives the plain power iteration.
  double damping = 0.5;
};

// Fixed point of a column-stochastic matrix by damped power iteration.
// An empty start means uniform.
Vec stationary_vector(const Mat& p, const Vec& start = Vec(), const StationaryOptions& opts = {});

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, Vec best)
      : Error(ErrorKind::Convergence, what), residual_(residual), best_(std::move(best)) {}
  double residual() const noexcept { return residual_; }
  const Vec& best() const noexcept { return best_; }

 private:
  double residual_;
  Vec best_;
};

// minimize 0.5 x'Hx + g'x  s.t.  a_ineq x <= b_ineq,  lb <= x <= ub.
// Empty a_ineq means no general rows; empty lb/ub mean unbounded. Infinite
// bound entries are skipped.
struct QpProblem {
  Mat h;
  Vec g;
  Mat a_ineq;
  Vec b_ineq;
  Vec lb;
  Vec ub;

  Eigen::Index size() const { return g.size(); }
  double objective(const Vec& x) const { return 0.5 * x.dot(h * x) + g.dot(x); }
  void validate() const;
};

struct QpOptions {
  double tol = 1e-9;
  std::size_t max_iterations = 500;
};

struct QpResult {
  Vec x;
  Vec multipliers;  // one per row of the expanded system: a_ineq rows, then ub rows, then lb rows
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool warm_start_feasible = false;
};

// Primal active-set method with a null-space step; phase one finds a feasible
// point from x0 when x0 itself violates a constraint.
QpResult solve_qp(const QpProblem& q, const Vec& x0 = Vec(), const QpOptions& opts = {});

// Stationarity, primal feasibility, dual feasibility and complementarity, max-norm.
double kkt_residual(const QpProblem& q, const Vec& x, const Vec& multipliers);

bool all_finite(const Mat& m);

}  // namespace koopmpc
