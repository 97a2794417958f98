#include <algorithm>
#include <cmath>
#include <sstream>

#include "koopmpc/sysid.hpp"

namespace koopmpc {

namespace {

// Right singular vector of the smallest singular value.
Vec smallest_right_singular(const Mat& m) {
  // Full V so that wide matrices still expose a null-space direction.
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
  return svd.matrixV().col(m.cols() - 1);
}

void fix_sign(Vec& xi) {
  Eigen::Index imax = 0;
  xi.cwiseAbs().maxCoeff(&imax);
  if (xi(imax) < 0.0) xi = -xi;
}

Vec solve_on_support(const Mat& m, const std::vector<std::size_t>& support) {
  Mat sub(m.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(support[k]));
  const Vec local = smallest_right_singular(sub);
  Vec xi = Vec::Zero(m.cols());
  for (std::size_t k = 0; k < support.size(); ++k) xi(static_cast<Eigen::Index>(support[k])) = local(static_cast<Eigen::Index>(k));
  return xi;
}

}  // namespace

EigenfunctionEntry identify_eigenfunctions(const Mat& x, const Mat& x_dot, const Dictionary& theta, double lambda,
                                           const EigenSearchOptions& opts) {
  if (x.rows() != static_cast<Eigen::Index>(theta.input_dim()) || x_dot.rows() != x.rows() || x_dot.cols() != x.cols()) {
    throw Error(ErrorKind::InvalidInput, "identify_eigenfunctions: state/derivative dimensions do not match the library");
  }
  const auto p = static_cast<Eigen::Index>(theta.size());
  if (p == 0) throw Error(ErrorKind::InvalidInput, "identify_eigenfunctions: empty library");
  if (x.cols() == 0) throw Error(ErrorKind::InsufficientData, "identify_eigenfunctions: no samples");

  // Row k: x_dot_k . grad(theta)(x_k) - lambda theta(x_k)
  Mat m(x.cols(), p);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const Vec xk = x.col(k);
    m.row(k) = (theta.jacobian(xk) * x_dot.col(k) - lambda * theta.eval(xk)).transpose();
  }
  if (!m.allFinite()) throw Error(ErrorKind::InvalidInput, "identify_eigenfunctions: non-finite library evaluation");

  const double sigma_max = Eigen::JacobiSVD<Mat>(m).singularValues()(0);
  EigenfunctionEntry entry;
  entry.lambda = lambda;
  Vec xi = smallest_right_singular(m);
  std::vector<std::size_t> support;
  for (Eigen::Index i = 0; i < p; ++i) support.push_back(static_cast<std::size_t>(i));

  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const double cut = opts.sparsity_threshold * xi.cwiseAbs().maxCoeff();
    std::vector<std::size_t> next;
    for (auto i : support) {
      if (std::abs(xi(static_cast<Eigen::Index>(i))) >= cut) next.push_back(i);
    }
    if (next.size() == support.size()) break;
    Vec truncated = Vec::Zero(p);
    for (auto i : next) truncated(static_cast<Eigen::Index>(i)) = xi(static_cast<Eigen::Index>(i));
    truncated.normalize();
    ThresholdStep step;
    step.support_size = next.size();
    step.truncated_residual = (m * truncated).norm();
    xi = solve_on_support(m, next);
    step.resolved_residual = (m * xi).norm();
    entry.history.push_back(step);
    support = std::move(next);
  }

  fix_sign(xi);
  entry.xi = xi;
  entry.support = support;
  entry.residual = (m * xi).norm() / xi.norm();
  entry.relative_residual = sigma_max > 0.0 ? entry.residual / sigma_max : entry.residual;
  if (entry.relative_residual > opts.max_relative_residual) {
    std::ostringstream os;
    os << "identify_eigenfunctions: lambda = " << lambda << " leaves relative residual " << entry.relative_residual
       << " (bound " << opts.max_relative_residual << ")";
    throw NoEigenfunctionError(os.str(), entry.residual);
  }
  return entry;
}

Vec EigenfunctionModel::eval(const Vec& x) const {
  const Vec t = theta.eval(x);
  Vec z(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t j = 0; j < entries.size(); ++j) z(static_cast<Eigen::Index>(j)) = t.dot(entries[j].xi);
  return z;
}

Vec EigenfunctionModel::lambdas() const {
  Vec l(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t j = 0; j < entries.size(); ++j) l(static_cast<Eigen::Index>(j)) = entries[j].lambda;
  return l;
}

Mat EigenfunctionModel::coupling(const Vec& x, const Mat& g_of_x) const {
  const Mat jac = theta.jacobian(x);  // p x n
  Mat out(static_cast<Eigen::Index>(entries.size()), g_of_x.cols());
  for (std::size_t j = 0; j < entries.size(); ++j) {
    const Vec grad_phi = jac.transpose() * entries[j].xi;
    out.row(static_cast<Eigen::Index>(j)) = (grad_phi.transpose() * g_of_x);
  }
  return out;
}

Mat analytic_derivatives(const ControlSystem& sys, const SampleSet& data) {
  Mat out(data.x.rows(), data.size());
  for (Eigen::Index j = 0; j < data.size(); ++j) {
    const double t = static_cast<std::size_t>(j) < data.times.size() ? data.times[static_cast<std::size_t>(j)] : 0.0;
    out.col(j) = sys.rhs(data.x.col(j), data.u.col(j), t);
  }
  return out;
}

Mat finite_difference_derivatives(const Trajectory& traj) {
  const std::size_t len = traj.states.size();
  if (len < 2) throw Error(ErrorKind::InsufficientData, "finite_difference_derivatives: need at least two samples");
  Mat out(traj.states.front().size(), static_cast<Eigen::Index>(len));
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = k + 1 == len ? k : k + 1;
    out.col(static_cast<Eigen::Index>(k)) = (traj.states[hi] - traj.states[lo]) / (traj.times[hi] - traj.times[lo]);
  }
  return out;
}

}  // namespace koopmpc
