#include "koopmpc/numerics.hpp"

#include <cmath>
#include <sstream>

namespace koopmpc {

bool all_finite(const Mat& m) { return m.allFinite(); }

SvdFactors truncated_svd(const Mat& m, double tol) {
  if (m.size() == 0) throw Error(ErrorKind::InvalidInput, "truncated_svd: empty matrix");
  if (!m.allFinite()) throw Error(ErrorKind::InvalidInput, "truncated_svd: non-finite entry");
  if (!(tol >= 0.0)) throw Error(ErrorKind::InvalidInput, "truncated_svd: negative tolerance");

  Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdFactors out;
  out.u = svd.matrixU();
  out.s = svd.singularValues();
  out.vt = svd.matrixV().transpose();
  const double cutoff = out.s.size() > 0 ? tol * out.s(0) : 0.0;
  for (Eigen::Index i = 0; i < out.s.size(); ++i) {
    if (out.s(i) > cutoff) ++out.rank;
  }
  return out;
}

Mat lstsq_min_norm(const Mat& a, const Mat& b, double tol) {
  if (a.rows() != b.rows()) {
    std::ostringstream os;
    os << "lstsq_min_norm: a has " << a.rows() << " rows, b has " << b.rows();
    throw Error(ErrorKind::InvalidInput, os.str());
  }
  if (a.size() == 0) return Mat::Zero(a.cols(), b.cols());
  const SvdFactors f = truncated_svd(a, tol);
  const auto r = static_cast<Eigen::Index>(f.rank);
  if (r == 0) return Mat::Zero(a.cols(), b.cols());
  // X = V_r S_r^{-1} U_r^T b
  Mat utb = f.u.leftCols(r).transpose() * b;
  utb.array().colwise() /= f.s.head(r).array();
  return f.vt.topRows(r).transpose() * utb;
}

Vec stationary_vector(const Mat& p, const Vec& start, const StationaryOptions& opts) {
  if (p.rows() != p.cols() || p.rows() == 0) {
    throw Error(ErrorKind::InvalidInput, "stationary_vector: matrix must be square and nonempty");
  }
  if (!p.allFinite() || (p.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidInput, "stationary_vector: entries must be finite and nonnegative");
  }
  const Eigen::Index n = p.rows();
  const Vec col_sums = p.colwise().sum().transpose();
  if ((col_sums.array() - 1.0).abs().maxCoeff() > opts.stochastic_tol) {
    throw Error(ErrorKind::InvalidInput, "stationary_vector: matrix is not column-stochastic");
  }

  Vec pi = start.size() == 0 ? Vec::Constant(n, 1.0 / static_cast<double>(n)) : start;
  if (pi.size() != n || (pi.array() < 0.0).any() || pi.sum() <= 0.0) {
    throw Error(ErrorKind::InvalidInput, "stationary_vector: start must be a nonnegative vector of matching size");
  }
  pi /= pi.sum();

  const double damping = opts.damping;
  double residual = (p * pi - pi).lpNorm<1>();
  for (std::size_t it = 0; it < opts.max_iterations && residual > opts.tolerance; ++it) {
    Vec next = damping * pi + (1.0 - damping) * (p * pi);
    next /= next.sum();
    pi = std::move(next);
    residual = (p * pi - pi).lpNorm<1>();
  }
  if (residual > opts.tolerance) {
    std::ostringstream os;
    os << "stationary_vector: residual " << residual << " after " << opts.max_iterations << " iterations";
    throw ConvergenceError(os.str(), residual, pi);
  }
  return pi;
}

}  // namespace koopmpc
