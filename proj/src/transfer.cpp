#include "koopmpc/transfer.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "koopmpc/parallel.hpp"

namespace koopmpc {

std::size_t BoxPartition::size() const {
  std::size_t d = 1;
  for (auto c : counts) d *= c;
  return d;
}

void BoxPartition::validate() const {
  const auto n = static_cast<Eigen::Index>(counts.size());
  if (n == 0 || lo.size() != n || hi.size() != n) throw Error(ErrorKind::InvalidInput, "BoxPartition: dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(hi(i) > lo(i)) || counts[static_cast<std::size_t>(i)] == 0) {
      throw Error(ErrorKind::InvalidInput, "BoxPartition: empty extent or zero count");
    }
  }
}

Box BoxPartition::box(std::size_t index) const {
  const auto n = static_cast<Eigen::Index>(counts.size());
  Box b{Vec(n), Vec(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t c = counts[static_cast<std::size_t>(i)];
    const std::size_t k = index % c;
    index /= c;
    const double w = (hi(i) - lo(i)) / static_cast<double>(c);
    b.lo(i) = lo(i) + w * static_cast<double>(k);
    b.hi(i) = k + 1 == c ? hi(i) : lo(i) + w * static_cast<double>(k + 1);
  }
  return b;
}

std::optional<std::size_t> locate(const BoxPartition& part, const Vec& x) {
  const auto n = static_cast<Eigen::Index>(part.counts.size());
  if (x.size() != n) return std::nullopt;
  std::size_t index = 0;
  std::size_t stride = 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = x(i);
    if (!(v >= part.lo(i) && v <= part.hi(i))) return std::nullopt;
    const std::size_t c = part.counts[static_cast<std::size_t>(i)];
    const double w = (part.hi(i) - part.lo(i)) / static_cast<double>(c);
    auto k = static_cast<std::size_t>(std::floor((v - part.lo(i)) / w));
    if (k >= c) k = c - 1;
    // Match the face coordinates used by BoxPartition::box.
    if (k > 0 && v < part.lo(i) + w * static_cast<double>(k)) --k;
    if (k + 1 < c && v >= part.lo(i) + w * static_cast<double>(k + 1)) ++k;
    index += k * stride;
    stride *= c;
  }
  return index;
}

long ControlledChain::find_level(const Vec& u, double tol) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].size() == u.size() && (levels[i] - u).cwiseAbs().maxCoeff() <= tol) return static_cast<long>(i);
  }
  return -1;
}

TransitionMatrix estimate_transition(const FlowMap& flow_map, const BoxPartition& part, const Vec& level, double tau,
                                     const UlamOptions& opts) {
  part.validate();
  if (opts.samples_per_box < 1) throw Error(ErrorKind::InvalidInput, "estimate_transition: samples_per_box must be at least 1");
  const std::size_t d = part.size();
  const auto n = static_cast<Eigen::Index>(part.dim());

  // landing[j][k]: target state of sample k from box j (d = outside)
  std::vector<std::vector<std::size_t>> landing(d);
  parallel_for(d, opts.parallel, [&](std::size_t j) {
    std::mt19937_64 rng(derive_seed(opts.seed, j));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Box b = part.box(j);
    auto& dst = landing[j];
    dst.reserve(opts.samples_per_box);
    for (std::size_t k = 0; k < opts.samples_per_box; ++k) {
      Vec x(n);
      for (Eigen::Index i = 0; i < n; ++i) x(i) = b.lo(i) + (b.hi(i) - b.lo(i)) * unit(rng);
      Vec y;
      try {
        y = flow_map(x, level);
      } catch (const Error&) {
        dst.push_back(d);
        continue;
      }
      const auto target = locate(part, y);
      dst.push_back(target ? *target : d);
    }
  });

  TransitionMatrix tm;
  tm.tau = tau;
  tm.p = Mat::Zero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(d + 1));
  tm.counts.assign(d, opts.samples_per_box);
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t escaped = 0;
    for (auto target : landing[j]) {
      tm.p(static_cast<Eigen::Index>(target), static_cast<Eigen::Index>(j)) += 1.0;
      if (target == d) ++escaped;
    }
    tm.p.col(static_cast<Eigen::Index>(j)) /= static_cast<double>(opts.samples_per_box);
    if (escaped == opts.samples_per_box) tm.escaped_columns.push_back(j);
  }
  tm.p(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) = 1.0;
  return tm;
}

ControlledChain estimate_controlled_transition(const FlowMap& flow_map, const BoxPartition& part,
                                               const std::vector<Vec>& levels, double tau, const UlamOptions& opts) {
  if (levels.empty()) throw Error(ErrorKind::InvalidInput, "estimate_controlled_transition: no input levels");
  ControlledChain chain;
  chain.levels = levels;
  chain.partition = part;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    // Same sample points for every level: only the flow differs.
    chain.mats.push_back(estimate_transition(flow_map, part, levels[l], tau, opts));
  }
  return chain;
}

ControlledChain estimate_controlled_transition(const ControlSystem& sys, const BoxPartition& part,
                                               const std::vector<Vec>& levels, double tau, const UlamOptions& opts,
                                               double max_dt) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidInput, "estimate_controlled_transition: tau must be positive");
  FlowMap f = [&sys, tau, max_dt](const Vec& x, const Vec& u) {
    Vec y = flow(sys, x, u, tau, max_dt);
    if (y.cwiseAbs().maxCoeff() > kDivergenceBound) throw Error(ErrorKind::Divergence, "flow left the bounded region");
    return y;
  };
  return estimate_controlled_transition(f, part, levels, tau, opts);
}

TransitionMatrix transition_from_samples(const BoxPartition& part, const Mat& x, const Mat& xp, double tau) {
  part.validate();
  if (x.rows() != static_cast<Eigen::Index>(part.dim()) || xp.rows() != x.rows() || xp.cols() != x.cols()) {
    throw Error(ErrorKind::InvalidInput, "transition_from_samples: sample dimensions do not match the partition");
  }
  const std::size_t d = part.size();
  TransitionMatrix tm;
  tm.tau = tau;
  tm.p = Mat::Zero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(d + 1));
  tm.counts.assign(d, 0);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const auto src = locate(part, x.col(k));
    if (!src) continue;
    const auto dst = locate(part, xp.col(k));
    tm.p(static_cast<Eigen::Index>(dst ? *dst : d), static_cast<Eigen::Index>(*src)) += 1.0;
    ++tm.counts[*src];
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (tm.counts[j] == 0) continue;
    tm.p.col(static_cast<Eigen::Index>(j)) /= static_cast<double>(tm.counts[j]);
    if (tm.p(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) == 1.0) tm.escaped_columns.push_back(j);
  }
  tm.p(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) = 1.0;
  return tm;
}

std::vector<Vec> propagate_density(const ControlledChain& chain, const Vec& p0, const std::vector<Vec>& input_sequence) {
  if (chain.mats.empty()) throw Error(ErrorKind::InvalidInput, "propagate_density: empty chain");
  if (p0.size() != chain.mats.front().p.rows()) throw Error(ErrorKind::InvalidInput, "propagate_density: density has wrong length");
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < input_sequence.size(); ++k) {
    const long l = chain.find_level(input_sequence[k]);
    if (l < 0) {
      std::ostringstream os;
      os << "propagate_density: input (" << input_sequence[k].transpose() << ") at step " << k << " is not a chain level";
      throw Error(ErrorKind::UnknownLevel, os.str());
    }
    idx.push_back(static_cast<std::size_t>(l));
  }
  std::vector<Vec> out{p0};
  out.reserve(idx.size() + 1);
  for (auto l : idx) {
    Vec next = chain.mats[l].p * out.back();
    const double s = next.sum();
    if (s > 0.0) next /= s;
    out.push_back(std::move(next));
  }
  return out;
}

Vec uniform_density(const TransitionMatrix& tm) {
  Vec p = Vec::Zero(tm.p.rows());
  p.head(tm.boxes()).setConstant(1.0 / static_cast<double>(tm.boxes()));
  return p;
}

Vec invariant_density(const TransitionMatrix& tm, const Vec& start) {
  return stationary_vector(tm.p, start.size() == 0 ? uniform_density(tm) : start);
}

TransitionMatrix compose_multiplicative(const TransitionMatrix& p, const TransitionMatrix& pu) {
  if (p.p.rows() != pu.p.rows() || p.p.cols() != pu.p.cols()) {
    throw Error(ErrorKind::InvalidInput, "compose_multiplicative: dimension mismatch");
  }
  TransitionMatrix out;
  out.tau = p.tau;
  out.p = p.p * pu.p;
  out.counts = p.counts;
  return out;
}

AdditiveReport check_additive(const TransitionMatrix& p, const Mat& pu, double tol) {
  if (p.p.rows() != pu.rows() || p.p.cols() != pu.cols()) {
    throw Error(ErrorKind::InvalidInput, "check_additive: dimension mismatch");
  }
  const Mat sum = p.p + pu;
  AdditiveReport r;
  r.min_entry = sum.minCoeff();
  r.max_column_sum_error = (sum.colwise().sum().array() - 1.0).abs().maxCoeff();
  r.nonnegative = r.min_entry >= -tol;
  r.conserving = r.max_column_sum_error <= tol;
  return r;
}

}  // namespace koopmpc
