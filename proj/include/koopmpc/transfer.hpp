#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "koopmpc/dynamics.hpp"
#include "koopmpc/numerics.hpp"

namespace koopmpc {

// Equipartition of a rectangle into prod(counts) boxes, first coordinate
// varying fastest.
struct BoxPartition {
  Vec lo;
  Vec hi;
  std::vector<std::size_t> counts;

  std::size_t dim() const { return counts.size(); }
  std::size_t size() const;
  Box box(std::size_t index) const;
  void validate() const;
};

// Half-open [lo, hi) boxes with the top face of the rectangle closed;
// nullopt outside the rectangle.
std::optional<std::size_t> locate(const BoxPartition& part, const Vec& x);

// Column-stochastic. The last state is an absorbing "outside" box that
// collects landings off the rectangle, so p is (d + 1) x (d + 1).
struct TransitionMatrix {
  Mat p;
  double tau = 0.0;
  std::vector<std::size_t> counts;          // in-box samples per source column
  std::vector<std::size_t> escaped_columns;  // boxes whose samples all left the rectangle

  Eigen::Index boxes() const { return p.rows() - 1; }
  Eigen::Index outside() const { return p.rows() - 1; }
  // Block over the partition boxes only.
  Mat interior() const { return p.topLeftCorner(boxes(), boxes()); }
};

struct ControlledChain {
  std::vector<Vec> levels;
  std::vector<TransitionMatrix> mats;
  BoxPartition partition;

  long find_level(const Vec& u, double tol = 1e-12) const;
};

using FlowMap = std::function<Vec(const Vec& x, const Vec& u)>;

struct UlamOptions {
  std::size_t samples_per_box = 100;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
};

// Counting estimator: P_ij = #{x_k in B_j, flow(x_k, u) in B_i} / #{x_k in B_j}
// with samples drawn uniformly per box.
TransitionMatrix estimate_transition(const FlowMap& flow_map, const BoxPartition& part, const Vec& level, double tau,
                                     const UlamOptions& opts);

ControlledChain estimate_controlled_transition(const FlowMap& flow_map, const BoxPartition& part,
                                               const std::vector<Vec>& levels, double tau, const UlamOptions& opts);

// Flows the plant for tau under constant u_l with RK4 substeps of at most max_dt.
ControlledChain estimate_controlled_transition(const ControlSystem& sys, const BoxPartition& part,
                                               const std::vector<Vec>& levels, double tau, const UlamOptions& opts,
                                               double max_dt = 0.01);

// Same counting rule on given pairs (x_k, x'_k). Boxes without samples keep a
// zero column and count 0.
TransitionMatrix transition_from_samples(const BoxPartition& part, const Mat& x, const Mat& xp, double tau);

// p_{k+1} = P(u_k) p_k; element 0 is p0.
std::vector<Vec> propagate_density(const ControlledChain& chain, const Vec& p0, const std::vector<Vec>& input_sequence);

// Uniform over the partition boxes, zero on the outside state.
Vec uniform_density(const TransitionMatrix& tm);

Vec invariant_density(const TransitionMatrix& tm, const Vec& start = Vec());

// P Pu; Pu = I gives P back.
TransitionMatrix compose_multiplicative(const TransitionMatrix& p, const TransitionMatrix& pu);

struct AdditiveReport {
  bool nonnegative = false;
  bool conserving = false;
  double min_entry = 0.0;
  double max_column_sum_error = 0.0;
  bool valid() const { return nonnegative && conserving; }
};

// Whether P + Pu is still a column-stochastic matrix.
AdditiveReport check_additive(const TransitionMatrix& p, const Mat& pu, double tol = 1e-10);

}  // namespace koopmpc
