#include "koopmpc/dynamics.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "koopmpc/parallel.hpp"

namespace koopmpc {

void SampleSet::validate() const {
  if (x.cols() != xp.cols() || x.cols() != u.cols()) {
    throw Error(ErrorKind::InvalidInput, "SampleSet: column counts differ");
  }
  if (x.rows() != xp.rows()) throw Error(ErrorKind::InvalidInput, "SampleSet: x and xp row counts differ");
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidInput, "SampleSet: dt must be positive");
}

ForcingSignal ForcingSignal::constant(double v) {
  ForcingSignal f;
  f.kind = Kind::Constant;
  f.values = {v};
  return f;
}

ForcingSignal ForcingSignal::product_sines(double amplitude, double omega1, double omega2) {
  ForcingSignal f;
  f.kind = Kind::ProductSines;
  f.amplitude = amplitude;
  f.omega1 = omega1;
  f.omega2 = omega2;
  return f;
}

ForcingSignal ForcingSignal::piecewise(std::vector<double> values, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidInput, "piecewise forcing: step must be positive");
  ForcingSignal f;
  f.kind = Kind::PiecewiseConstant;
  f.values = std::move(values);
  f.step = step;
  return f;
}

double ForcingSignal::operator()(double t) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return values.empty() ? 0.0 : values.front();
    case Kind::ProductSines:
      return amplitude * std::sin(std::abs(omega1) * t) * std::sin(std::abs(omega2) * t);
    case Kind::PiecewiseConstant: {
      if (values.empty()) return 0.0;
      const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / step + 1e-9)));
      return values[std::min(k, values.size() - 1)];
    }
  }
  return 0.0;
}

ControlSystem make_vanderpol(double mu) {
  ControlSystem sys;
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.name = "vanderpol";
  sys.rhs = [mu](const Vec& x, const Vec& u, double) {
    Vec dx(2);
    dx(0) = x(1);
    dx(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0) + u(0);
    return dx;
  };
  return sys;
}

ControlSystem make_zero_system(std::size_t state_dim, std::size_t input_dim) {
  ControlSystem sys;
  sys.state_dim = state_dim;
  sys.input_dim = input_dim;
  sys.name = "zero";
  sys.rhs = [state_dim](const Vec&, const Vec&, double) { return Vec::Zero(static_cast<Eigen::Index>(state_dim)); };
  return sys;
}

ControlSystem make_linear_system(const Mat& a, const Mat& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw Error(ErrorKind::InvalidInput, "make_linear_system: dimension mismatch");
  }
  ControlSystem sys;
  sys.state_dim = static_cast<std::size_t>(a.rows());
  sys.input_dim = static_cast<std::size_t>(b.cols());
  sys.name = "linear";
  sys.rhs = [a, b](const Vec& x, const Vec& u, double) -> Vec { return a * x + b * u; };
  return sys;
}

ControlSystem make_slow_manifold(double mu, double lambda) {
  ControlSystem sys;
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.name = "slow_manifold";
  sys.rhs = [mu, lambda](const Vec& x, const Vec& u, double) {
    Vec dx(2);
    dx(0) = mu * x(0);
    dx(1) = lambda * (x(1) - x(0) * x(0)) + u(0);
    return dx;
  };
  return sys;
}

Vec rk4_step(const ControlSystem& sys, const Vec& x, const Vec& u, double t, double dt) {
  const double half = 0.5 * dt;
  const Vec k1 = sys.rhs(x, u, t);
  const Vec k2 = sys.rhs(x + half * k1, u, t + half);
  const Vec k3 = sys.rhs(x + half * k2, u, t + half);
  const Vec k4 = sys.rhs(x + dt * k3, u, t + dt);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw Error(ErrorKind::Divergence, "rk4_step: non-finite state");
  return next;
}

Vec flow(const ControlSystem& sys, const Vec& x, const Vec& u, double duration, double max_dt) {
  if (!(duration > 0.0) || !(max_dt > 0.0)) throw Error(ErrorKind::InvalidInput, "flow: durations must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(duration / max_dt - 1e-9));
  const double h = duration / static_cast<double>(n);
  Vec y = x;
  for (std::size_t k = 0; k < n; ++k) y = rk4_step(sys, y, u, static_cast<double>(k) * h, h);
  return y;
}

std::size_t step_count(double t_end, double dt) {
  return static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
}

Trajectory simulate(const ControlSystem& sys, const Vec& x0, const ForcingSignal& forcing, double t_end, double dt) {
  if (!(t_end > 0.0) || !(dt > 0.0)) throw Error(ErrorKind::InvalidInput, "simulate: t_end and dt must be positive");
  if (x0.size() != static_cast<Eigen::Index>(sys.state_dim)) {
    throw Error(ErrorKind::InvalidInput, "simulate: initial state has wrong dimension");
  }
  const std::size_t steps = step_count(t_end, dt);
  const auto q = static_cast<Eigen::Index>(sys.input_dim);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.inputs.reserve(steps);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Vec u = Vec::Constant(q, forcing(t));
    Vec next;
    try {
      next = rk4_step(sys, traj.states.back(), u, t, dt);
    } catch (const Error&) {
      traj.inputs.push_back(u);
      throw DivergenceError("simulate: non-finite state at step " + std::to_string(k), std::move(traj));
    }
    traj.inputs.push_back(u);
    traj.times.push_back(static_cast<double>(k + 1) * dt);
    traj.states.push_back(next);
    if (next.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw DivergenceError("simulate: state exceeded bound at step " + std::to_string(k), std::move(traj));
    }
  }
  return traj;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 over the combined word
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SampleSet snapshots_from(const std::vector<Trajectory>& trajs, double dt) {
  Eigen::Index cols = 0;
  Eigen::Index n = 0;
  Eigen::Index q = 0;
  for (const auto& t : trajs) {
    cols += static_cast<Eigen::Index>(t.inputs.size());
    if (!t.states.empty()) n = t.states.front().size();
    if (!t.inputs.empty()) q = t.inputs.front().size();
  }
  SampleSet s;
  s.dt = dt;
  s.x.resize(n, cols);
  s.xp.resize(n, cols);
  s.u.resize(q, cols);
  Eigen::Index j = 0;
  for (std::size_t ti = 0; ti < trajs.size(); ++ti) {
    const auto& t = trajs[ti];
    for (std::size_t k = 0; k < t.inputs.size(); ++k, ++j) {
      s.x.col(j) = t.states[k];
      s.xp.col(j) = t.states[k + 1];
      s.u.col(j) = t.inputs[k];
      s.trajectory_index.push_back(ti);
      s.times.push_back(t.times[k]);
    }
  }
  return s;
}

GeneratedData generate_trajectories(const ControlSystem& sys, const TrainingSpec& spec) {
  if (spec.n_traj < 1) throw Error(ErrorKind::InvalidInput, "sample_training_set: n_traj must be at least 1");
  const auto n = static_cast<Eigen::Index>(sys.state_dim);
  if (spec.box.lo.size() != n || spec.box.hi.size() != n) {
    throw Error(ErrorKind::InvalidInput, "sample_training_set: box dimension does not match the state");
  }

  std::vector<Trajectory> trajs(spec.n_traj);
  std::vector<char> ok(spec.n_traj, 1);
  parallel_for(spec.n_traj, spec.parallel, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(spec.seed, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec x0(n);
    for (Eigen::Index c = 0; c < n; ++c) x0(c) = spec.box.lo(c) + (spec.box.hi(c) - spec.box.lo(c)) * unit(rng);
    ForcingSignal forcing;
    if (spec.forcing.kind == ForcingFamily::Kind::ProductSines) {
      std::normal_distribution<double> normal(0.0, spec.forcing.omega_sigma);
      const double w1 = normal(rng);
      const double w2 = normal(rng);
      forcing = ForcingSignal::product_sines(spec.forcing.amplitude, w1, w2);
    }
    try {
      trajs[i] = simulate(sys, x0, forcing, spec.t_end, spec.dt);
    } catch (const DivergenceError&) {
      ok[i] = 0;
    }
  });

  GeneratedData out;
  for (std::size_t i = 0; i < spec.n_traj; ++i) {
    if (ok[i]) {
      out.trajectories.push_back(std::move(trajs[i]));
    } else {
      out.dropped.push_back(i);
    }
  }
  out.samples = snapshots_from(out.trajectories, spec.dt);
  // Report source indices, not positions among kept trajectories.
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < spec.n_traj; ++i) {
    if (ok[i]) kept.push_back(i);
  }
  for (auto& ti : out.samples.trajectory_index) ti = kept[ti];
  out.samples.seed = spec.seed;
  out.samples.diverged = out.dropped.size();
  return out;
}

SampleSet sample_training_set(const ControlSystem& sys, const TrainingSpec& spec) {
  return generate_trajectories(sys, spec).samples;
}

}  // namespace koopmpc
