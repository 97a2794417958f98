#include <doctest.h>

#include <cmath>
#include <random>

#include "koopmpc/dictionary.hpp"
#include "koopmpc/mpc.hpp"
#include "oracles.hpp"

using namespace koopmpc;

namespace {

LinearControlModel linear_model(const Mat& a, const Mat& b, double dt = 0.1) {
  LinearControlModel m;
  m.kind = ModelKind::Dmdc;
  m.a = a;
  m.b = b;
  m.c = Mat::Identity(a.rows(), a.rows());
  m.dt = dt;
  m.dict = identity_dictionary(static_cast<std::size_t>(a.rows()));
  return m;
}

MpcConfig scalar_config(double q, double ru, double rdu, std::size_t n) {
  MpcConfig c;
  c.q = Mat::Constant(1, 1, q);
  c.reference = Vec::Zero(1);
  c.ru = ru;
  c.rdu = rdu;
  c.horizon = n;
  c.u_min = c.du_min = -1e6;
  c.u_max = c.du_max = 1e6;
  return c;
}

// Slightly unstable oscillator and its RK4 samples; the DMDc fit of those
// samples reproduces the plant's one-step map exactly.
ControlSystem oscillator() {
  Mat a(2, 2), b(2, 1);
  a << 0.1, 1, -1, 0.1;
  b << 0, 1;
  return make_linear_system(a, b);
}

LinearControlModel exact_model(const ControlSystem& plant, double dt) {
  TrainingSpec s;
  s.n_traj = 10;
  s.box = Box{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};
  s.dt = dt;
  s.t_end = 1.0;
  s.forcing.amplitude = 1.0;
  s.seed = 3;
  return fit_dmdc(sample_training_set(plant, s));
}

Vec v2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

LinearControlModel vdp_edmdc() {
  TrainingSpec s;
  s.box = Box{Vec::Constant(2, -6.0), Vec::Constant(2, 6.0)};
  s.seed = 101;
  return fit_edmdc(sample_training_set(make_vanderpol(0.2), s), monomials_dictionary(2, 5));
}

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("input with no effect is not used") {
  Mat a(2, 2);
  a << 0.9, 0.2, 0, 0.7;
  const auto m = linear_model(a, Mat::Zero(2, 1));
  MpcConfig cfg;
  const auto r = mpc_step(m, History::current(v2(1, -2)), Vec::Zero(1), cfg);
  for (const auto& u : r.sequence) CHECK(std::abs(u(0)) < 1e-12);
}

TEST_CASE("one-step horizon matches the calculus minimizer") {
  const double a = 1.2, b = 0.5, q = 2.0, ru = 0.3, rdu = 0.7, z0 = 1.5, u_prev = -0.4;
  const auto m = linear_model(Mat::Constant(1, 1, a), Mat::Constant(1, 1, b));
  const auto cfg = scalar_config(q, ru, rdu, 1);
  // d/du [q (a z0 + b u)^2 + ru u^2 + rdu (u - u_prev)^2] = 0
  const double u_star = (rdu * u_prev - q * a * b * z0) / (q * b * b + ru + rdu);
  const auto r = mpc_step(m, History::current(Vec::Constant(1, z0)), Vec::Constant(1, u_prev), cfg);
  CHECK(r.u0(0) == doctest::Approx(u_star).epsilon(1e-10));

  SUBCASE("condensed objective plus constant equals the stage sum") {
    const auto cq = condense_qp(m, Vec::Constant(1, z0), Vec::Constant(1, u_prev), cfg);
    for (double u : {-2.0, 0.0, 0.3, 4.0}) {
      const double z1 = a * z0 + b * u;
      const double direct = q * z0 * z0 + q * z1 * z1 + ru * u * u + rdu * (u - u_prev) * (u - u_prev);
      CHECK(cq.qp.objective(Vec::Constant(1, u)) + cq.constant == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-step problem with an active rate bound matches the grid oracle") {
  const auto m = linear_model(Mat::Constant(1, 1, 1.1), Mat::Constant(1, 1, 0.4));
  auto cfg = scalar_config(1.0, 0.1, 0.1, 2);
  cfg.u_min = -2.0;
  cfg.u_max = 2.0;
  cfg.du_min = -0.5;
  cfg.du_max = 0.5;
  const auto cq = condense_qp(m, Vec::Constant(1, 3.0), Vec::Zero(1), cfg);
  const auto ref = oracle::grid_search_qp(cq.qp, 1e-3);
  const auto r = mpc_step(m, History::current(Vec::Constant(1, 3.0)), Vec::Zero(1), cfg);
  Vec u(2);
  u << r.sequence[0](0), r.sequence[1](0);
  CHECK(std::abs(r.u0(0) + 0.5) < 1e-9);  // the rate bound is what stops u0
  CHECK((u - ref.x).cwiseAbs().maxCoeff() <= 2e-3);
}

TEST_CASE("already at the reference") {
  Mat a(2, 2), b(2, 1);
  a << 0.5, 0.1, 0, 0.6;
  b << 0, 1;
  const auto r = mpc_step(linear_model(a, b), History::current(Vec::Zero(2)), Vec::Zero(1), MpcConfig{});
  CHECK(std::abs(r.u0(0)) <= 1e-8);
  CHECK((r.u0 - r.sequence.front()).norm() == 0.0);
}

TEST_CASE("van der Pol eDMDc step respects the input limits") {
  const auto m = vdp_edmdc();
  MpcConfig cfg;
  const Vec u_prev = Vec::Constant(1, 4.5);
  const auto r = mpc_step(m, History::current(v2(2, 0)), u_prev, cfg);
  CHECK(std::abs(r.u0(0)) <= 5.0);
  CHECK(std::abs(r.u0(0) - u_prev(0)) <= 50.0);
  CHECK((r.u0 - r.sequence.front()).norm() == 0.0);
}

TEST_CASE("closed loop on an exactly identified plant") {
  const auto plant = oscillator();
  const auto m = exact_model(plant, 0.1);
  MpcConfig cfg;
  SUBCASE("starting at the reference costs nothing") {
    const auto res = closed_loop_run(plant, m, cfg, Vec::Zero(2), 5.0, 0.1);
    CHECK(res.total_cost() <= 1e-10);
  }
  SUBCASE("regulation without active constraints decays monotonically") {
    cfg.u_min = cfg.du_min = -1e6;
    cfg.u_max = cfg.du_max = 1e6;
    const auto res = closed_loop_run(plant, m, cfg, v2(0.5, -0.5), 20.0, 0.1);
    const auto& xs = res.trajectory.states;
    std::size_t violations = 0;
    for (std::size_t k = 20; k + 1 < xs.size(); ++k) {
      if (xs[k].norm() > 1e-12 && xs[k + 1].norm() > xs[k].norm()) ++violations;
    }
    CHECK(violations == 0);
    CHECK(xs.back().norm() < 1e-6);
  }
  SUBCASE("shifted warm starts are feasible") {
    cfg.du_min = -0.3;
    cfg.du_max = 0.3;
    cfg.u_min = -1.0;
    cfg.u_max = 1.0;
    const auto res = closed_loop_run(plant, m, cfg, v2(2.0, 1.0), 10.0, 0.1);
    for (std::size_t k = 1; k < res.solve_stats.size(); ++k) CHECK(res.solve_stats[k].warm_start_feasible);
  }
}

TEST_CASE("closed loop keeps every applied input inside its limits") {
  const auto plant = oscillator();
  const auto m = exact_model(plant, 0.1);
  MpcConfig cfg;
  cfg.u_min = -0.8;
  cfg.u_max = 0.6;
  cfg.du_min = -0.2;
  cfg.du_max = 0.1;
  const auto res = closed_loop_run(plant, m, cfg, v2(3.0, -2.0), 15.0, 0.1);
  // The controller clamps to prev + du exactly; subtracting back rounds.
  const double eps = 1e-12;
  double prev = 0.0;
  for (const auto& u : res.trajectory.inputs) {
    CHECK(u(0) >= cfg.u_min);
    CHECK(u(0) <= cfg.u_max);
    CHECK(u(0) - prev >= cfg.du_min - eps);
    CHECK(u(0) - prev <= cfg.du_max + eps);
    prev = u(0);
  }
}

TEST_CASE("van der Pol stabilization with eDMDc") {
  const auto plant = make_vanderpol(0.2);
  const auto m = vdp_edmdc();
  const Vec x0 = v2(-2.1, 1.7);
  const auto res = closed_loop_run(plant, m, MpcConfig{}, x0, 30.0, 0.05);
  CHECK(res.final_state_norm() < 0.05);
  CHECK(res.trajectory.inputs.size() == 600);

  SUBCASE("the unforced system does not settle and costs more") {
    const auto free = simulate(plant, x0, ForcingSignal::zero(), 30.0, 0.05);
    double cost = 0.0;
    for (std::size_t k = 0; k + 1 < free.states.size(); ++k) cost += free.states[k].squaredNorm();
    CHECK(free.states.back().norm() > 0.5);
    CHECK(cost > res.total_cost());
  }
  SUBCASE("identical inputs give a bitwise identical run") {
    const auto again = closed_loop_run(plant, m, MpcConfig{}, x0, 30.0, 0.05);
    for (std::size_t k = 0; k < res.trajectory.states.size(); ++k) {
      CHECK((res.trajectory.states[k].array() == again.trajectory.states[k].array()).all());
    }
    CHECK(res.total_cost() == again.total_cost());
  }
}

TEST_CASE("delay model warms up with zero input") {
  const auto plant = make_vanderpol(0.2);
  TrainingSpec s;
  s.box = Box{Vec::Constant(2, -6.0), Vec::Constant(2, 6.0)};
  s.seed = 102;
  const auto data = generate_trajectories(plant, s);
  const auto m = fit_delay_augmented(data.trajectories, DelaySpec{5, 5, 1}, 0.05);
  const auto res = closed_loop_run(plant, m, MpcConfig{}, v2(1.0, 1.0), 30.0, 0.05);
  CHECK(res.warmup_steps == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(res.trajectory.inputs[k](0) == 0.0);
  CHECK(res.final_state_norm() < 0.05);
}

TEST_CASE("configuration errors") {
  MpcConfig cfg;
  cfg.u_min = 1.0;
  cfg.u_max = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const auto m = linear_model(Mat::Identity(2, 2), Mat::Ones(2, 1));
  CHECK_THROWS_AS(closed_loop_run(oscillator(), m, MpcConfig{}, Vec::Zero(2), 1.0, 0.05), Error);
}

}  // TEST_SUITE
