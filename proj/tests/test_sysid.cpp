#include <doctest.h>

#include <cmath>
#include <random>

#include "koopmpc/dictionary.hpp"
#include "koopmpc/sysid.hpp"
#include "oracles.hpp"

using namespace koopmpc;

namespace {

Mat a0() {
  Mat a(2, 2);
  a << 0.9, 0.1, 0, 0.8;
  return a;
}

Mat b0() {
  Mat b(2, 1);
  b << 0, 1;
  return b;
}

SampleSet to_samples(const oracle::LinearData& d, double dt = 1.0) {
  SampleSet s;
  s.x = d.x;
  s.u = d.u;
  s.xp = d.xp;
  s.dt = dt;
  s.trajectory_index.assign(static_cast<std::size_t>(d.x.cols()), 0);
  s.times.assign(static_cast<std::size_t>(d.x.cols()), 0.0);
  return s;
}

// RK4 propagator of x' = m x over one step h: I + M + M^2/2 + M^3/6 + M^4/24, M = m h.
Mat rk4_propagator(const Mat& m, double h) {
  const Mat mh = m * h;
  Mat term = Mat::Identity(m.rows(), m.cols());
  Mat sum = term;
  for (int k = 1; k <= 4; ++k) {
    term = term * mh / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

TrainingSpec small_spec(double half_width, double dt, double t_end, std::size_t n, std::uint64_t seed) {
  TrainingSpec s;
  s.n_traj = n;
  s.box = Box{Vec::Constant(2, -half_width), Vec::Constant(2, half_width)};
  s.dt = dt;
  s.t_end = t_end;
  s.forcing.amplitude = 1.0;
  s.forcing.omega_sigma = 3.0;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_SUITE("sysid") {

TEST_CASE("dmdc recovers a known discrete system") {
  const auto s = to_samples(oracle::linear_samples(a0(), b0(), 50, 1));
  const auto m = fit_dmdc(s);
  CHECK((m.a - a0()).norm() <= 1e-10);
  CHECK((m.b - b0()).norm() <= 1e-10);
  CHECK(m.fit_residual < 1e-12);
}

TEST_CASE("dmdc with zero inputs reduces to plain DMD") {
  auto d = oracle::linear_samples(a0(), b0(), 40, 2);
  d.u.setZero();
  d.xp = a0() * d.x;
  const auto m = fit_dmdc(to_samples(d));
  CHECK(m.b.norm() == 0.0);
  const Mat plain = d.xp * d.x.completeOrthogonalDecomposition().pseudoInverse();
  CHECK((m.a - plain).norm() < 1e-12);
}

TEST_CASE("dmdc needs at least n + q columns") {
  const auto s = to_samples(oracle::linear_samples(a0(), b0(), 2, 3));
  try {
    fit_dmdc(s);
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
}

TEST_CASE("input scaling equivariance") {
  const auto d = oracle::linear_samples(a0(), b0(), 60, 4);
  const auto ref = fit_dmdc(to_samples(d));
  for (double s : {0.5, 2.0}) {
    auto scaled = d;
    scaled.u *= s;
    const auto m = fit_dmdc(to_samples(scaled));
    CHECK((m.b * s - ref.b).norm() < 1e-12);
  }
}

TEST_CASE("fit residual is locally optimal") {
  const auto vdp = make_vanderpol(0.2);
  const auto s = sample_training_set(vdp, small_spec(3.0, 0.05, 1.0, 20, 9));
  const auto m = fit_dmdc(s);
  const double r0 = one_step_residual(s.x, s.u, s.xp, m.a, m.b);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int t = 0; t < 100; ++t) {
    Mat da(2, 2), db(2, 1);
    for (Eigen::Index i = 0; i < 4; ++i) da.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < 2; ++i) db.data()[i] = n(rng);
    const double scale = 1e-3 / std::sqrt(da.squaredNorm() + db.squaredNorm());
    CHECK(one_step_residual(s.x, s.u, s.xp, m.a + scale * da, m.b + scale * db) >= r0);
  }
}

TEST_CASE("edmdc with linear monomials equals dmdc") {
  const auto vdp = make_vanderpol(0.2);
  const auto s = sample_training_set(vdp, small_spec(6.0, 0.05, 1.0, 30, 10));
  const auto d = fit_dmdc(s);
  const auto e = fit_edmdc(s, monomials_dictionary(2, 1));
  CHECK((d.a - e.a).norm() <= 1e-12);
  CHECK((d.b - e.b).norm() <= 1e-12);
}

TEST_CASE("edmdc closes exactly on the slow-manifold system") {
  const auto sys = make_slow_manifold(-0.05, -1.0);
  const auto s = sample_training_set(sys, small_spec(1.0, 0.01, 1.0, 20, 11));
  const auto dict = dictionary_from_labels(2, {"x1", "x2", "x1^2"});
  const auto m = fit_edmdc(s, dict);

  Vec x0(2);
  x0 << 0.8, -0.4;
  const auto truth = simulate(sys, x0, ForcingSignal::product_sines(1.0, 2.0, 5.0), 1.0, 0.01);
  const auto pred = predict_rollout(m, History::current(x0), truth.inputs);
  REQUIRE(pred.states.size() == 101);
  double se = 0.0;
  for (std::size_t k = 1; k <= 100; ++k) se += (pred.states[k] - truth.states[k]).squaredNorm();
  CHECK(std::sqrt(se / 200.0) <= 1e-6);
}

TEST_CASE("edmdc beats dmdc one step on van der Pol") {
  const auto vdp = make_vanderpol(0.2);
  const auto train = sample_training_set(vdp, small_spec(6.0, 0.05, 1.0, 200, 12));
  const auto val = sample_training_set(vdp, small_spec(3.0, 0.05, 1.0, 50, 13));
  const auto d = fit_dmdc(train);
  const auto e = fit_edmdc(train, monomials_dictionary(2, 5));
  double err_d = 0.0, err_e = 0.0;
  for (Eigen::Index j = 0; j < val.size(); ++j) {
    err_d += (d.a * val.x.col(j) + d.b * val.u.col(j) - val.xp.col(j)).squaredNorm();
    const Vec z = e.lift(Vec(val.x.col(j)));
    err_e += (e.c * (e.a * z + e.b * val.u.col(j)) - val.xp.col(j)).squaredNorm();
  }
  CHECK(err_e < err_d);
}

TEST_CASE("delay model of depth one is dmdc") {
  const auto vdp = make_vanderpol(0.2);
  const auto data = generate_trajectories(vdp, small_spec(3.0, 0.05, 1.0, 10, 14));
  const auto d = fit_dmdc(data.samples);
  const auto m = fit_delay_augmented(data.trajectories, DelaySpec{1, 1, 1}, 0.05);
  CHECK((m.a - d.a).norm() < 1e-10);
  CHECK((m.b - d.b).norm() < 1e-10);
}

TEST_CASE("augmented delay model has the exact shift structure") {
  const auto vdp = make_vanderpol(0.2);
  const auto data = generate_trajectories(vdp, small_spec(3.0, 0.05, 1.0, 40, 15));
  const auto m = fit_delay_augmented(data.trajectories, DelaySpec{5, 5, 1}, 0.05);
  const Eigen::Index dz = 10, past = 4;
  REQUIRE(m.a.rows() == dz + past);
  const Mat lower_a = m.a.bottomRows(past);
  const Mat lower_b = m.b.bottomRows(past);
  Mat expect_a = Mat::Zero(past, dz + past);
  for (Eigen::Index i = 1; i < past; ++i) expect_a(i, dz + i - 1) = 1.0;
  Mat expect_b = Mat::Zero(past, 1);
  expect_b(0, 0) = 1.0;
  CHECK((lower_a.array() == expect_a.array()).all());
  CHECK((lower_b.array() == expect_b.array()).all());
  CHECK(m.state_history() == 4);
  CHECK(m.input_history() == 4);
}

TEST_CASE("miso and augmented forms predict the same") {
  const auto vdp = make_vanderpol(0.2);
  const auto data = generate_trajectories(vdp, small_spec(3.0, 0.05, 1.0, 40, 16));
  const auto miso = fit_delay_miso(data.trajectories, DelaySpec{3, 3, 1}, 0.05);
  const auto aug = to_augmented(miso);
  const auto& t = data.trajectories.front();
  History h{{t.states[2], t.states[1], t.states[0]}, {t.inputs[1], t.inputs[0]}};
  const std::vector<Vec> inputs(t.inputs.begin() + 2, t.inputs.begin() + 12);
  const auto p1 = predict_rollout(miso, h, inputs);
  const auto p2 = predict_rollout(aug, h, inputs);
  for (std::size_t k = 0; k < p1.states.size(); ++k) CHECK((p1.states[k] - p2.states[k]).norm() < 1e-12);
}

TEST_CASE("delay model through one coordinate of a damped oscillator") {
  Mat a(2, 2), b(2, 1);
  a << 0, 1, -4, -0.4;
  b << 0, 1;
  const auto sys = make_linear_system(a, b);
  auto spec = small_spec(1.0, 0.05, 3.0, 10, 17);
  const auto data = generate_trajectories(sys, spec);
  DelayFitOptions opts;
  opts.coords = {0};
  const auto m = fit_delay_augmented(data.trajectories, DelaySpec{5, 5, 1}, 0.05, opts);

  Vec x0(2);
  x0 << 0.6, -0.2;
  const auto truth = simulate(sys, x0, ForcingSignal::product_sines(1.0, 1.5, 4.0), 2.75, 0.05);
  const std::size_t k0 = 4;
  History h;
  for (std::size_t i = 0; i <= 4; ++i) h.states.push_back(truth.states[k0 - i]);
  for (std::size_t i = 1; i <= 4; ++i) h.inputs.push_back(truth.inputs[k0 - i]);
  const std::vector<Vec> inputs(truth.inputs.begin() + k0, truth.inputs.begin() + k0 + 50);
  const auto pred = predict_rollout(m, h, inputs);
  double se = 0.0;
  for (std::size_t s = 1; s <= 50; ++s) se += std::pow(pred.states[s](0) - truth.states[k0 + s](0), 2);
  CHECK(std::sqrt(se / 50.0) <= 1e-3);
}

TEST_CASE("delay lift needs a full history") {
  const auto vdp = make_vanderpol(0.2);
  const auto data = generate_trajectories(vdp, small_spec(3.0, 0.05, 1.0, 20, 18));
  const auto m = fit_delay_augmented(data.trajectories, DelaySpec{3, 3, 1}, 0.05);
  try {
    m.lift(Vec::Zero(2));
    FAIL("expected missing history");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingHistory);
  }
}

TEST_CASE("parametrized family recovers the per-level propagators") {
  Mat base(2, 2);
  base << -0.5, 1.0, -1.0, -0.3;
  ControlSystem sys{2, 1, [base](const Vec& x, const Vec& u, double) -> Vec { return (base + u(0) * Mat::Identity(2, 2)) * x; }, "bilinear"};
  const double dt = 0.1;
  const std::vector<Vec> levels{Vec::Constant(1, -1.0), Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)};
  std::mt19937_64 rng(19);
  std::normal_distribution<double> n;
  const long per_level = 10;
  SampleSet s;
  s.dt = dt;
  s.x.resize(2, 3 * per_level);
  s.u.resize(1, 3 * per_level);
  s.xp.resize(2, 3 * per_level);
  for (long j = 0; j < 3 * per_level; ++j) {
    Vec x(2);
    x << n(rng), n(rng);
    const Vec& u = levels[static_cast<std::size_t>(j % 3)];
    s.x.col(j) = x;
    s.u.col(j) = u;
    s.xp.col(j) = rk4_step(sys, x, u, 0.0, dt);
    s.trajectory_index.push_back(0);
    s.times.push_back(0.0);
  }
  const auto fam = fit_parametrized(s, identity_dictionary(2), levels);
  for (std::size_t l = 0; l < 3; ++l) {
    const Mat expect = rk4_propagator(base + levels[l](0) * Mat::Identity(2, 2), dt);
    CHECK((fam.mats[l] - expect).norm() <= 1e-8);
  }
  SUBCASE("rollout rejects an unknown level") {
    try {
      predict_rollout(fam, Vec::Ones(2), {Vec::Constant(1, 0.5)});
      FAIL("expected unknown level");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UnknownLevel);
    }
  }
  SUBCASE("a single level is plain DMD") {
    SampleSet only0 = s;
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (s.u(0, j) == 0.0) cols.push_back(j);
    }
    only0.x = s.x(Eigen::all, cols);
    only0.xp = s.xp(Eigen::all, cols);
    only0.u = s.u(Eigen::all, cols);
    only0.trajectory_index.resize(cols.size());
    only0.times.resize(cols.size());
    const auto f1 = fit_parametrized(only0, identity_dictionary(2), {Vec::Zero(1)});
    const Mat plain = only0.xp * only0.x.completeOrthogonalDecomposition().pseudoInverse();
    CHECK((f1.mats[0] - plain).norm() < 1e-10);
  }
  SUBCASE("a level with no data is an error") {
    CHECK_THROWS_AS(fit_parametrized(s, identity_dictionary(2), {Vec::Constant(1, 2.0)}), Error);
  }
}

TEST_CASE("rollout") {
  const auto s = to_samples(oracle::linear_samples(a0(), b0(), 50, 20));
  const auto m = fit_dmdc(s);
  Vec x0(2);
  x0 << 1, -1;
  SUBCASE("no inputs returns the start") {
    const auto p = predict_rollout(m, History::current(x0), {});
    REQUIRE(p.states.size() == 1);
    CHECK((p.states[0] - x0).norm() == 0.0);
  }
  SUBCASE("matches the plant over 100 steps") {
    std::vector<Vec> inputs;
    Vec x = x0;
    std::vector<Vec> truth{x};
    for (int k = 0; k < 100; ++k) {
      inputs.push_back(Vec::Constant(1, std::sin(0.3 * k)));
      x = a0() * x + b0() * inputs.back();
      truth.push_back(x);
    }
    const auto p = predict_rollout(m, History::current(x0), inputs);
    for (std::size_t k = 0; k <= 100; ++k) CHECK((p.states[k] - truth[k]).norm() <= 1e-8);
  }
}

TEST_CASE("model kind names") {
  for (auto k : {ModelKind::Dmdc, ModelKind::Edmdc, ModelKind::DelayMiso, ModelKind::DelayAugmented}) {
    CHECK(model_kind_from_string(to_string(k)) == k);
  }
  CHECK(model_kind_from_string("delay") == ModelKind::DelayAugmented);
  CHECK_THROWS_AS(model_kind_from_string("sindy"), Error);
}

TEST_CASE("eigenfunction of a scalar linear system") {
  const double lam = -0.7;
  Mat x(1, 30), xd(1, 30);
  for (int j = 0; j < 30; ++j) {
    x(0, j) = -2.0 + 4.0 * j / 29.0;
    xd(0, j) = lam * x(0, j);
  }
  const auto e = identify_eigenfunctions(x, xd, monomials_dictionary(1, 2), lam);
  CHECK(std::abs(e.xi(0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(e.xi(1)) < 1e-10);
  CHECK(e.residual <= 1e-10);
}

TEST_CASE("slow-manifold eigenfunction") {
  const double mu = -0.05, lam = -1.0;
  const auto sys = make_slow_manifold(mu, lam);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Mat x(2, 200), xd(2, 200);
  for (int j = 0; j < 200; ++j) {
    x(0, j) = u(rng);
    x(1, j) = u(rng);
    xd.col(j) = sys(x.col(j), Vec::Zero(1));
  }
  const auto theta = monomials_dictionary(2, 2);  // x1, x2, x1^2, x1 x2, x2^2
  const auto e = identify_eigenfunctions(x, xd, theta, lam);
  const Vec xi = e.xi / e.xi(1);
  const double b = lam / (lam - 2 * mu);  // 1 / 0.9
  CHECK(std::abs(xi(0)) <= 1e-6);
  CHECK(std::abs(xi(2) + b) <= 1e-6);
  CHECK(std::abs(xi(3)) <= 1e-6);
  CHECK(std::abs(xi(4)) <= 1e-6);
  CHECK(e.residual <= 1e-8);
  CHECK(e.support == std::vector<std::size_t>{1, 2});
  for (const auto& step : e.history) CHECK(step.resolved_residual <= step.truncated_residual + 1e-12);

  SUBCASE("no eigenfunction at an eigenvalue the system does not have") {
    try {
      identify_eigenfunctions(x, xd, theta, 10.0);
      FAIL("expected no eigenfunction");
    } catch (const NoEigenfunctionError& err) {
      CHECK(err.residual() > 0.0);
    }
  }
}

TEST_CASE("sample hash") {
  const auto s = to_samples(oracle::linear_samples(a0(), b0(), 10, 22));
  CHECK(hash_samples(s) == hash_samples(s));
  auto t = s;
  t.x(0, 0) += 1e-15;
  CHECK(hash_samples(s) != hash_samples(t));
}

}  // TEST_SUITE
