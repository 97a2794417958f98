#include <doctest.h>

#include <random>

#include "koopmpc/numerics.hpp"
#include "oracles.hpp"

using namespace koopmpc;

TEST_SUITE("numerics") {

TEST_CASE("svd of the identity") {
  const auto f = truncated_svd(Mat::Identity(3, 3));
  CHECK(f.rank == 3);
  CHECK((f.s - Vec::Ones(3)).norm() < 1e-15);
}

TEST_CASE("svd rank of a singular diagonal matrix") {
  Mat m(2, 2);
  m << 2, 0, 0, 0;
  const auto f = truncated_svd(m, 1e-12);
  CHECK(f.rank == 1);
  CHECK(f.s(0) == doctest::Approx(2.0));
  CHECK(f.s(1) == doctest::Approx(0.0));
}

TEST_CASE("singular values agree with the Gram eigenvalue oracle") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  Mat m(5, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  const auto f = truncated_svd(m);
  const Vec ref = oracle::singular_values_via_gram(m);
  CHECK((f.s - ref).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("svd round trip") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (auto [r, c] : {std::pair{1, 1}, {7, 3}, {3, 7}, {50, 20}, {200, 200}}) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    const auto f = truncated_svd(m, 0.0);
    const Mat back = f.u * f.s.asDiagonal() * f.vt;
    CAPTURE(r);
    CAPTURE(c);
    CHECK((m - back).norm() <= 1e-9 * m.norm());
  }
}

TEST_CASE("lstsq with identity matrix returns b") {
  Mat b(3, 2);
  b << 1, 2, 3, 4, 5, 6;
  CHECK((lstsq_min_norm(Mat::Identity(3, 3), b) - b).norm() < 1e-14);
}

TEST_CASE("lstsq recovers a planted solution") {
  Mat a(4, 2);
  a << 1, 2, 3, 4, -1, 0.5, 2, -3;
  Mat x0(2, 1);
  x0 << 0.7, -1.3;
  CHECK((lstsq_min_norm(a, a * x0) - x0).norm() < 1e-10);
}

TEST_CASE("lstsq picks the minimum-norm point on the solution line") {
  // x1 + x2 = 2 has the line of solutions; the shortest is (1, 1).
  Mat a(2, 2);
  a << 1, 1, 1, 1;
  Mat b(2, 1);
  b << 2, 2;
  const Mat x = lstsq_min_norm(a, b);
  CHECK(x(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lstsq residual is first-order optimal") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Mat a(30, 4), b(30, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n(rng);
  const Mat x = lstsq_min_norm(a, b);
  const double r0 = (a * x - b).norm();
  for (int t = 0; t < 200; ++t) {
    Mat d(4, 2);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = n(rng);
    d *= 1e-3 / d.norm();
    CHECK((a * (x + d) - b).norm() >= r0);
  }
}

TEST_CASE("stationary vector of the identity chain is the start") {
  Vec start(2);
  start << 1, 0;
  const Vec pi = stationary_vector(Mat::Identity(2, 2), start);
  CHECK((pi - start).norm() < 1e-15);
}

TEST_CASE("stationary vector of a two-state chain") {
  Mat p(2, 2);
  p << 0.9, 0.2, 0.1, 0.8;
  const Vec pi = stationary_vector(p);
  // balance: 0.1 a = 0.2 b, a + b = 1. A residual of 1e-10 with spectral gap
  // 0.3 bounds the error by about 3.4e-10.
  CHECK(std::abs(pi(0) - 2.0 / 3.0) <= 5e-10);
  CHECK(std::abs(pi(1) - 1.0 / 3.0) <= 5e-10);
  CHECK((p * pi - pi).lpNorm<1>() <= 1e-10);
}

TEST_CASE("period-two chain") {
  Mat p(2, 2);
  p << 0, 1, 1, 0;
  Vec start(2);
  start << 0.8, 0.2;
  SUBCASE("plain power iteration does not converge") {
    StationaryOptions opts;
    opts.damping = 0.0;
    opts.max_iterations = 1000;
    CHECK_THROWS_AS(stationary_vector(p, start, opts), ConvergenceError);
  }
  SUBCASE("damped iteration finds the uniform fixed point") {
    const Vec pi = stationary_vector(p, start);
    CHECK(std::abs(pi(0) - 0.5) <= 1e-10);
    CHECK((p * pi - pi).lpNorm<1>() <= 1e-10);
  }
}

TEST_CASE("stationary vector rejects non-stochastic input") {
  Mat p(2, 2);
  p << 0.5, 0.5, 0.6, 0.5;
  CHECK_THROWS_AS(stationary_vector(p), Error);
}

TEST_CASE("qp without constraints") {
  QpProblem q;
  q.h = Mat::Identity(2, 2);
  q.g = Vec(2);
  q.g << -1, -2;
  const auto r = solve_qp(q);
  CHECK(r.x(0) == doctest::Approx(1.0));
  CHECK(r.x(1) == doctest::Approx(2.0));
  SUBCASE("upper bound clamps") {
    q.ub = Vec::Constant(2, 0.5);
    const auto rb = solve_qp(q);
    CHECK(rb.x(0) == doctest::Approx(0.5));
    CHECK(rb.x(1) == doctest::Approx(0.5));
    CHECK(rb.kkt_residual < 1e-9);
  }
}

TEST_CASE("qp matches the grid oracle on random problems") {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 20; ++t) {
    const QpProblem q = oracle::random_qp2(rng);
    const auto r = solve_qp(q);
    const auto ref = oracle::grid_search_qp(q, 1e-3);
    CAPTURE(t);
    CHECK((r.x - ref.x).cwiseAbs().maxCoeff() <= 2e-3);
    CHECK(q.objective(r.x) <= ref.value + 1e-12);
  }
}

TEST_CASE("qp optimum beats random feasible probes") {
  std::mt19937_64 rng(99);
  const QpProblem q = oracle::random_qp2(rng);
  const auto r = solve_qp(q);
  std::uniform_real_distribution<double> u0(q.lb(0), q.ub(0)), u1(q.lb(1), q.ub(1));
  int probes = 0;
  while (probes < 1000) {
    Vec x(2);
    x << u0(rng), u1(rng);
    if ((q.a_ineq * x - q.b_ineq).maxCoeff() > 0.0) continue;
    ++probes;
    CHECK(q.objective(r.x) <= q.objective(x) + 1e-12);
  }
}

TEST_CASE("qp phase one from an infeasible start") {
  std::mt19937_64 rng(5);
  const QpProblem q = oracle::random_qp2(rng);
  Vec x0 = Vec::Constant(2, 10.0);
  const auto r = solve_qp(q, x0);
  CHECK_FALSE(r.warm_start_feasible);
  CHECK(r.kkt_residual < 1e-8);
  const auto ref = solve_qp(q);
  CHECK((r.x - ref.x).norm() < 1e-9);
}

TEST_CASE("qp with a singular Hessian") {
  // minimize -x1 over the box: flat in x2, bounded by the box in x1.
  QpProblem q;
  q.h = Mat::Zero(2, 2);
  q.g = Vec(2);
  q.g << -1, 0;
  q.lb = Vec::Constant(2, -1.0);
  q.ub = Vec::Constant(2, 1.0);
  const auto r = solve_qp(q);
  CHECK(r.x(0) == doctest::Approx(1.0));
  CHECK(r.kkt_residual < 1e-9);
}

TEST_CASE("qp infeasible constraints") {
  QpProblem q;
  q.h = Mat::Identity(2, 2);
  q.g = Vec::Zero(2);
  q.lb = Vec::Constant(2, -1.0);
  q.ub = Vec::Constant(2, 1.0);
  q.a_ineq = Mat(1, 2);
  q.a_ineq << 1, 1;
  q.b_ineq = Vec::Constant(1, -3.0);
  try {
    solve_qp(q);
    FAIL("expected an infeasibility error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Infeasible);
  }
  q.a_ineq.resize(0, 2);
  q.b_ineq.resize(0);
  q.lb(0) = 2.0;
  CHECK_THROWS_AS(solve_qp(q), Error);
}

}  // TEST_SUITE
