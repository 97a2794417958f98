#include <doctest.h>

#include <random>

#include "koopmpc/dictionary.hpp"

using namespace koopmpc;

namespace {

std::size_t binomial(std::size_t n, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Trajectory scalar_series(const std::vector<double>& values) {
  Trajectory t;
  for (std::size_t k = 0; k < values.size(); ++k) {
    t.times.push_back(static_cast<double>(k));
    t.states.push_back(Vec::Constant(1, values[k]));
    if (k + 1 < values.size()) t.inputs.push_back(Vec::Constant(1, 10.0 * values[k]));
  }
  return t;
}

}  // namespace

TEST_SUITE("dictionary") {

TEST_CASE("monomial dictionary sizes and order") {
  const auto lin = monomials_dictionary(2, 1);
  CHECK(lin.labels() == std::vector<std::string>{"x1", "x2"});
  CHECK(monomials_dictionary(2, 5).size() == 20);
  for (std::size_t n = 1; n <= 3; ++n) {
    for (int k = 1; k <= 5; ++k) {
      CAPTURE(n);
      CAPTURE(k);
      CHECK(monomials_dictionary(n, k).size() == binomial(n + static_cast<std::size_t>(k), n) - 1);
      CHECK(monomials_dictionary(n, k, true).size() == binomial(n + static_cast<std::size_t>(k), n));
    }
  }
}

TEST_CASE("evaluation under the declared ordering") {
  Vec x(2);
  x << 2, 3;
  const Vec z = monomials_dictionary(2, 2).eval(x);
  Vec expect(5);
  expect << 2, 3, 4, 6, 9;
  CHECK((z - expect).norm() == 0.0);
  CHECK(monomials_dictionary(2, 2).labels() == std::vector<std::string>{"x1", "x2", "x1^2", "x1*x2", "x2^2"});
}

TEST_CASE("gradient of x1^2") {
  const auto d = dictionary_from_labels(2, {"x1^2"});
  Vec x(2);
  x << 3, 1;
  const Mat j = d.jacobian(x);
  CHECK(j(0, 0) == 6.0);
  CHECK(j(0, 1) == 0.0);
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (auto [n, order] : {std::pair{2, 5}, {3, 3}}) {
    const auto d = monomials_dictionary(static_cast<std::size_t>(n), order, true);
    for (int t = 0; t < 100; ++t) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x(i) = u(rng);
      const Mat j = d.jacobian(x);
      const double h = 1e-5;
      for (int i = 0; i < n; ++i) {
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const Vec fd = (d.eval(xp) - d.eval(xm)) / (2 * h);
        for (Eigen::Index r = 0; r < fd.size(); ++r) {
          CHECK(std::abs(fd(r) - j(r, i)) <= 1e-6 * std::max(1.0, std::abs(j(r, i))));
        }
      }
    }
  }
}

TEST_CASE("identity dictionary") {
  const auto d = identity_dictionary(2);
  Vec x(2);
  x << -1.5, 4;
  CHECK((d.eval(x) - x).norm() == 0.0);
  CHECK((recovery_matrix(d) - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("eval_dictionary on an empty sample matrix") {
  const Mat z = eval_dictionary(monomials_dictionary(2, 3), Mat(2, 0));
  CHECK(z.rows() == 9);
  CHECK(z.cols() == 0);
}

TEST_CASE("recovery matrix selects the state") {
  const auto d = monomials_dictionary(2, 5);
  const Mat c = recovery_matrix(d);
  Mat expect = Mat::Zero(2, 20);
  expect.leftCols(2) = Mat::Identity(2, 2);
  CHECK((c - expect).norm() == 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int t = 0; t < 100; ++t) {
    Vec x(2);
    x << u(rng), u(rng);
    CHECK((c * d.eval(x) - x).cwiseAbs().maxCoeff() <= 1e-14);
  }
  CHECK_THROWS_AS(recovery_matrix(dictionary_from_labels(2, {"x1^2", "x1", "x2"})), Error);
}

TEST_CASE("labels round trip") {
  const auto d = monomials_dictionary(3, 3, true);
  const auto back = dictionary_from_labels(3, d.labels());
  CHECK(back.labels() == d.labels());
  Vec x(3);
  x << 0.3, -1.2, 2.5;
  CHECK((back.eval(x) - d.eval(x)).norm() == 0.0);
  CHECK_THROWS_AS(dictionary_from_labels(2, {"x3"}), Error);
  CHECK_THROWS_AS(dictionary_from_labels(2, {"sin(x1)"}), Error);
}

TEST_CASE("delay embedding") {
  SUBCASE("depth one reduces to snapshots") {
    const auto t = scalar_series({1, 2, 3, 4});
    const auto e = delay_embed(t, DelaySpec{1, 1, 1});
    CHECK(e.z.cols() == 3);
    for (Eigen::Index k = 0; k < 3; ++k) {
      CHECK(e.z(0, k) == t.states[static_cast<std::size_t>(k)](0));
      CHECK(e.z_next(0, k) == t.states[static_cast<std::size_t>(k) + 1](0));
      CHECK(e.v(0, k) == t.inputs[static_cast<std::size_t>(k)](0));
    }
  }
  SUBCASE("hand-stacked Hankel columns") {
    const auto e = delay_embed(scalar_series({1, 2, 3, 4}), DelaySpec{2, 1, 1});
    Mat z(2, 2), zn(2, 2);
    z << 2, 3, 1, 2;
    zn << 3, 4, 2, 3;
    CHECK((e.z - z).norm() == 0.0);
    CHECK((e.z_next - zn).norm() == 0.0);
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(delay_embed(scalar_series({1, 2}), DelaySpec{2, 2, 1}), Error);
  }
  SUBCASE("un-stacking recovers the series") {
    std::vector<double> s;
    for (int k = 0; k < 30; ++k) s.push_back(std::sin(0.3 * k) + 0.01 * k * k);
    const auto e = delay_embed(scalar_series(s), DelaySpec{4, 3, 2});
    std::vector<double> back(s.size(), std::nan(""));
    for (Eigen::Index c = 0; c < e.z.cols(); ++c) {
      const std::size_t k = e.time_index[static_cast<std::size_t>(c)];
      for (std::size_t lag = 0; lag < 4; ++lag) back[k - 2 * lag] = e.z(static_cast<Eigen::Index>(lag), c);
      back[k + 1] = e.z_next(0, c);
    }
    for (std::size_t k = 0; k < s.size(); ++k) CHECK(back[k] == s[k]);
  }
}

}  // TEST_SUITE
