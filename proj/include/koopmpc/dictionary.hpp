#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "koopmpc/dynamics.hpp"
#include "koopmpc/numerics.hpp"

namespace koopmpc {

// One scalar observable with its analytic gradient.
struct Observable {
  std::string label;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::optional<Eigen::Index> coordinate;  // set when the observable is x_i itself
};

// Ordered observable list defining the lifting z = f(x). Immutable once built.
class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(std::size_t n_in, std::vector<Observable> terms);

  std::size_t input_dim() const { return n_in_; }
  std::size_t size() const { return terms_.size(); }
  const std::vector<Observable>& terms() const { return terms_; }
  std::vector<std::string> labels() const;

  // Set for monomial dictionaries; one exponent row per observable.
  const std::vector<std::vector<int>>& exponents() const { return exponents_; }

  Vec eval(const Vec& x) const;
  // d x n Jacobian of the lifting at x.
  Mat jacobian(const Vec& x) const;

 private:
  friend Dictionary polynomial_dictionary(std::size_t n, const std::vector<std::vector<int>>& exponents);
  std::size_t n_in_ = 0;
  std::vector<Observable> terms_;
  std::vector<std::vector<int>> exponents_;
};

Dictionary identity_dictionary(std::size_t n);

// Observables x^e for each exponent row; a zero row is the constant 1.
Dictionary polynomial_dictionary(std::size_t n, const std::vector<std::vector<int>>& exponents);

// All monomials of total degree 1..max_order in graded-lex order (so the state
// coordinates come first); the constant, if requested, is appended last.
Dictionary monomials_dictionary(std::size_t n, int max_order, bool include_constant = false);

// Inverse of Dictionary::labels() for monomial labels such as "x1^2*x2" or "1".
Dictionary dictionary_from_labels(std::size_t n, const std::vector<std::string>& labels);

std::string monomial_label(const std::vector<int>& exponent);

// Column j of the result is f(x.col(j)).
Mat eval_dictionary(const Dictionary& dict, const Mat& x);

// n x d selector C with C f(x) = x; requires the state coordinates to be the
// first n observables.
Mat recovery_matrix(const Dictionary& dict);

struct DelaySpec {
  std::size_t d1 = 1;  // state depth
  std::size_t d2 = 1;  // input depth
  std::size_t tau_steps = 1;
  void validate() const;
};

// Hankel-stacked snapshot columns, newest sample on top.
struct DelayEmbedding {
  Mat z;       // (|coords| d1) x m
  Mat v;       // (q d2) x m
  Mat z_next;  // z one step later
  std::vector<std::size_t> time_index;  // k for each column
};

// coords selects which state components are embedded; empty means all.
DelayEmbedding delay_embed(const Trajectory& traj, const DelaySpec& spec, const std::vector<Eigen::Index>& coords = {});

}  // namespace koopmpc
