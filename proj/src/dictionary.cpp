#include "koopmpc/dictionary.hpp"

#include <cmath>
#include <sstream>

namespace koopmpc {

namespace {

double ipow(double base, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

Observable make_monomial(const std::vector<int>& exponent) {
  Observable obs;
  obs.label = monomial_label(exponent);
  int degree = 0;
  Eigen::Index coord = -1;
  for (std::size_t i = 0; i < exponent.size(); ++i) {
    degree += exponent[i];
    if (exponent[i] == 1) coord = static_cast<Eigen::Index>(i);
  }
  if (degree == 1) obs.coordinate = coord;
  obs.value = [exponent](const Vec& x) {
    double v = 1.0;
    for (std::size_t i = 0; i < exponent.size(); ++i) v *= ipow(x(static_cast<Eigen::Index>(i)), exponent[i]);
    return v;
  };
  obs.gradient = [exponent](const Vec& x) {
    const auto n = static_cast<Eigen::Index>(exponent.size());
    Vec g = Vec::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int ej = exponent[static_cast<std::size_t>(j)];
      if (ej == 0) continue;
      double v = static_cast<double>(ej) * ipow(x(j), ej - 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j) v *= ipow(x(i), exponent[static_cast<std::size_t>(i)]);
      }
      g(j) = v;
    }
    return g;
  };
  return obs;
}

// Exponent vectors of total degree `degree` in lex order, x1 power descending.
void exponents_of_degree(std::size_t n, int degree, std::size_t pos, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
  if (pos + 1 == n) {
    cur[pos] = degree;
    out.push_back(cur);
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[pos] = e;
    exponents_of_degree(n, degree - e, pos + 1, cur, out);
  }
}

}  // namespace

Dictionary::Dictionary(std::size_t n_in, std::vector<Observable> terms) : n_in_(n_in), terms_(std::move(terms)) {
  for (const auto& t : terms_) {
    if (!t.value || !t.gradient) throw Error(ErrorKind::InvalidInput, "Dictionary: observable '" + t.label + "' lacks a function");
  }
}

std::vector<std::string> Dictionary::labels() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(t.label);
  return out;
}

Vec Dictionary::eval(const Vec& x) const {
  if (x.size() != static_cast<Eigen::Index>(n_in_)) throw Error(ErrorKind::InvalidInput, "Dictionary::eval: state dimension mismatch");
  Vec z(static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t i = 0; i < terms_.size(); ++i) z(static_cast<Eigen::Index>(i)) = terms_[i].value(x);
  return z;
}

Mat Dictionary::jacobian(const Vec& x) const {
  Mat j(static_cast<Eigen::Index>(terms_.size()), static_cast<Eigen::Index>(n_in_));
  for (std::size_t i = 0; i < terms_.size(); ++i) j.row(static_cast<Eigen::Index>(i)) = terms_[i].gradient(x).transpose();
  return j;
}

std::string monomial_label(const std::vector<int>& exponent) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < exponent.size(); ++i) {
    if (exponent[i] == 0) continue;
    if (!first) os << '*';
    os << 'x' << (i + 1);
    if (exponent[i] > 1) os << '^' << exponent[i];
    first = false;
  }
  return first ? std::string("1") : os.str();
}

Dictionary identity_dictionary(std::size_t n) {
  std::vector<std::vector<int>> ex;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> e(n, 0);
    e[i] = 1;
    ex.push_back(e);
  }
  return polynomial_dictionary(n, ex);
}

Dictionary polynomial_dictionary(std::size_t n, const std::vector<std::vector<int>>& exponents) {
  std::vector<Observable> terms;
  for (const auto& e : exponents) {
    if (e.size() != n) throw Error(ErrorKind::InvalidInput, "polynomial_dictionary: exponent length mismatch");
    for (int v : e) {
      if (v < 0) throw Error(ErrorKind::InvalidInput, "polynomial_dictionary: negative exponent");
    }
    terms.push_back(make_monomial(e));
  }
  Dictionary d(n, std::move(terms));
  d.exponents_ = exponents;
  return d;
}

Dictionary monomials_dictionary(std::size_t n, int max_order, bool include_constant) {
  if (max_order < 1) throw Error(ErrorKind::InvalidInput, "monomials_dictionary: max_order must be at least 1");
  if (n == 0) throw Error(ErrorKind::InvalidInput, "monomials_dictionary: state dimension must be positive");
  std::vector<std::vector<int>> ex;
  std::vector<int> cur(n, 0);
  for (int deg = 1; deg <= max_order; ++deg) exponents_of_degree(n, deg, 0, cur, ex);
  if (include_constant) ex.emplace_back(n, 0);
  return polynomial_dictionary(n, ex);
}

Dictionary dictionary_from_labels(std::size_t n, const std::vector<std::string>& labels) {
  std::vector<std::vector<int>> ex;
  for (const auto& label : labels) {
    std::vector<int> e(n, 0);
    if (label != "1") {
      std::stringstream ss(label);
      std::string factor;
      while (std::getline(ss, factor, '*')) {
        int power = 1;
        std::size_t idx = 0;
        const auto caret = factor.find('^');
        try {
          if (factor.size() < 2 || factor[0] != 'x') throw std::invalid_argument(factor);
          idx = std::stoul(factor.substr(1, caret == std::string::npos ? std::string::npos : caret - 1));
          if (caret != std::string::npos) power = std::stoi(factor.substr(caret + 1));
        } catch (const std::exception&) {
          throw Error(ErrorKind::UnsupportedDictionary, "cannot parse observable label '" + label + "'");
        }
        if (idx < 1 || idx > n || power < 1) {
          throw Error(ErrorKind::UnsupportedDictionary, "observable label '" + label + "' out of range");
        }
        e[idx - 1] += power;
      }
    }
    ex.push_back(e);
  }
  return polynomial_dictionary(n, ex);
}

Mat eval_dictionary(const Dictionary& dict, const Mat& x) {
  if (x.rows() != static_cast<Eigen::Index>(dict.input_dim())) {
    throw Error(ErrorKind::InvalidInput, "eval_dictionary: state rows do not match dictionary input dimension");
  }
  Mat z(static_cast<Eigen::Index>(dict.size()), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) z.col(j) = dict.eval(x.col(j));
  if (!z.allFinite()) throw Error(ErrorKind::InvalidInput, "eval_dictionary: non-finite observable value");
  return z;
}

Mat recovery_matrix(const Dictionary& dict) {
  const auto n = static_cast<Eigen::Index>(dict.input_dim());
  const auto d = static_cast<Eigen::Index>(dict.size());
  if (d < n) throw Error(ErrorKind::UnsupportedDictionary, "recovery_matrix: dictionary smaller than the state");
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = dict.terms()[static_cast<std::size_t>(i)].coordinate;
    if (!c || *c != i) {
      throw Error(ErrorKind::UnsupportedDictionary, "recovery_matrix: observable " + std::to_string(i) +
                                                        " is not state coordinate x" + std::to_string(i + 1));
    }
  }
  Mat c = Mat::Zero(n, d);
  c.leftCols(n).setIdentity();
  return c;
}

void DelaySpec::validate() const {
  if (d1 < 1 || d2 < 1 || tau_steps < 1) throw Error(ErrorKind::InvalidInput, "DelaySpec: depths and delay must be at least 1");
}

DelayEmbedding delay_embed(const Trajectory& traj, const DelaySpec& spec, const std::vector<Eigen::Index>& coords_in) {
  spec.validate();
  const std::size_t len = traj.states.size();
  if (len == 0) throw Error(ErrorKind::InsufficientData, "delay_embed: empty trajectory");
  const Eigen::Index n = traj.states.front().size();
  std::vector<Eigen::Index> coords = coords_in;
  if (coords.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) coords.push_back(i);
  }
  for (auto c : coords) {
    if (c < 0 || c >= n) throw Error(ErrorKind::InvalidInput, "delay_embed: coordinate index out of range");
  }
  const std::size_t start = (std::max(spec.d1, spec.d2) - 1) * spec.tau_steps;
  // Column k needs states k+1 and input k.
  if (len < start + 2 || traj.inputs.size() + 1 < len) {
    std::ostringstream os;
    os << "delay_embed: trajectory of " << len << " samples is too short for depths (" << spec.d1 << ", " << spec.d2
       << ")";
    throw Error(ErrorKind::InsufficientData, os.str());
  }
  const auto ns = static_cast<Eigen::Index>(coords.size());
  const Eigen::Index q = traj.inputs.empty() ? 0 : traj.inputs.front().size();
  const auto m = static_cast<Eigen::Index>(len - 1 - start);
  const auto d1 = static_cast<Eigen::Index>(spec.d1);
  const auto d2 = static_cast<Eigen::Index>(spec.d2);

  DelayEmbedding out;
  out.z.resize(ns * d1, m);
  out.z_next.resize(ns * d1, m);
  out.v.resize(q * d2, m);
  auto stack_state = [&](std::size_t k, Eigen::Index col, Mat& dst) {
    for (Eigen::Index lag = 0; lag < d1; ++lag) {
      const Vec& x = traj.states[k - static_cast<std::size_t>(lag) * spec.tau_steps];
      for (Eigen::Index c = 0; c < ns; ++c) dst(lag * ns + c, col) = x(coords[static_cast<std::size_t>(c)]);
    }
  };
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::size_t k = start + static_cast<std::size_t>(j);
    stack_state(k, j, out.z);
    stack_state(k + 1, j, out.z_next);
    for (Eigen::Index lag = 0; lag < d2; ++lag) {
      out.v.block(lag * q, j, q, 1) = traj.inputs[k - static_cast<std::size_t>(lag) * spec.tau_steps];
    }
    out.time_index.push_back(k);
  }
  return out;
}

}  // namespace koopmpc
