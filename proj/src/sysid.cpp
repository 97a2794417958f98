#include "koopmpc/sysid.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace koopmpc {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Dmdc: return "dmdc";
    case ModelKind::Edmdc: return "edmdc";
    case ModelKind::DelayMiso: return "delay-miso";
    case ModelKind::DelayAugmented: return "delay-augmented";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "dmdc") return ModelKind::Dmdc;
  if (s == "edmdc") return ModelKind::Edmdc;
  if (s == "delay-miso") return ModelKind::DelayMiso;
  if (s == "delay-augmented" || s == "delay") return ModelKind::DelayAugmented;
  throw Error(ErrorKind::InvalidInput, "unknown model kind '" + s + "'");
}

namespace {

// Returns [A B] solving min ||z_next - A z - B u||_F with the minimum-norm rule.
std::pair<Mat, Mat> regress(const Mat& z, const Mat& u, const Mat& z_next, double svd_tol, std::size_t rank = 0) {
  const Eigen::Index d = z.rows();
  const Eigen::Index q = u.rows();
  Mat phi(d + q, z.cols());
  phi << z, u;
  Mat g;
  if (rank == 0) {
    g = lstsq_min_norm(phi.transpose(), z_next.transpose(), svd_tol);
  } else {
    const SvdFactors f = truncated_svd(phi.transpose(), svd_tol);
    const auto r = static_cast<Eigen::Index>(std::min(rank, f.rank));
    Mat utb = f.u.leftCols(r).transpose() * z_next.transpose();
    utb.array().colwise() /= f.s.head(r).array();
    g = f.vt.topRows(r).transpose() * utb;
  }
  const Mat gt = g.transpose();
  return {gt.leftCols(d), gt.rightCols(q)};
}

double relative_residual(const Mat& z, const Mat& u, const Mat& z_next, const Mat& a, const Mat& b) {
  const double denom = z_next.norm();
  const double r = one_step_residual(z, u, z_next, a, b);
  return denom > 0.0 ? r / denom : r;
}

void require_columns(Eigen::Index have, Eigen::Index need, const char* who) {
  if (have < need) {
    std::ostringstream os;
    os << who << ": " << have << " sample columns, need at least " << need;
    throw Error(ErrorKind::InsufficientData, os.str());
  }
}

// Augmented (z, u_{k-1}, ..., u_{k-d2+1}) form of a delay model with full input block b.
LinearControlModel augment(const LinearControlModel& miso) {
  const auto& dd = miso.delay;
  const Eigen::Index dz = miso.a.rows();
  const auto q = static_cast<Eigen::Index>(dd.input_dim);
  const Eigen::Index past = q * static_cast<Eigen::Index>(dd.input_depth - 1);
  LinearControlModel m = miso;
  m.kind = ModelKind::DelayAugmented;
  m.a = Mat::Zero(dz + past, dz + past);
  m.b = Mat::Zero(dz + past, q);
  m.a.topLeftCorner(dz, dz) = miso.a;
  if (past > 0) {
    m.a.topRightCorner(dz, past) = miso.b.rightCols(past);
    // u_k enters the first slot, older slots shift down by one.
    m.a.bottomRightCorner(past, past).block(q, 0, past - q, past - q).setIdentity();
    m.b.block(dz, 0, q, q).setIdentity();
  }
  m.b.topRows(dz) = miso.b.leftCols(q);
  m.c = Mat::Zero(miso.c.rows(), dz + past);
  m.c.leftCols(dz) = miso.c;
  return m;
}

}  // namespace

double one_step_residual(const Mat& z, const Mat& u, const Mat& z_next, const Mat& a, const Mat& b) {
  return (z_next - a * z - b * u).norm();
}

std::string hash_samples(const SampleSet& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  auto feed_mat = [&](const Mat& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    feed(dims, sizeof(dims));
    feed(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  };
  feed_mat(data.x);
  feed_mat(data.xp);
  feed_mat(data.u);
  feed(&data.dt, sizeof(double));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Vec LinearControlModel::lift(const History& h) const {
  if (h.states.empty()) throw Error(ErrorKind::MissingHistory, "lift: no current state");
  switch (kind) {
    case ModelKind::Dmdc:
      return h.states.front();
    case ModelKind::Edmdc:
      return dict.eval(h.states.front());
    case ModelKind::DelayMiso:
    case ModelKind::DelayAugmented: {
      const std::size_t need_states = state_history() + 1;
      const std::size_t need_inputs = input_history();
      if (h.states.size() < need_states || h.inputs.size() < need_inputs) {
        std::ostringstream os;
        os << "lift: delay model needs " << need_states << " states and " << need_inputs << " past inputs, got "
           << h.states.size() << " and " << h.inputs.size();
        throw Error(ErrorKind::MissingHistory, os.str());
      }
      const auto ns = static_cast<Eigen::Index>(delay.coords.size());
      const auto q = static_cast<Eigen::Index>(delay.input_dim);
      Vec z(a.rows());
      for (std::size_t lag = 0; lag < delay.state_depth; ++lag) {
        const Vec& x = h.states[lag * delay.tau_steps];
        for (Eigen::Index c = 0; c < ns; ++c) {
          z(static_cast<Eigen::Index>(lag) * ns + c) = x(delay.coords[static_cast<std::size_t>(c)]);
        }
      }
      const Eigen::Index dz = ns * static_cast<Eigen::Index>(delay.state_depth);
      for (std::size_t i = 0; i < need_inputs; ++i) z.segment(dz + static_cast<Eigen::Index>(i) * q, q) = h.inputs[i];
      return z;
    }
  }
  return {};
}

void LinearControlModel::validate() const {
  if (a.rows() != a.cols() || b.rows() != a.rows() || c.cols() != a.cols()) {
    throw Error(ErrorKind::InvalidInput, "LinearControlModel: inconsistent matrix dimensions");
  }
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidInput, "LinearControlModel: dt must be positive");
  if (kind == ModelKind::Edmdc && static_cast<Eigen::Index>(dict.size()) != a.rows()) {
    throw Error(ErrorKind::InvalidInput, "LinearControlModel: dictionary size does not match A");
  }
}

LinearControlModel fit_dmdc(const SampleSet& data, const FitOptions& opts) {
  data.validate();
  require_columns(data.size(), data.x.rows() + data.u.rows(), "fit_dmdc");
  auto [a, b] = regress(data.x, data.u, data.xp, opts.svd_tol);
  LinearControlModel m;
  m.kind = ModelKind::Dmdc;
  m.fit_residual = relative_residual(data.x, data.u, data.xp, a, b);
  m.a = std::move(a);
  m.b = std::move(b);
  m.c = Mat::Identity(data.x.rows(), data.x.rows());
  m.dt = data.dt;
  m.dict = identity_dictionary(static_cast<std::size_t>(data.x.rows()));
  m.training_hash = hash_samples(data);
  m.training_columns = static_cast<std::size_t>(data.size());
  return m;
}

LinearControlModel fit_edmdc(const SampleSet& data, const Dictionary& dict, const FitOptions& opts) {
  data.validate();
  const Mat c = recovery_matrix(dict);
  require_columns(data.size(), static_cast<Eigen::Index>(dict.size()) + data.u.rows(), "fit_edmdc");
  const Mat z = eval_dictionary(dict, data.x);
  const Mat z_next = eval_dictionary(dict, data.xp);
  auto [a, b] = regress(z, data.u, z_next, opts.svd_tol);
  LinearControlModel m;
  m.kind = ModelKind::Edmdc;
  m.fit_residual = relative_residual(z, data.u, z_next, a, b);
  m.a = std::move(a);
  m.b = std::move(b);
  m.c = c;
  m.dt = data.dt;
  m.dict = dict;
  m.training_hash = hash_samples(data);
  m.training_columns = static_cast<std::size_t>(data.size());
  return m;
}

LinearControlModel fit_delay_miso(const std::vector<Trajectory>& trajs, const DelaySpec& spec, double dt,
                                  const DelayFitOptions& opts) {
  spec.validate();
  if (trajs.empty()) throw Error(ErrorKind::InsufficientData, "fit_delay_miso: no trajectories");
  std::vector<DelayEmbedding> parts;
  Eigen::Index cols = 0;
  for (const auto& t : trajs) {
    parts.push_back(delay_embed(t, spec, opts.coords));
    cols += parts.back().z.cols();
  }
  const Eigen::Index dz = parts.front().z.rows();
  const Eigen::Index dv = parts.front().v.rows();
  Mat z(dz, cols), v(dv, cols), z_next(dz, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    z.middleCols(off, p.z.cols()) = p.z;
    v.middleCols(off, p.z.cols()) = p.v;
    z_next.middleCols(off, p.z.cols()) = p.z_next;
    off += p.z.cols();
  }
  require_columns(cols, dz + dv, "fit_delay");
  auto [a, b] = regress(z, v, z_next, opts.svd_tol, opts.hankel_rank);

  const Eigen::Index n = trajs.front().states.front().size();
  LinearControlModel m;
  m.kind = ModelKind::DelayMiso;
  m.fit_residual = relative_residual(z, v, z_next, a, b);
  m.a = std::move(a);
  m.b = std::move(b);
  m.dt = dt;
  m.delay.state_depth = spec.d1;
  m.delay.input_depth = spec.d2;
  m.delay.tau_steps = spec.tau_steps;
  m.delay.state_dim = static_cast<std::size_t>(n);
  m.delay.input_dim = trajs.front().inputs.empty() ? 0 : static_cast<std::size_t>(trajs.front().inputs.front().size());
  if (opts.coords.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) m.delay.coords.push_back(i);
  } else {
    m.delay.coords = opts.coords;
  }
  const auto ns = static_cast<Eigen::Index>(m.delay.coords.size());
  m.c = Mat::Zero(ns, dz);
  m.c.leftCols(ns).setIdentity();
  m.training_hash = hash_samples(SampleSet{z, z_next, v, dt, {}, {}, 0, 0});
  m.training_columns = static_cast<std::size_t>(cols);
  return m;
}

LinearControlModel fit_delay_augmented(const std::vector<Trajectory>& trajs, const DelaySpec& spec, double dt,
                                       const DelayFitOptions& opts) {
  if (spec.tau_steps != 1) {
    throw Error(ErrorKind::InvalidInput, "fit_delay_augmented: the augmented form needs tau_steps = 1");
  }
  return augment(fit_delay_miso(trajs, spec, dt, opts));
}

long ParametrizedFamily::find_level(const Vec& u, double tol) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].size() == u.size() && (levels[i] - u).cwiseAbs().maxCoeff() <= tol) return static_cast<long>(i);
  }
  return -1;
}

ParametrizedFamily fit_parametrized(const SampleSet& data, const Dictionary& dict, const std::vector<Vec>& levels,
                                    const FitOptions& opts) {
  data.validate();
  if (levels.empty()) throw Error(ErrorKind::InvalidInput, "fit_parametrized: no levels given");
  ParametrizedFamily fam;
  fam.levels = levels;
  fam.dict = dict;
  fam.dt = data.dt;
  const Mat z_all = eval_dictionary(dict, data.x);
  const Mat zn_all = eval_dictionary(dict, data.xp);
  const auto d = static_cast<Eigen::Index>(dict.size());
  for (const auto& level : levels) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < data.size(); ++j) {
      if (level.size() == data.u.rows() && (data.u.col(j) - level).cwiseAbs().maxCoeff() <= 1e-12) cols.push_back(j);
    }
    if (static_cast<Eigen::Index>(cols.size()) < d) {
      std::ostringstream os;
      os << "fit_parametrized: level (" << level.transpose() << ") has " << cols.size() << " samples, need " << d;
      throw Error(ErrorKind::InsufficientData, os.str());
    }
    Mat z(d, static_cast<Eigen::Index>(cols.size()));
    Mat zn(d, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      z.col(static_cast<Eigen::Index>(k)) = z_all.col(cols[k]);
      zn.col(static_cast<Eigen::Index>(k)) = zn_all.col(cols[k]);
    }
    fam.mats.push_back(lstsq_min_norm(z.transpose(), zn.transpose(), opts.svd_tol).transpose());
  }
  return fam;
}

Trajectory predict_rollout(const LinearControlModel& model, const History& h0, const std::vector<Vec>& inputs) {
  if (model.kind == ModelKind::DelayMiso) return predict_rollout(augment(model), h0, inputs);
  Vec z = model.lift(h0);
  Trajectory out;
  out.times.push_back(0.0);
  out.states.push_back(model.c * z);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].size() != model.input_dim() || !inputs[k].allFinite()) {
      throw Error(ErrorKind::InvalidInput, "predict_rollout: bad input at step " + std::to_string(k));
    }
    z = model.a * z + model.b * inputs[k];
    out.inputs.push_back(inputs[k]);
    out.times.push_back(static_cast<double>(k + 1) * model.dt);
    out.states.push_back(model.c * z);
  }
  return out;
}

Trajectory predict_rollout(const ParametrizedFamily& family, const Vec& x0, const std::vector<Vec>& inputs) {
  const Mat c = recovery_matrix(family.dict);
  Vec z = family.dict.eval(x0);
  Trajectory out;
  out.times.push_back(0.0);
  out.states.push_back(c * z);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const long idx = family.find_level(inputs[k]);
    if (idx < 0) {
      std::ostringstream os;
      os << "predict_rollout: input (" << inputs[k].transpose() << ") at step " << k << " is not a fitted level";
      throw Error(ErrorKind::UnknownLevel, os.str());
    }
    z = family.mats[static_cast<std::size_t>(idx)] * z;
    out.inputs.push_back(inputs[k]);
    out.times.push_back(static_cast<double>(k + 1) * family.dt);
    out.states.push_back(c * z);
  }
  return out;
}

LinearControlModel to_augmented(const LinearControlModel& model) {
  return model.kind == ModelKind::DelayMiso ? augment(model) : model;
}

}  // namespace koopmpc
