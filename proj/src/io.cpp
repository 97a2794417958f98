#include "koopmpc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace koopmpc::io {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorKind::InvalidInput, "format_double: conversion failed");
  return std::string(buf, ptr);
}

json matrix_to_json(const Mat& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorKind::Parse, "matrix entry count does not match rows x cols");
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data.at(static_cast<std::size_t>(i * cols + k)).get<double>();
  }
  return m;
}

json vector_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec vector_from_json(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

namespace {

void header(std::ostream& os, const char* prefix, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) os << ',' << prefix << (i + 1);
}

void row(std::ostream& os, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v(i));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index n = traj.states.empty() ? 0 : traj.states.front().size();
  const Eigen::Index q = traj.inputs.empty() ? 0 : traj.inputs.front().size();
  os << 't';
  header(os, "x", n);
  header(os, "u", q);
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << format_double(traj.times[k]);
    row(os, traj.states[k]);
    if (k < traj.inputs.size()) {
      row(os, traj.inputs[k]);
    } else {
      for (Eigen::Index i = 0; i < q; ++i) os << ',';
    }
    os << '\n';
  }
}

void write_samples_csv(std::ostream& os, const SampleSet& s) {
  os << "traj,t";
  header(os, "x", s.x.rows());
  header(os, "u", s.u.rows());
  header(os, "xp", s.xp.rows());
  os << '\n';
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    const auto idx = static_cast<std::size_t>(j);
    os << (idx < s.trajectory_index.size() ? s.trajectory_index[idx] : 0) << ','
       << format_double(idx < s.times.size() ? s.times[idx] : 0.0);
    row(os, s.x.col(j));
    row(os, s.u.col(j));
    row(os, s.xp.col(j));
    os << '\n';
  }
}

SampleSet read_samples_csv(std::istream& is, double dt) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::Parse, "samples csv: missing header");
  const auto cols = split(line, ',');
  Eigen::Index n = 0, q = 0, np = 0;
  for (const auto& c : cols) {
    if (c.rfind("xp", 0) == 0) ++np;
    else if (c.rfind("x", 0) == 0) ++n;
    else if (c.rfind("u", 0) == 0) ++q;
  }
  if (cols.size() < 2 || cols[0] != "traj" || cols[1] != "t" || n == 0 || n != np) {
    throw Error(ErrorKind::Parse, "samples csv: unexpected header '" + line + "'");
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != cols.size()) {
      throw Error(ErrorKind::Parse, "samples csv line " + std::to_string(line_no) + ": wrong field count");
    }
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_double(c, line_no));
    rows.push_back(std::move(r));
  }
  SampleSet s;
  s.dt = dt;
  const auto m = static_cast<Eigen::Index>(rows.size());
  s.x.resize(n, m);
  s.u.resize(q, m);
  s.xp.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& r = rows[static_cast<std::size_t>(j)];
    s.trajectory_index.push_back(static_cast<std::size_t>(r[0]));
    s.times.push_back(r[1]);
    for (Eigen::Index i = 0; i < n; ++i) s.x(i, j) = r[static_cast<std::size_t>(2 + i)];
    for (Eigen::Index i = 0; i < q; ++i) s.u(i, j) = r[static_cast<std::size_t>(2 + n + i)];
    for (Eigen::Index i = 0; i < n; ++i) s.xp(i, j) = r[static_cast<std::size_t>(2 + n + q + i)];
  }
  return s;
}

std::vector<Trajectory> trajectories_from_samples(const SampleSet& s) {
  std::vector<Trajectory> out;
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const bool new_traj = j == 0 || s.trajectory_index[idx] != s.trajectory_index[idx - 1] ||
                          (s.xp.col(j - 1) - s.x.col(j)).cwiseAbs().maxCoeff() != 0.0;
    if (new_traj) {
      out.emplace_back();
      out.back().times.push_back(s.times[idx]);
      out.back().states.push_back(s.x.col(j));
    }
    auto& t = out.back();
    t.inputs.push_back(s.u.col(j));
    t.states.push_back(s.xp.col(j));
    t.times.push_back(s.times[idx] + s.dt);
  }
  return out;
}

json samples_manifest(const SampleSet& s, std::size_t requested) {
  return json{{"state_dim", s.x.rows()},
              {"input_dim", s.u.rows()},
              {"columns", s.size()},
              {"dt", s.dt},
              {"seed", s.seed},
              {"trajectories_requested", requested},
              {"divergence_count", s.diverged},
              {"hash", hash_samples(s)}};
}

json model_to_json(const LinearControlModel& m) {
  json j;
  j["kind"] = to_string(m.kind);
  j["dims"] = {{"lifted", m.lifted_dim()}, {"input", m.input_dim()}, {"output", m.output_dim()}};
  j["dt"] = m.dt;
  if (m.is_delay()) {
    json coords = json::array();
    for (auto c : m.delay.coords) coords.push_back(c);
    j["delay"] = {{"state_depth", m.delay.state_depth}, {"input_depth", m.delay.input_depth},
                  {"tau_steps", m.delay.tau_steps},     {"coords", coords},
                  {"state_dim", m.delay.state_dim},     {"input_dim", m.delay.input_dim}};
    j["dictionary"] = {{"input_dim", m.delay.state_dim}, {"labels", json::array()}};
  } else {
    j["dictionary"] = {{"input_dim", m.dict.input_dim()}, {"labels", m.dict.labels()}};
  }
  j["a"] = matrix_to_json(m.a);
  j["b"] = matrix_to_json(m.b);
  j["c"] = matrix_to_json(m.c);
  j["fit_residual"] = m.fit_residual;
  j["training"] = {{"hash", m.training_hash}, {"columns", m.training_columns}};
  return j;
}

LinearControlModel model_from_json(const json& j) {
  try {
    LinearControlModel m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.dt = j.at("dt").get<double>();
    m.a = matrix_from_json(j.at("a"));
    m.b = matrix_from_json(j.at("b"));
    m.c = matrix_from_json(j.at("c"));
    m.fit_residual = j.value("fit_residual", 0.0);
    if (j.contains("training")) {
      m.training_hash = j["training"].value("hash", "");
      m.training_columns = j["training"].value("columns", std::size_t{0});
    }
    if (m.is_delay()) {
      const auto& d = j.at("delay");
      m.delay.state_depth = d.at("state_depth").get<std::size_t>();
      m.delay.input_depth = d.at("input_depth").get<std::size_t>();
      m.delay.tau_steps = d.at("tau_steps").get<std::size_t>();
      m.delay.coords = d.at("coords").get<std::vector<Eigen::Index>>();
      m.delay.state_dim = d.at("state_dim").get<std::size_t>();
      m.delay.input_dim = d.at("input_dim").get<std::size_t>();
    } else {
      const auto& d = j.at("dictionary");
      m.dict = dictionary_from_labels(d.at("input_dim").get<std::size_t>(), d.at("labels").get<std::vector<std::string>>());
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model json: ") + e.what());
  }
}

json chain_to_json(const ControlledChain& chain) {
  json j;
  json counts = json::array();
  for (auto c : chain.partition.counts) counts.push_back(c);
  j["partition"] = {{"lo", vector_to_json(chain.partition.lo)},
                    {"hi", vector_to_json(chain.partition.hi)},
                    {"counts", counts},
                    {"boxes", chain.partition.size()},
                    {"outside_state", chain.partition.size()}};
  j["tau"] = chain.mats.empty() ? 0.0 : chain.mats.front().tau;
  j["levels"] = json::array();
  j["matrices"] = json::array();
  for (std::size_t l = 0; l < chain.levels.size(); ++l) {
    j["levels"].push_back(vector_to_json(chain.levels[l]));
    j["matrices"].push_back({{"p", matrix_to_json(chain.mats[l].p)}, {"escaped_columns", chain.mats[l].escaped_columns}});
  }
  return j;
}

void write_matrix_csv(std::ostream& os, const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

void write_closed_loop_csv(std::ostream& os, const ClosedLoopResult& res) {
  const auto& tr = res.trajectory;
  const Eigen::Index n = tr.states.empty() ? 0 : tr.states.front().size();
  const Eigen::Index q = tr.inputs.empty() ? 0 : tr.inputs.front().size();
  os << 't';
  header(os, "x", n);
  header(os, "u", q);
  os << ",stage_cost,cumulative_cost\n";
  for (std::size_t k = 0; k < tr.inputs.size(); ++k) {
    os << format_double(tr.times[k]);
    row(os, tr.states[k]);
    row(os, tr.inputs[k]);
    os << ',' << format_double(res.stage_costs[k]) << ',' << format_double(res.cumulative_cost[k]) << '\n';
  }
}

json closed_loop_summary(const ClosedLoopResult& res, double success_threshold) {
  std::size_t max_iter = 0;
  double max_kkt = 0.0;
  std::size_t warm_ok = 0, solves = 0;
  for (std::size_t k = res.warmup_steps; k < res.solve_stats.size(); ++k) {
    const auto& s = res.solve_stats[k];
    max_iter = std::max(max_iter, s.iterations);
    max_kkt = std::max(max_kkt, s.kkt_residual);
    warm_ok += s.warm_start_feasible ? 1 : 0;
    ++solves;
  }
  return json{{"final_state_norm", res.final_state_norm()},
              {"cumulative_cost", res.total_cost()},
              {"success", res.final_state_norm() < success_threshold},
              {"steps", res.trajectory.inputs.size()},
              {"warmup_steps", res.warmup_steps},
              {"solver", {{"solves", solves}, {"max_iterations", max_iter}, {"max_kkt_residual", max_kkt},
                          {"warm_start_feasible", warm_ok}}}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::InvalidInput, "cannot open '" + path + "' for writing");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Parse, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace koopmpc::io
