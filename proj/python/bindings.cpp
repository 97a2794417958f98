// Python bindings for the core operations. Samples are column-major like the
// C++ API: x has shape (state_dim, n_samples).

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "koopmpc/bench.hpp"
#include "koopmpc/config.hpp"
#include "koopmpc/dictionary.hpp"
#include "koopmpc/io.hpp"
#include "koopmpc/mpc.hpp"
#include "koopmpc/sysid.hpp"
#include "koopmpc/transfer.hpp"

namespace py = pybind11;
using namespace koopmpc;

namespace {

SampleSet make_samples(const Mat& x, const Mat& u, const Mat& xp, double dt) {
  SampleSet s;
  s.x = x;
  s.u = u;
  s.xp = xp;
  s.dt = dt;
  s.trajectory_index.assign(static_cast<std::size_t>(x.cols()), 0);
  s.times.assign(static_cast<std::size_t>(x.cols()), 0.0);
  s.validate();
  return s;
}

// Rows of a (steps, q) array become input vectors.
std::vector<Vec> rows_of(const Mat& m) {
  std::vector<Vec> out;
  for (Eigen::Index k = 0; k < m.rows(); ++k) out.push_back(m.row(k).transpose());
  return out;
}

Mat stack_rows(const std::vector<Vec>& v, Eigen::Index width) {
  Mat m(static_cast<Eigen::Index>(v.size()), width);
  for (std::size_t k = 0; k < v.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = v[k].transpose();
  return m;
}

py::dict trajectory_dict(const Trajectory& t, Eigen::Index n, Eigen::Index q) {
  py::dict d;
  d["t"] = Eigen::Map<const Vec>(t.times.data(), static_cast<Eigen::Index>(t.times.size())).eval();
  d["x"] = stack_rows(t.states, n);
  d["u"] = stack_rows(t.inputs, q);
  return d;
}

Trajectory trajectory_from(const Mat& states, const Mat& inputs, double dt) {
  if (inputs.rows() + 1 != states.rows()) throw Error(ErrorKind::InvalidInput, "trajectory needs one more state row than input rows");
  Trajectory t;
  t.states = rows_of(states);
  t.inputs = rows_of(inputs);
  for (Eigen::Index k = 0; k < states.rows(); ++k) t.times.push_back(static_cast<double>(k) * dt);
  return t;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Koopman-based system identification and model predictive control";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "KoopmpcError", PyExc_RuntimeError);

  // dynamics
  m.def(
      "vanderpol_rhs", [](const Vec& x, const Vec& u, double mu) { return make_vanderpol(mu)(x, u); }, py::arg("x"), py::arg("u"),
      py::arg("mu") = 0.2);
  m.def(
      "simulate_vanderpol",
      [](const Vec& x0, const Mat& inputs, double dt, double mu) {
        const auto sys = make_vanderpol(mu);
        std::vector<double> values(static_cast<std::size_t>(inputs.rows()));
        for (Eigen::Index k = 0; k < inputs.rows(); ++k) values[static_cast<std::size_t>(k)] = inputs(k, 0);
        const auto tr = simulate(sys, x0, ForcingSignal::piecewise(values, dt), static_cast<double>(inputs.rows()) * dt, dt);
        return trajectory_dict(tr, 2, 1);
      },
      py::arg("x0"), py::arg("inputs"), py::arg("dt") = 0.05, py::arg("mu") = 0.2,
      "RK4 with zero-order hold; inputs has shape (steps, 1).");
  m.def(
      "generate_training",
      [](std::size_t n_traj, const Vec& lo, const Vec& hi, double t_end, double dt, std::uint64_t seed, double mu, double amplitude,
         double omega_sigma, std::size_t parallel) {
        TrainingSpec s;
        s.n_traj = n_traj;
        s.box = Box{lo, hi};
        s.t_end = t_end;
        s.dt = dt;
        s.seed = seed;
        s.forcing.amplitude = amplitude;
        s.forcing.omega_sigma = omega_sigma;
        s.parallel = parallel;
        const auto data = generate_trajectories(make_vanderpol(mu), s);
        py::dict d;
        d["x"] = data.samples.x;
        d["u"] = data.samples.u;
        d["xp"] = data.samples.xp;
        d["traj"] = data.samples.trajectory_index;
        d["dropped"] = data.dropped;
        py::list trajs;
        for (const auto& t : data.trajectories) trajs.append(trajectory_dict(t, 2, 1));
        d["trajectories"] = trajs;
        return d;
      },
      py::arg("n_traj") = 200, py::arg("lo") = Vec::Constant(2, -6.0), py::arg("hi") = Vec::Constant(2, 6.0), py::arg("t_end") = 1.0,
      py::arg("dt") = 0.05, py::arg("seed") = 0, py::arg("mu") = 0.2, py::arg("amplitude") = 5.0, py::arg("omega_sigma") = 10.0,
      py::arg("parallel") = 1);
  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("stream"));

  // models
  py::class_<LinearControlModel>(m, "Model")
      .def_property_readonly("kind", [](const LinearControlModel& mdl) { return std::string(to_string(mdl.kind)); })
      .def_readonly("a", &LinearControlModel::a)
      .def_readonly("b", &LinearControlModel::b)
      .def_readonly("c", &LinearControlModel::c)
      .def_readonly("dt", &LinearControlModel::dt)
      .def_readonly("fit_residual", &LinearControlModel::fit_residual)
      .def_readonly("training_hash", &LinearControlModel::training_hash)
      .def_property_readonly("labels", [](const LinearControlModel& mdl) { return mdl.dict.labels(); })
      .def(
          "lift", [](const LinearControlModel& mdl, const Vec& x) { return mdl.lift(x); }, py::arg("x"))
      .def(
          "predict",
          [](const LinearControlModel& mdl, const Mat& past_states, const Mat& past_inputs, const Mat& inputs) {
            // newest first, matching History
            History h{rows_of(past_states), rows_of(past_inputs)};
            return stack_rows(predict_rollout(mdl, h, rows_of(inputs)).states, mdl.output_dim());
          },
          py::arg("states"), py::arg("past_inputs"), py::arg("inputs"),
          "Rollout from a history (rows newest first); returns (steps + 1, n) recovered states.")
      .def("to_json", [](const LinearControlModel& mdl) { return io::model_to_json(mdl).dump(2); })
      .def_static(
          "from_json", [](const std::string& text) { return io::model_from_json(nlohmann::json::parse(text)); }, py::arg("text"));

  m.def(
      "fit_dmdc", [](const Mat& x, const Mat& u, const Mat& xp, double dt, double svd_tol) { return fit_dmdc(make_samples(x, u, xp, dt), {svd_tol}); },
      py::arg("x"), py::arg("u"), py::arg("xp"), py::arg("dt") = 0.05, py::arg("svd_tol") = kDefaultSvdTol);
  m.def(
      "fit_edmdc",
      [](const Mat& x, const Mat& u, const Mat& xp, double dt, int order, bool include_constant, double svd_tol) {
        return fit_edmdc(make_samples(x, u, xp, dt), monomials_dictionary(static_cast<std::size_t>(x.rows()), order, include_constant), {svd_tol});
      },
      py::arg("x"), py::arg("u"), py::arg("xp"), py::arg("dt") = 0.05, py::arg("order") = 5, py::arg("include_constant") = false,
      py::arg("svd_tol") = kDefaultSvdTol);
  m.def(
      "fit_delay",
      [](const std::vector<std::pair<Mat, Mat>>& trajs, std::size_t depth, double dt, std::vector<Eigen::Index> coords, double svd_tol) {
        std::vector<Trajectory> ts;
        for (const auto& [states, inputs] : trajs) ts.push_back(trajectory_from(states, inputs, dt));
        return fit_delay_augmented(ts, DelaySpec{depth, depth, 1}, dt, DelayFitOptions{svd_tol, coords, 0});
      },
      py::arg("trajectories"), py::arg("depth") = 5, py::arg("dt") = 0.05, py::arg("coords") = std::vector<Eigen::Index>{},
      py::arg("svd_tol") = kDefaultSvdTol, "trajectories: list of (states (T+1, n), inputs (T, q)) pairs.");
  m.def(
      "identify_eigenfunction",
      [](const Mat& x, const Mat& x_dot, int order, double lam) {
        const auto theta = monomials_dictionary(static_cast<std::size_t>(x.rows()), order);
        const auto e = identify_eigenfunctions(x, x_dot, theta, lam);
        py::dict d;
        d["xi"] = e.xi;
        d["labels"] = theta.labels();
        d["residual"] = e.residual;
        d["support"] = e.support;
        return d;
      },
      py::arg("x"), py::arg("x_dot"), py::arg("order"), py::arg("lam"));

  // control
  py::class_<MpcConfig>(m, "MpcConfig")
      .def(py::init<>())
      .def_readwrite("q", &MpcConfig::q)
      .def_readwrite("ru", &MpcConfig::ru)
      .def_readwrite("rdu", &MpcConfig::rdu)
      .def_readwrite("horizon", &MpcConfig::horizon)
      .def_readwrite("u_min", &MpcConfig::u_min)
      .def_readwrite("u_max", &MpcConfig::u_max)
      .def_readwrite("du_min", &MpcConfig::du_min)
      .def_readwrite("du_max", &MpcConfig::du_max)
      .def_readwrite("reference", &MpcConfig::reference)
      .def_readwrite("terminal_weight", &MpcConfig::terminal_weight);
  m.def(
      "mpc_step",
      [](const LinearControlModel& mdl, const Vec& x, const Vec& u_prev, const MpcConfig& cfg) {
        const auto r = mpc_step(mdl, History::current(x), u_prev, cfg);
        return py::make_tuple(r.u0, stack_rows(r.sequence, mdl.input_dim()));
      },
      py::arg("model"), py::arg("x"), py::arg("u_prev"), py::arg("config") = MpcConfig{});
  m.def(
      "closed_loop_vanderpol",
      [](const LinearControlModel& mdl, const Vec& x0, double t_end, double dt, const MpcConfig& cfg, double mu) {
        const auto r = closed_loop_run(make_vanderpol(mu), mdl, cfg, x0, t_end, dt);
        py::dict d = trajectory_dict(r.trajectory, 2, 1);
        d["stage_cost"] = r.stage_costs;
        d["total_cost"] = r.total_cost();
        d["final_norm"] = r.final_state_norm();
        return d;
      },
      py::arg("model"), py::arg("x0"), py::arg("t_end") = 30.0, py::arg("dt") = 0.05, py::arg("config") = MpcConfig{}, py::arg("mu") = 0.2);
  m.def(
      "solve_qp",
      [](const Mat& h, const Vec& g, const Vec& lb, const Vec& ub, const Mat& a_ineq, const Vec& b_ineq) {
        QpProblem q{h, g, a_ineq, b_ineq, lb, ub};
        const auto r = solve_qp(q);
        return py::make_tuple(r.x, r.kkt_residual);
      },
      py::arg("h"), py::arg("g"), py::arg("lb"), py::arg("ub"), py::arg("a_ineq") = Mat(0, 0), py::arg("b_ineq") = Vec());

  // transfer operators
  m.def(
      "ulam_vanderpol",
      [](const Vec& lo, const Vec& hi, const std::vector<std::size_t>& counts, const std::vector<double>& levels, double tau,
         std::size_t samples, std::uint64_t seed, double mu, std::size_t parallel) {
        std::vector<Vec> lv;
        for (double l : levels) lv.push_back(Vec::Constant(1, l));
        const auto chain = estimate_controlled_transition(make_vanderpol(mu), BoxPartition{lo, hi, counts}, lv, tau,
                                                          UlamOptions{samples, seed, parallel});
        std::vector<Mat> out;
        for (const auto& tm : chain.mats) out.push_back(tm.p);
        return out;
      },
      py::arg("lo") = Vec::Constant(2, -4.0), py::arg("hi") = Vec::Constant(2, 4.0), py::arg("counts") = std::vector<std::size_t>{20, 20},
      py::arg("levels") = std::vector<double>{-1.0, 0.0, 1.0}, py::arg("tau") = 0.5, py::arg("samples") = 100, py::arg("seed") = 0,
      py::arg("mu") = 0.2, py::arg("parallel") = 1,
      "Column-stochastic transition matrices, one per level; the last state is outside the box.");
  m.def(
      "invariant_density", [](const Mat& p) { return invariant_density(TransitionMatrix{p, 0.0, {}, {}}); }, py::arg("p"));

  // experiment
  m.def(
      "parse_config", [](const std::string& text) { return json_to_py(parse_config_text(text).to_json()); }, py::arg("text"),
      "Resolved configuration from YAML text.");
  m.def(
      "run_benchmark",
      [](const std::string& config_text, const std::string& out_dir, std::size_t parallel) {
        BenchmarkOutput out;
        {
          py::gil_scoped_release release;
          out = run_benchmark(parse_config_text(config_text), out_dir, parallel);
        }
        return json_to_py(out.report);
      },
      py::arg("config_text") = "", py::arg("out_dir") = "out", py::arg("parallel") = 1);
}
