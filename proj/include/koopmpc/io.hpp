#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmpc/dynamics.hpp"
#include "koopmpc/mpc.hpp"
#include "koopmpc/sysid.hpp"
#include "koopmpc/transfer.hpp"

namespace koopmpc::io {

using nlohmann::json;

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

json matrix_to_json(const Mat& m);
Mat matrix_from_json(const json& j);
json vector_to_json(const Vec& v);
Vec vector_from_json(const json& j);

// t, x1..xn, u1..uq; the final state row leaves the input fields empty.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

// traj, t, x1..xn, u1..uq, xp1..xpn; one row per snapshot pair.
void write_samples_csv(std::ostream& os, const SampleSet& samples);
SampleSet read_samples_csv(std::istream& is, double dt);

// Rebuilds trajectories from consecutive snapshot rows sharing a traj index.
std::vector<Trajectory> trajectories_from_samples(const SampleSet& samples);

json samples_manifest(const SampleSet& samples, std::size_t requested_trajectories);

json model_to_json(const LinearControlModel& model);
LinearControlModel model_from_json(const json& j);

json chain_to_json(const ControlledChain& chain);
void write_matrix_csv(std::ostream& os, const Mat& m);

// t, x1..xn, u1..uq, stage_cost, cumulative_cost; one row per applied step.
void write_closed_loop_csv(std::ostream& os, const ClosedLoopResult& res);
json closed_loop_summary(const ClosedLoopResult& res, double success_threshold);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace koopmpc::io
