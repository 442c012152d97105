#pragma once

#include <istream>
#include <ostream>
#include <string>

#include "mmv/engine.hpp"
#include "mmv/measure.hpp"

namespace mmv {

// CSV with header "w,x1,...,xd". Readers renormalize when the weights sum to
// within 1e-9 of one and reject anything further off.
EmpiricalMeasure read_measure_csv(std::istream& in, const std::string& source);
EmpiricalMeasure read_measure_csv(const std::string& path);
void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu);
void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu);

std::string format_double(double v);

// One row per atom and snapshot: t,kind,w,x1..xd with kind slow or fast.
// d is the larger of the two dimensions; shorter rows leave trailing fields
// empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace mmv
