#include "mmv/measure_io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "mmv/error.hpp"

namespace mmv {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\r')) cell.pop_back();
    std::size_t s = 0;
    while (s < cell.size() && cell[s] == ' ') ++s;
    out.push_back(cell.substr(s));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE ||
      !std::isfinite(v)) {
    throw ValidationError(where + ": not a finite number: '" + cell + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

EmpiricalMeasure read_measure_csv(std::istream& in, const std::string& source) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), source + ": missing header");
  const auto header = split(line);
  require(header.size() >= 2 && header[0] == "w",
          source + ": header must be w,x1,...,xd");
  const int dim = static_cast<int>(header.size()) - 1;
  for (int c = 1; c <= dim; ++c) {
    require(header[c] == "x" + std::to_string(c),
            source + ": header column " + std::to_string(c + 1) +
                " must be x" + std::to_string(c));
  }
  std::vector<double> coords, weights;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    const std::string where = source + ":" + std::to_string(lineno);
    require(cells.size() == header.size(),
            where + ": expected " + std::to_string(header.size()) + " fields");
    const double w = parse_number(cells[0], where);
    require(w >= 0.0, where + ": negative weight");
    weights.push_back(w);
    for (int c = 1; c <= dim; ++c) coords.push_back(parse_number(cells[c], where));
  }
  require(!weights.empty(), source + ": empty measure");
  double total = 0.0;
  for (double w : weights) total += w;
  require(std::abs(total - 1.0) <= 1e-9,
          source + ": weights sum to " + format_double(total) + ", expected 1");
  for (double& w : weights) w /= total;
  return EmpiricalMeasure(dim, std::move(coords), std::move(weights));
}

EmpiricalMeasure read_measure_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  return read_measure_csv(in, path);
}

void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu) {
  out << "w";
  for (int c = 1; c <= mu.dim(); ++c) out << ",x" << c;
  out << "\n";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    out << format_double(mu.weight(i));
    for (double x : mu.atom(i)) out << ',' << format_double(x);
    out << '\n';
  }
}

void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  write_measure_csv(out, mu);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  int d = 1;
  for (const auto& snap : traj) d = std::max({d, snap.slow.dim(), snap.fast.dim()});
  out << "t,kind,w";
  for (int c = 1; c <= d; ++c) out << ",x" << c;
  out << '\n';
  auto rows = [&](const std::string& t, const char* kind, const EmpiricalMeasure& mu) {
    for (std::size_t i = 0; i < mu.size(); ++i) {
      out << t << ',' << kind << ',' << format_double(mu.weight(i));
      for (double x : mu.atom(i)) out << ',' << format_double(x);
      for (int c = mu.dim(); c < d; ++c) out << ',';
      out << '\n';
    }
  };
  for (const auto& snap : traj) {
    const std::string t = format_double(snap.t);
    rows(t, "slow", snap.slow);
    rows(t, "fast", snap.fast);
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  write_trajectory_csv(out, traj);
}

}  // namespace mmv
