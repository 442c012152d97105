#include "mmv/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "mmv/measure_io.hpp"

namespace mmv {

using nlohmann::json;
using nlohmann::ordered_json;

ConfigError::ConfigError(const std::string& pointer, const std::string& what)
    : ValidationError("config error at " + (pointer.empty() ? std::string("/") : pointer) +
                      ": " + what),
      pointer_(pointer) {}

namespace {

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

const json& empty_object() {
  static const json e = json::object();
  return e;
}

// Runs a struct's own validate() and re-labels its failure with the block.
template <class F>
void labelled(const std::string& pointer, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(pointer, e.what());
  }
}

}  // namespace

ConfigBlock::ConfigBlock(const json* j, std::string pointer, ordered_json* echo)
    : j_(j ? j : &empty_object()), pointer_(std::move(pointer)), echo_(echo) {
  if (!j_->is_object()) throw ConfigError(pointer_, "expected an object");
  if (echo_ && !echo_->is_object()) *echo_ = ordered_json::object();
}

bool ConfigBlock::has(const std::string& key) const { return j_->contains(key); }

std::string ConfigBlock::pointer_of(const std::string& key) const {
  return pointer_ + "/" + escape_token(key);
}

const json& ConfigBlock::at(const std::string& key) const { return j_->at(key); }

void ConfigBlock::mark(const std::string& key) {
  if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) seen_.push_back(key);
}

void ConfigBlock::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(pointer_of(key), what);
}

double ConfigBlock::number(const std::string& key, double def) {
  mark(key);
  double v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_number()) fail(key, "expected a number");
    v = x.get<double>();
    if (!std::isfinite(v)) fail(key, "expected a finite number");
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

double ConfigBlock::required_number(const std::string& key) {
  if (!has(key)) fail(key, "required key is missing");
  return number(key, 0.0);
}

std::size_t ConfigBlock::count(const std::string& key, std::size_t def) {
  mark(key);
  std::size_t v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_number_integer() || x.get<long long>() < 0) fail(key, "expected a non-negative integer");
    v = x.get<std::size_t>();
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

std::uint64_t ConfigBlock::seed(const std::string& key, std::uint64_t def) {
  mark(key);
  std::uint64_t v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_number_unsigned() && !(x.is_number_integer() && x.get<long long>() >= 0)) {
      fail(key, "expected a non-negative integer seed");
    }
    v = x.get<std::uint64_t>();
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

int ConfigBlock::integer(const std::string& key, int def) {
  mark(key);
  int v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_number_integer()) fail(key, "expected an integer");
    const long long w = x.get<long long>();
    if (w < std::numeric_limits<int>::min() || w > std::numeric_limits<int>::max()) {
      fail(key, "integer out of range");
    }
    v = static_cast<int>(w);
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

bool ConfigBlock::flag(const std::string& key, bool def) {
  mark(key);
  bool v = def;
  if (has(key)) {
    if (!at(key).is_boolean()) fail(key, "expected true or false");
    v = at(key).get<bool>();
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

std::string ConfigBlock::text(const std::string& key, const std::string& def) {
  mark(key);
  std::string v = def;
  if (has(key)) {
    if (!at(key).is_string()) fail(key, "expected a string");
    v = at(key).get<std::string>();
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

std::string ConfigBlock::choice(const std::string& key, const std::string& def,
                                const std::vector<std::string>& allowed) {
  const std::string v = text(key, def);
  if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    fail(key, "'" + v + "' is not one of: " + list);
  }
  return v;
}

std::vector<double> ConfigBlock::numbers(const std::string& key, const std::vector<double>& def) {
  mark(key);
  std::vector<double> v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_array()) fail(key, "expected an array of numbers");
    v.clear();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!x[i].is_number() || !std::isfinite(x[i].get<double>())) {
        throw ConfigError(pointer_of(key) + "/" + std::to_string(i), "expected a finite number");
      }
      v.push_back(x[i].get<double>());
    }
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

std::vector<int> ConfigBlock::integers(const std::string& key, const std::vector<int>& def) {
  mark(key);
  std::vector<int> v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_array()) fail(key, "expected an array of integers");
    v.clear();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!x[i].is_number_integer()) {
        throw ConfigError(pointer_of(key) + "/" + std::to_string(i), "expected an integer");
      }
      v.push_back(x[i].get<int>());
    }
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

std::vector<std::uint64_t> ConfigBlock::seeds(const std::string& key,
                                              const std::vector<std::uint64_t>& def) {
  mark(key);
  std::vector<std::uint64_t> v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_array()) fail(key, "expected an array of seeds");
    v.clear();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!x[i].is_number_unsigned()) {
        throw ConfigError(pointer_of(key) + "/" + std::to_string(i),
                          "expected a non-negative integer seed");
      }
      v.push_back(x[i].get<std::uint64_t>());
    }
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

std::vector<std::string> ConfigBlock::texts(const std::string& key,
                                            const std::vector<std::string>& def) {
  mark(key);
  std::vector<std::string> v = def;
  if (has(key)) {
    const json& x = at(key);
    if (!x.is_array()) fail(key, "expected an array of strings");
    v.clear();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!x[i].is_string()) {
        throw ConfigError(pointer_of(key) + "/" + std::to_string(i), "expected a string");
      }
      v.push_back(x[i].get<std::string>());
    }
  }
  if (echo_) (*echo_)[key] = v;
  return v;
}

ConfigBlock ConfigBlock::child(const std::string& key) {
  mark(key);
  const json* sub = has(key) ? &at(key) : nullptr;
  if (sub && !sub->is_object()) fail(key, "expected an object");
  ordered_json* e = nullptr;
  if (echo_) {
    (*echo_)[key] = ordered_json::object();
    e = &(*echo_)[key];
  }
  return ConfigBlock(sub, pointer_of(key), e);
}

const json& ConfigBlock::raw(const std::string& key) {
  mark(key);
  if (!has(key)) fail(key, "required key is missing");
  if (echo_) (*echo_)[key] = ordered_json::parse(at(key).dump());
  return at(key);
}

void ConfigBlock::echo_value(const std::string& key, const ordered_json& v) {
  if (echo_) (*echo_)[key] = v;
}

void ConfigBlock::finish() const {
  for (auto it = j_->begin(); it != j_->end(); ++it) {
    if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
      throw ConfigError(pointer_of(it.key()), "unknown key '" + it.key() + "'");
    }
  }
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset to line and column.
    const std::size_t pos = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    int line = 1, col = 1;
    for (std::size_t i = 0; i < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ValidationError(fmt::format("{}:{}:{}: malformed JSON: {}", source, line, col, e.what()));
  }
}

SamplerSpec read_sampler(ConfigBlock b, int dim) {
  const std::string kind = b.choice("kind", "point", {"point", "gauss", "uniform", "csv"});
  const std::vector<double> zeros(static_cast<std::size_t>(dim), 0.0);
  SamplerSpec s;
  if (kind == "point") {
    s = SamplerSpec::point(b.numbers("value", zeros));
  } else if (kind == "gauss") {
    s = SamplerSpec::gauss(b.numbers("mean", zeros),
                           b.numbers("sd", std::vector<double>(static_cast<std::size_t>(dim), 1.0)));
  } else if (kind == "uniform") {
    s = SamplerSpec::uniform(b.numbers("lo", zeros),
                             b.numbers("hi", std::vector<double>(static_cast<std::size_t>(dim), 1.0)));
  } else {
    const std::string path = b.text("path", "");
    if (path.empty()) b.fail("path", "required key is missing");
    s = SamplerSpec::from_measure(read_measure_csv(path));
  }
  b.finish();
  labelled(b.pointer(), [&] { s.validate(dim, "sampler"); });
  return s;
}

EmpiricalMeasure read_measure(ConfigBlock b, int dim) {
  EmpiricalMeasure mu;
  if (b.has("csv")) {
    mu = read_measure_csv(b.text("csv", ""));
  } else {
    const std::vector<double> coords = b.numbers("atoms", {});
    const std::vector<double> weights = b.numbers("weights", {});
    labelled(b.pointer(), [&] {
      require(!coords.empty(), "atoms must not be empty");
      require(coords.size() % static_cast<std::size_t>(dim) == 0,
              "atoms length must be a multiple of the dimension");
      mu = weights.empty() ? EmpiricalMeasure::uniform(dim, coords)
                           : EmpiricalMeasure(dim, coords, weights);
    });
  }
  b.finish();
  if (mu.dim() != dim) throw ConfigError(b.pointer(), "measure has the wrong dimension");
  return mu;
}

FrozenConfig read_frozen(ConfigBlock b, int d2) {
  FrozenConfig f;
  f.K = b.count("K", f.K);
  f.burn_in = b.number("burn_in", f.burn_in);
  f.avg_window = b.number("avg_window", f.avg_window);
  f.picard_tol = b.number("picard_tol", f.picard_tol);
  f.picard_max = b.integer("picard_max", f.picard_max);
  f.h_fast = b.number("h_fast", f.h_fast);
  f.seed = b.seed("seed", f.seed);
  f.snapshots = b.count("snapshots", f.snapshots);
  f.initial = read_sampler(b.child("initial"), d2);
  b.finish();
  labelled(b.pointer(), [&] { f.validate(); });
  return f;
}

namespace {

RegularityMeta read_meta(ConfigBlock b, const RegularityMeta& def) {
  RegularityMeta m;
  m.alpha = b.number("alpha", def.alpha);
  m.beta = b.number("beta", def.beta);
  m.C1 = b.number("C1", def.C1);
  m.C2 = b.number("C2", def.C2);
  m.C3 = b.number("C3", def.C3);
  m.kappa = b.number("kappa", def.kappa);
  m.p = b.number("p", def.p);
  m.varrho = b.number("varrho", def.varrho);
  m.k = b.number("k", def.k);
  b.finish();
  labelled(b.pointer(), [&] { m.validate(); });
  return m;
}

std::vector<std::vector<std::string>> read_matrix(ConfigBlock& b, const std::string& key, int n) {
  const json& x = b.raw(key);
  const std::string p = b.pointer_of(key);
  if (!x.is_array() || x.size() != static_cast<std::size_t>(n)) {
    throw ConfigError(p, fmt::format("expected {} rows", n));
  }
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const json& row = x[i];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(n)) {
      throw ConfigError(p + "/" + std::to_string(i), fmt::format("expected {} entries", n));
    }
    std::vector<std::string> r;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!row[c].is_string()) {
        throw ConfigError(p + "/" + std::to_string(i) + "/" + std::to_string(c),
                          "expected an expression string");
      }
      r.push_back(row[c].get<std::string>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> read_vector_exprs(ConfigBlock& b, const std::string& key, int n) {
  const auto v = b.texts(key, {});
  if (v.size() != static_cast<std::size_t>(n)) b.fail(key, fmt::format("expected {} expressions", n));
  return v;
}

}  // namespace

ModelSpec read_model(ConfigBlock b) {
  const bool has_builtin = b.has("builtin");
  const bool has_dsl = b.has("dsl");
  if (has_builtin == has_dsl) {
    throw ConfigError(b.pointer(), "exactly one of 'builtin' and 'dsl' is required");
  }
  if (has_builtin) {
    const std::string name = b.text("builtin", "");
    const auto names = builtin_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      b.fail("builtin", "unknown builtin model '" + name + "'");
    }
    ParamMap params;
    if (b.has("params")) {
      const json& p = b.raw("params");
      if (!p.is_object()) b.fail("params", "expected an object");
      for (auto it = p.begin(); it != p.end(); ++it) {
        if (!it.value().is_number()) {
          throw ConfigError(b.pointer_of("params") + "/" + escape_token(it.key()),
                            "expected a number");
        }
        params[it.key()] = it.value().get<double>();
      }
    }
    ModelSpec m;
    std::optional<RegularityMeta> meta;
    if (b.has("meta")) {
      // Defaults for omitted meta fields come from the builtin itself.
      ModelSpec probe;
      labelled(b.pointer_of("params"), [&] { probe = builtin(name, params); });
      meta = read_meta(b.child("meta"), probe.meta);
    }
    labelled(b.pointer_of("params"), [&] { m = builtin(name, params, meta); });
    if (!meta) read_meta(b.child("meta"), m.meta);
    b.echo_value("params", ordered_json(m.params));
    b.finish();
    return m;
  }
  ConfigBlock d = b.child("dsl");
  DslModelSource src;
  src.d1 = d.integer("d1", 1);
  src.d2 = d.integer("d2", 1);
  if (src.d1 < 1) d.fail("d1", "must be at least 1");
  if (src.d2 < 1) d.fail("d2", "must be at least 1");
  src.b = read_vector_exprs(d, "b", src.d1);
  src.sigma = read_matrix(d, "sigma", src.d1);
  src.F = read_vector_exprs(d, "F", src.d2);
  src.G = read_matrix(d, "G", src.d2);
  d.finish();
  const RegularityMeta meta = read_meta(b.child("meta"), RegularityMeta{});
  b.finish();
  ModelSpec m;
  labelled(b.pointer_of("dsl"), [&] { m = model_from_dsl(src, meta); });
  return m;
}

RunConfig parse_config(const json& j, const std::string& source) {
  RunConfig rc;
  rc.source = source;
  rc.echo = ordered_json::object();
  ConfigBlock root(&j, "", &rc.echo);
  if (!root.has("model")) throw ConfigError("/model", "required key is missing");
  rc.model = read_model(root.child("model"));
  const int d1 = rc.model.d1, d2 = rc.model.d2;

  {
    ConfigBlock s = root.child("sim");
    SimConfig& c = rc.sim;
    c.epsilon = s.number("epsilon", c.epsilon);
    c.h_slow = s.number("h_slow", c.h_slow);
    c.eta_fast = s.number("eta_fast", c.eta_fast);
    c.N = s.count("N", c.N);
    c.T = s.number("T", c.T);
    c.seed = s.seed("seed", c.seed);
    c.initial_slow = read_sampler(s.child("initial_slow"), d1);
    c.initial_fast = read_sampler(s.child("initial_fast"), d2);
    s.finish();
    labelled(s.pointer(), [&] { c.validate(); });
  }
  rc.frozen = read_frozen(root.child("frozen"), d2);
  {
    ConfigBlock a = root.child("averaged");
    AveragedConfig& c = rc.averaged;
    c.frozen = rc.frozen;
    rc.variant = a.choice("variant", "correct", {"correct", "naive"}) == "naive" ? Variant::naive
                                                                                : Variant::correct;
    c.K_micro = a.count("K_micro", c.K_micro);
    c.micro_burn = a.number("micro_burn", c.micro_burn);
    c.micro_window = a.number("micro_window", c.micro_window);
    c.init_burn = a.number("init_burn", c.init_burn);
    c.refresh = a.number("refresh", c.refresh);
    c.micro_seed = a.seed("micro_seed", c.micro_seed);
    a.finish();
    labelled(a.pointer(), [&] { c.validate(); });
  }
  {
    ConfigBlock e = root.child("experiment");
    rc.experiment_name = e.text("name", "");
    // The remaining keys belong to the subcommand, which reads them through
    // a ConfigBlock of its own and reports unknown ones there.
    const json* ej = j.contains("experiment") ? &j.at("experiment") : nullptr;
    rc.experiment = ej ? *ej : json::object();
    rc.experiment.erase("name");
  }
  {
    ConfigBlock o = root.child("output");
    rc.output.dir = o.text("dir", rc.output.dir);
    rc.output.format = o.choice("format", rc.output.format, {"csv", "json", "both"});
    o.finish();
  }
  root.finish();
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(parse_json_text(ss.str(), path), path);
}

}  // namespace mmv
