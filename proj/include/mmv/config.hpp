#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmv/averaging.hpp"
#include "mmv/engine.hpp"
#include "mmv/error.hpp"
#include "mmv/frozen.hpp"
#include "mmv/model.hpp"

namespace mmv {

// Schema violation; the message starts with the JSON pointer of the key.
class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& pointer, const std::string& what);
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

// Strict reader over one JSON object. Every accessor marks its key as known
// and writes the resolved value (default included) into the echo object;
// finish() rejects whatever was not read.
class ConfigBlock {
 public:
  ConfigBlock(const nlohmann::json* j, std::string pointer, nlohmann::ordered_json* echo);

  bool has(const std::string& key) const;
  const std::string& pointer() const { return pointer_; }
  std::string pointer_of(const std::string& key) const;

  double number(const std::string& key, double def);
  double required_number(const std::string& key);
  std::size_t count(const std::string& key, std::size_t def);
  std::uint64_t seed(const std::string& key, std::uint64_t def);
  int integer(const std::string& key, int def);
  bool flag(const std::string& key, bool def);
  std::string text(const std::string& key, const std::string& def);
  std::string choice(const std::string& key, const std::string& def,
                     const std::vector<std::string>& allowed);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def);
  std::vector<int> integers(const std::string& key, const std::vector<int>& def);
  std::vector<std::uint64_t> seeds(const std::string& key, const std::vector<std::uint64_t>& def);
  std::vector<std::string> texts(const std::string& key, const std::vector<std::string>& def);
  // Nested object; an absent key reads as an empty object.
  ConfigBlock child(const std::string& key);
  // Raw value, echoed verbatim.
  const nlohmann::json& raw(const std::string& key);
  // Overwrites the echoed value of key with a resolved one.
  void echo_value(const std::string& key, const nlohmann::ordered_json& v);

  void finish() const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

 private:
  const nlohmann::json& at(const std::string& key) const;
  void mark(const std::string& key);

  const nlohmann::json* j_;
  std::string pointer_;
  nlohmann::ordered_json* echo_;
  std::vector<std::string> seen_;
};

struct OutputConfig {
  std::string dir = "out";
  std::string format = "both";  // csv | json | both

  bool csv() const { return format != "json"; }
  bool json() const { return format != "csv"; }
};

struct RunConfig {
  ModelSpec model;
  SimConfig sim;
  FrozenConfig frozen;
  AveragedConfig averaged;
  Variant variant = Variant::correct;
  OutputConfig output;
  std::string experiment_name;
  nlohmann::json experiment = nlohmann::json::object();  // read by the subcommand
  std::string source;                                    // file the config came from
  nlohmann::ordered_json echo;                           // resolved values
};

nlohmann::json parse_json_text(const std::string& text, const std::string& source);

RunConfig load_config(const std::string& path);
RunConfig parse_config(const nlohmann::json& j, const std::string& source);

// Shared block readers, also used for experiment parameters.
SamplerSpec read_sampler(ConfigBlock b, int dim);
EmpiricalMeasure read_measure(ConfigBlock b, int dim);
FrozenConfig read_frozen(ConfigBlock b, int d2);
ModelSpec read_model(ConfigBlock b);

}  // namespace mmv
