#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "mmv/config.hpp"
#include "mmv/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = mmv::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mmv_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json base_config() {
  return json::parse(R"({
    "model": {"builtin": "linear_ou",
              "params": {"a": 2, "c": 1, "kappa0": 0.5, "g0": 1.4142135623730951,
                         "b0": 1, "b1": 1, "b2": 0, "sigma0": 1}},
    "sim": {"epsilon": 0.05, "N": 600, "T": 0.1, "seed": 7}
  })");
}

std::string write_config(const fs::path& dir, const json& j) {
  const auto p = (dir / "config.json").string();
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, UnknownKeyNamesItsPointer) {
  const auto d = scratch("unknown_key");
  json j = base_config();
  j["sim"]["epsilonn"] = 0.1;
  const auto r = run({"simulate", "--config", write_config(d, j), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("/sim/epsilonn"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(d / "o" / "manifest.json"));
}

TEST(Cli, MalformedJsonReportsLineAndColumn) {
  const auto d = scratch("malformed");
  const auto p = (d / "bad.json").string();
  std::ofstream(p) << "{\n  \"sim\": {\"N\": 10,}\n}\n";
  const auto r = run({"simulate", "--config", p});
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("bad.json:2:"), std::string::npos) << r.err;
}

TEST(Cli, MissingConfigFileIsAValidationError) {
  const auto r = run({"simulate", "--config", "/nonexistent/mmv.json"});
  EXPECT_EQ(r.code, mmv::cli::validation);
}

TEST(Cli, RateSweepNeedsDecreasingEps) {
  const auto d = scratch("eps_order");
  json j = base_config();
  j["experiment"] = {{"name", "strong"}, {"eps_list", {0.01, 0.05, 0.1}}};
  const auto r = run({"rates", "--config", write_config(d, j), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("/experiment"), std::string::npos) << r.err;
}

TEST(Cli, WrongTypeIsRejected) {
  const auto d = scratch("wrong_type");
  json j = base_config();
  j["sim"]["N"] = "many";
  const auto r = run({"simulate", "--config", write_config(d, j), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("/sim/N"), std::string::npos) << r.err;
}

TEST(Cli, UnknownSubcommandAndHelp) {
  EXPECT_EQ(run({"teleport"}).code, mmv::cli::validation);
  EXPECT_EQ(run({}).code, mmv::cli::validation);
  const auto h = run({"--help"});
  EXPECT_EQ(h.code, mmv::cli::ok);
  EXPECT_NE(h.out.find("demo-wrong-limit"), std::string::npos);
}

TEST(Cli, CheckPassesOnLinearOu) {
  const auto d = scratch("check_pass");
  const auto r = run({"check", "--config", write_config(d, base_config()), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::ok) << r.err;
  const json c = json::parse(slurp(d / "o" / "check.json"));
  EXPECT_TRUE(c["pass"].get<bool>());
}

TEST(Cli, CheckFailsOnExpandingFastDrift) {
  const auto d = scratch("check_fail");
  json j = base_config();
  j["model"] = json::parse(R"({"dsl": {"b": ["0"], "sigma": [["1"]], "F": ["y[0]"], "G": [["1"]]},
                               "meta": {"C1": 1, "C3": 1}})");
  const auto r = run({"check", "--config", write_config(d, j), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::validation);
  const json c = json::parse(slurp(d / "o" / "check.json"));
  EXPECT_FALSE(c["dissipativity"]["pass"].get<bool>());
}

TEST(Cli, OutputsDoNotDependOnThreadCount) {
  const auto d = scratch("threads");
  json j = base_config();
  j["experiment"] = {{"record_every", 0.05}};
  const auto cfg = write_config(d, j);
  std::string first;
  for (const char* t : {"1", "3"}) {
    const auto o = d / (std::string("o") + t);
    ASSERT_EQ(run({"simulate", "--config", cfg, "--threads", t, "--out", o.string()}).code, 0);
    const std::string bytes = slurp(o / "trajectory.csv");
    ASSERT_FALSE(bytes.empty());
    if (first.empty()) {
      first = bytes;
    } else {
      EXPECT_EQ(bytes, first);
    }
  }
}

TEST(Cli, ManifestRecordsResolvedConfigAndHashes) {
  const auto d = scratch("manifest");
  json j = base_config();
  j["experiment"] = {{"record_every", 0.05}};
  const auto o = d / "o";
  ASSERT_EQ(run({"simulate", "--config", write_config(d, j), "--seed", "99", "--out", o.string()}).code, 0);
  const json m = json::parse(slurp(o / "manifest.json"));
  EXPECT_EQ(m["subcommand"], "simulate");
  EXPECT_EQ(m["seed"], 99);
  EXPECT_EQ(m["config"]["sim"]["seed"], 99);
  // Defaults are echoed next to the values given.
  EXPECT_TRUE(m["config"]["sim"].contains("h_slow"));
  EXPECT_TRUE(m["config"]["frozen"].contains("K"));
  EXPECT_EQ(m["config"]["experiment"]["record_every"], 0.05);
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 40u);
  ASSERT_FALSE(m["outputs"].empty());
  for (const auto& f : m["outputs"]) {
    const auto p = o / f["file"].get<std::string>();
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_EQ(f["bytes"].get<std::uintmax_t>(), fs::file_size(p));
    EXPECT_EQ(f["sha1"], mmv::file_blob_sha1(p.string()));
  }
}

TEST(Cli, SameSeedSameBytesOtherSeedDiffers) {
  const auto d = scratch("seeds");
  json j = base_config();
  j["sim"]["initial_slow"] = {{"kind", "gauss"}, {"mean", {0.0}}, {"sd", {1.0}}};
  const auto cfg = write_config(d, j);
  auto bytes = [&](const std::string& seed, const std::string& dir) {
    EXPECT_EQ(run({"simulate", "--config", cfg, "--seed", seed, "--out", (d / dir).string()}).code, 0);
    return slurp(d / dir / "trajectory.csv");
  };
  const auto a = bytes("1", "a"), b = bytes("1", "b"), c = bytes("2", "c");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Cli, BadThreadEnvironmentIsRejected) {
  const auto d = scratch("env");
  const auto cfg = write_config(d, base_config());
  ::setenv("MMV_THREADS", "lots", 1);
  const auto r = run({"check", "--config", cfg, "--out", (d / "o").string()});
  ::unsetenv("MMV_THREADS");
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("MMV_THREADS"), std::string::npos);
}

TEST(Cli, FrozenRequiresMu) {
  const auto d = scratch("frozen_mu");
  json j = base_config();
  j["experiment"] = {{"mode", "pooled"}};
  const auto r = run({"frozen", "--config", write_config(d, j), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("/experiment/mu"), std::string::npos) << r.err;
}

TEST(Cli, WrongLimitDemoNeedsItsModel) {
  const auto d = scratch("wrong_limit_model");
  const auto r = run({"demo-wrong-limit", "--config", write_config(d, base_config()), "--out", (d / "o").string()});
  EXPECT_EQ(r.code, mmv::cli::validation);
  EXPECT_NE(r.err.find("/model/builtin"), std::string::npos) << r.err;
  // Nothing is created for a rejected run.
  EXPECT_FALSE(fs::exists(d / "o"));
}

TEST(Config, DslModelAndSamplers) {
  const json j = json::parse(R"({
    "model": {"dsl": {"b": ["-x[0] + y[0]"], "sigma": [["1"]], "F": ["-y[0]"], "G": [["1"]]}},
    "sim": {"initial_slow": {"kind": "uniform", "lo": [-1], "hi": [1]}},
    "averaged": {"variant": "naive"},
    "output": {"format": "json"}
  })");
  const auto rc = mmv::parse_config(j, "inline");
  EXPECT_EQ(rc.model.d1, 1);
  EXPECT_EQ(rc.variant, mmv::Variant::naive);
  EXPECT_TRUE(rc.output.json());
  EXPECT_FALSE(rc.output.csv());
  EXPECT_EQ(rc.echo["averaged"]["variant"], "naive");
}

TEST(Config, BadDslExpressionIsLocated) {
  const json j = json::parse(R"({"model": {"dsl": {"b": ["-x[0] +"], "sigma": [["1"]], "F": ["-y[0]"], "G": [["1"]]}}})");
  try {
    mmv::parse_config(j, "inline");
    FAIL() << "expected an error";
  } catch (const mmv::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("/model/dsl"), std::string::npos) << e.what();
  }
}

TEST(Config, NonPositiveStepIsRejected) {
  json j = base_config();
  j["sim"]["h_slow"] = 0.0;
  EXPECT_THROW(mmv::parse_config(j, "inline"), mmv::ConfigError);
}
