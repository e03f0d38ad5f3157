#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = structvi::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("structvi_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }

  std::string write(const std::string& file, const std::string& text) const {
    std::ofstream(dir / file) << text;
    return (dir / file).string();
  }
  std::string config(const json& j, const std::string& file = "config.json") const {
    return write(file, j.dump(2));
  }
};

json wiener20(long long steps = 2000) {
  return {{"model", "wiener_gaussian"},
          {"hyperparameters", {{"sigma0", 1.0}, {"sigma", 1.0}, {"tau", 1.0}}},
          {"observations", {{"simulate", {{"T", 20}, {"seed", 1}}}}},
          {"fit", {{"max_steps", steps}}}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("fit is byte-for-byte reproducible and writes its artifacts") {
  Scratch s("fit");
  const auto cfg = s.config(wiener20());
  const auto a = run({"fit", "--config", cfg, "--seed", "7", "--out", (s.dir / "a").string()});
  const auto b = run({"fit", "--config", cfg, "--seed", "7", "--out", (s.dir / "b").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(s.dir / "a" / "posterior.csv") == slurp(s.dir / "b" / "posterior.csv"));
  CHECK(lines(slurp(s.dir / "a" / "posterior.csv")).size() == 21);
  CHECK(lines(slurp(s.dir / "a" / "posterior.csv"))[0] == "t,mu,marginal_std");
  CHECK(lines(slurp(s.dir / "a" / "elbo_trace.csv")).size() == 2001);

  const json report = json::parse(slurp(s.dir / "a" / "fit_report.json"));
  CHECK(report["seed"] == 7);
  CHECK(report["steps_run"] == 2000);
  CHECK(report["variant"] == "structured");
  CHECK(report["final_params"]["mu"].size() == 20);
}

TEST_CASE("mean_field variant pins omega") {
  Scratch s("mf");
  const auto cfg = s.config(wiener20(500));
  const auto r = run({"fit", "--config", cfg, "--variant", "mean_field", "--out", s.dir.string()});
  REQUIRE(r.code == 0);
  const json report = json::parse(slurp(s.dir / "fit_report.json"));
  CHECK(report["variant"] == "mean_field");
  for (const auto& w : report["final_params"]["omega"]) CHECK(w.get<double>() == 0.0);
}

TEST_CASE("configuration errors exit with code 2") {
  Scratch s("errors");
  json j = wiener20();
  j["observations"] = "missing_series.csv";
  auto r = run({"fit", "--config", s.config(j), "--out", s.dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("missing_series.csv") != std::string::npos);

  r = run({"fit", "--config", s.write("broken.json", "{ not json"), "--out", s.dir.string()});
  CHECK(r.code == 2);

  r = run({"fit", "--config", (s.dir / "nope.json").string()});
  CHECK(r.code == 2);

  j = wiener20();
  j["hyperparameters"]["tau"] = -1.0;
  CHECK(run({"fit", "--config", s.config(j), "--out", s.dir.string()}).code == 2);

  j = wiener20();
  j["fit"]["optimizer"] = "rmsprop";
  CHECK(run({"fit", "--config", s.config(j), "--out", s.dir.string()}).code == 2);

  CHECK(run({"fit", "--config", s.config(wiener20()), "--variant", "full"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE("observations can come from a CSV file next to the config") {
  Scratch s("csv");
  s.write("series.csv", "x\n0.5\n1.0\n-0.25\n");
  json j = wiener20(200);
  j["observations"] = "series.csv";
  const auto r = run({"fit", "--config", s.config(j), "--out", (s.dir / "o").string()});
  REQUIRE(r.code == 0);
  CHECK(lines(slurp(s.dir / "o" / "posterior.csv")).size() == 4);
}

TEST_CASE("oracle-check writes the exact posterior and the gap to a fit") {
  Scratch s("oracle");
  json zeros = wiener20();
  zeros["observations"] = std::vector<double>(6, 0.0);
  auto r = run({"oracle-check", "--config", s.config(zeros), "--out", (s.dir / "z").string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(s.dir / "z" / "oracle.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "t,exact_mean,exact_std");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto first = rows[i].find(',');
    CHECK(std::stod(rows[i].substr(first + 1)) == 0.0);
  }
  CHECK(r.out.find("log_evidence") != std::string::npos);

  const auto cfg = s.config(wiener20(20000));
  REQUIRE(run({"fit", "--config", cfg, "--out", (s.dir / "f").string()}).code == 0);
  r = run({"oracle-check", "--config", cfg, "--posterior", (s.dir / "f" / "posterior.csv").string(), "--out",
           (s.dir / "g").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(s.dir / "g" / "gap.csv"));
  const auto pos = r.out.find("linf_mean_gap");
  REQUIRE(pos != std::string::npos);
  std::istringstream value(r.out.substr(r.out.find_first_of("0123456789", pos)));
  double gap = 1e9;
  value >> gap;
  CHECK(gap <= 0.05);
}

TEST_CASE("oracle-check rejects non-Gaussian models") {
  Scratch s("oracle_poisson");
  const json j = {{"model", "ou_poisson"},
                  {"hyperparameters", {{"c", 0.9}, {"sigma", 0.3}}},
                  {"observations", {1, 0, 2}}};
  const auto r = run({"oracle-check", "--config", s.config(j), "--out", s.dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("oracle requires wiener_gaussian") != std::string::npos);
}

TEST_CASE("benchmark writes the scaling table") {
  Scratch s("bench");
  json j = wiener20();
  j["benchmark"] = {{"Ts", {32, 64, 128}}, {"repetitions", 3}, {"dense_max_T", 64}};
  const auto r = run({"benchmark", "--config", s.config(j), "--out", s.dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(s.dir / "scaling.csv"));
  REQUIRE(!rows.empty());
  CHECK(rows[0] == "T,variant,median_seconds_per_step");
  int dense = 0;
  for (const auto& row : rows) {
    if (row.find(",dense,") != std::string::npos) {
      ++dense;
      CHECK(row.rfind("128,", 0) != 0);
    }
  }
  CHECK(dense == 2);
  CHECK(rows.size() == 1 + 3 + 2);
  CHECK(r.out.find("slope_linear") != std::string::npos);
}

TEST_CASE("sample draws from a stored variational record") {
  Scratch s("sample");
  const json j = {{"variational", {{"T", 2}, {"mu", {0.0, 1.0}}, {"nu", {1.0, 2.0}}, {"omega", {0.5}}}},
                  {"sample", {{"count", 3}}}};
  const auto cfg = s.config(j);
  REQUIRE(run({"sample", "--config", cfg, "--seed", "4", "--out", (s.dir / "a").string()}).code == 0);
  REQUIRE(run({"sample", "--config", cfg, "--seed", "4", "--out", (s.dir / "b").string()}).code == 0);
  const auto a = slurp(s.dir / "a" / "samples.csv");
  CHECK(a == slurp(s.dir / "b" / "samples.csv"));
  const auto rows = lines(a);
  CHECK(rows[0] == "sample,t,z");
  CHECK(rows.size() == 1 + 3 * 2);
}

TEST_CASE("divergence exits with code 3 and leaves a snapshot") {
  Scratch s("diverge");
  json j = wiener20(100);
  j["fit"]["optimizer"] = "sgd";
  j["fit"]["learning_rate"] = 1e200;
  const auto r = run({"fit", "--config", s.config(j), "--out", s.dir.string()});
  CHECK(r.code == 3);
  REQUIRE(fs::exists(s.dir / "diverged_snapshot.json"));
  const json snap = json::parse(slurp(s.dir / "diverged_snapshot.json"));
  CHECK(snap.contains("step"));
  CHECK(r.err.find("diverged_snapshot.json") != std::string::npos);
}
