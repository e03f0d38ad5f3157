#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "structvi/errors.hpp"
#include "structvi/io.hpp"
#include "structvi/kalman.hpp"
#include "structvi/trainer.hpp"

namespace structvi::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<long long> steps;
  std::optional<double> lr;
  std::optional<long long> samples;
  std::optional<std::string> posterior;
};

struct Loaded {
  json config = json::object();
  fs::path base_dir = ".";
};

Loaded load_config(const Options& opt) {
  Loaded loaded;
  if (opt.config.empty()) return loaded;
  std::ifstream in(opt.config);
  if (!in) throw ConfigError("cannot open config file " + opt.config);
  try {
    loaded.config = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + opt.config + " is not valid JSON: " + e.what());
  }
  if (!loaded.config.is_object()) throw ConfigError("config file " + opt.config + " must hold an object");
  loaded.base_dir = fs::path(opt.config).parent_path();
  if (loaded.base_dir.empty()) loaded.base_dir = ".";
  return loaded;
}

FitConfig resolve_fit_config(const Options& opt, const json& config) {
  FitConfig cfg = fit_config_from_json(config.contains("fit") ? config["fit"] : json());
  if (config.contains("seed")) {
    if (!config["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    cfg.seed = config["seed"].get<std::uint64_t>();
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.steps) cfg.max_steps = *opt.steps;
  if (opt.lr) cfg.learning_rate = *opt.lr;
  if (opt.samples) cfg.samples = *opt.samples;
  try {
    cfg.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

fs::path resolve_out_dir(const Options& opt, const Loaded& loaded) {
  fs::path out = ".";
  if (loaded.config.contains("out")) {
    if (!loaded.config["out"].is_string()) throw ConfigError("out must be a string");
    out = loaded.base_dir / loaded.config["out"].get<std::string>();
  }
  if (opt.out) out = *opt.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw ConfigError("output directory " + out.string() + " is not writable");
  }
  return out;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

Variant resolve_variant(const Options& opt, const json& config) {
  std::string name = "structured";
  if (config.contains("variant")) {
    if (!config["variant"].is_string()) throw ConfigError("variant must be a string");
    name = config["variant"].get<std::string>();
  }
  if (opt.variant) name = *opt.variant;
  try {
    return parse_variant(name);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

int run_fit(const Options& opt, std::ostream& out, std::ostream& err) {
  const Loaded loaded = load_config(opt);
  const ModelPtr model = model_from_json(loaded.config, loaded.base_dir);
  const FitConfig cfg = resolve_fit_config(opt, loaded.config);
  const Variant variant = resolve_variant(opt, loaded.config);
  const fs::path dir = resolve_out_dir(opt, loaded);

  std::optional<FitReport> fitted;
  try {
    fitted = fit(*model, cfg, variant);
  } catch (const DivergedError& e) {
    const fs::path snapshot = dir / "diverged_snapshot.json";
    json j{{"step", e.step()},
           {"mu", std::vector<double>(e.mu().data(), e.mu().data() + e.mu().size())},
           {"nu", std::vector<double>(e.nu().data(), e.nu().data() + e.nu().size())},
           {"omega", std::vector<double>(e.omega().data(), e.omega().data() + e.omega().size())}};
    open_output(snapshot) << j.dump(2) << '\n';
    err << "error: " << e.what() << "; parameter snapshot written to " << snapshot.string() << '\n';
    return kExitDiverged;
  }
  const FitReport& report = *fitted;

  open_output(dir / "fit_report.json") << to_json(report).dump(2) << '\n';
  {
    auto f = open_output(dir / "elbo_trace.csv");
    write_trace_csv(f, report);
  }
  {
    auto f = open_output(dir / "posterior.csv");
    write_posterior_csv(f, report.final_params);
  }
  out << "variant=" << to_string(variant) << " steps=" << report.steps_run
      << " converged=" << (report.converged ? "true" : "false")
      << " final_elbo=" << format_double(report.final_elbo) << " +- "
      << format_double(report.final_elbo_stderr) << '\n';
  return kExitOk;
}

int run_oracle_check(const Options& opt, std::ostream& out, std::ostream&) {
  const Loaded loaded = load_config(opt);
  const ModelPtr model = model_from_json(loaded.config, loaded.base_dir);
  const auto* wiener = dynamic_cast<const WienerGaussian*>(model.get());
  if (wiener == nullptr) throw ConfigError("oracle requires wiener_gaussian");
  const fs::path dir = resolve_out_dir(opt, loaded);

  const WienerPosterior posterior = exact_posterior(*wiener);
  {
    auto f = open_output(dir / "oracle.csv");
    write_oracle_csv(f, posterior);
  }
  out << "log_evidence=" << format_double(log_evidence(*wiener)) << '\n';

  std::optional<fs::path> fitted;
  if (loaded.config.contains("posterior") && loaded.config["posterior"].is_string()) {
    fitted = loaded.base_dir / loaded.config["posterior"].get<std::string>();
  }
  if (opt.posterior) fitted = *opt.posterior;
  if (!fitted) return kExitOk;

  const PosteriorSummary summary = read_posterior_csv(*fitted);
  if (summary.mean.size() != posterior.mean.size()) {
    throw ConfigError("posterior file " + fitted->string() + " has " +
                      std::to_string(summary.mean.size()) + " rows, model has T = " +
                      std::to_string(posterior.mean.size()));
  }
  const Eigen::VectorXd exact_std = posterior_marginal_variances(posterior).cwiseSqrt();
  const Eigen::VectorXd mean_gap = summary.mean - posterior.mean;
  const Eigen::VectorXd std_gap = summary.std - exact_std;
  const Eigen::VectorXd std_rel_gap = std_gap.cwiseQuotient(exact_std);
  {
    auto f = open_output(dir / "gap.csv");
    f << "t,mean_gap,std_gap,std_rel_gap\n";
    for (Eigen::Index t = 0; t < mean_gap.size(); ++t) {
      f << t + 1 << ',' << format_double(mean_gap[t]) << ',' << format_double(std_gap[t]) << ','
        << format_double(std_rel_gap[t]) << '\n';
    }
  }
  out << "linf_mean_gap=" << format_double(mean_gap.lpNorm<Eigen::Infinity>()) << '\n'
      << "linf_std_gap=" << format_double(std_gap.lpNorm<Eigen::Infinity>()) << '\n'
      << "linf_std_rel_gap=" << format_double(std_rel_gap.lpNorm<Eigen::Infinity>()) << '\n';
  return kExitOk;
}

int run_benchmark(const Options& opt, std::ostream& out, std::ostream&) {
  const Loaded loaded = load_config(opt);
  const ModelFamily family = model_family_from_json(loaded.config);
  const FitConfig cfg = resolve_fit_config(opt, loaded.config);
  const fs::path dir = resolve_out_dir(opt, loaded);

  std::vector<Eigen::Index> Ts{1000, 10000, 100000, 1000000};
  BenchmarkOptions options;
  if (loaded.config.contains("benchmark")) {
    const json& b = loaded.config["benchmark"];
    try {
      if (b.contains("Ts")) Ts = b["Ts"].get<std::vector<Eigen::Index>>();
      options.repetitions = b.value("repetitions", options.repetitions);
      options.include_dense = b.value("include_dense", options.include_dense);
      options.dense_max_T = b.value("dense_max_T", options.dense_max_T);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("benchmark: ") + e.what());
    }
  }
  if (Ts.empty()) throw ConfigError("benchmark: Ts must not be empty");
  for (auto T : Ts) {
    if (T < 1) throw ConfigError("benchmark: every T must be positive");
  }

  std::vector<BenchmarkRow> rows;
  try {
    rows = benchmark_scaling(family, Ts, cfg, options);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  {
    auto f = open_output(dir / "scaling.csv");
    write_scaling_csv(f, rows);
  }
  for (const char* variant : {"linear", "dense"}) {
    const auto n = std::count_if(rows.begin(), rows.end(),
                                 [&](const BenchmarkRow& r) { return r.variant == variant; });
    if (n >= 2) out << "slope_" << variant << '=' << format_double(loglog_slope(rows, variant)) << '\n';
  }
  return kExitOk;
}

int run_sample(const Options& opt, std::ostream& out, std::ostream&) {
  const Loaded loaded = load_config(opt);
  if (!loaded.config.contains("variational")) {
    throw ConfigError("sample: config needs a \"variational\" parameter record");
  }
  const StructuredGaussiand q = gaussian_from_json(loaded.config["variational"]);
  std::uint64_t seed = loaded.config.value("seed", std::uint64_t{0});
  if (opt.seed) seed = *opt.seed;
  long long count = 1;
  if (loaded.config.contains("sample")) count = loaded.config["sample"].value("count", count);
  if (opt.samples) count = *opt.samples;
  if (count < 1) throw ConfigError("sample: count must be at least 1");
  const fs::path dir = resolve_out_dir(opt, loaded);

  const SampleBatch<double> batch = sample_batch(q, seed, count);
  auto f = open_output(dir / "samples.csv");
  f << "sample,t,z\n";
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (Eigen::Index t = 0; t < q.size(); ++t) {
      f << s + 1 << ',' << t + 1 << ',' << format_double(batch[s].z[t]) << '\n';
    }
  }
  out << "wrote " << batch.size() << " samples to " << (dir / "samples.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structured black-box variational inference for latent time series"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file");
    sub->add_option("--seed", opt.seed, "RNG seed");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--variant", opt.variant, "structured | mean_field");
    sub->add_option("--steps", opt.steps, "Maximum optimizer steps");
    sub->add_option("--lr", opt.lr, "Learning rate");
    sub->add_option("--samples", opt.samples, "Samples per step (fit) or number of draws (sample)");
  };
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a variational posterior");
  CLI::App* oracle_cmd = app.add_subcommand("oracle-check", "Exact posterior of wiener_gaussian");
  CLI::App* bench_cmd = app.add_subcommand("benchmark", "Gradient-step scaling in T");
  CLI::App* sample_cmd = app.add_subcommand("sample", "Draw from a variational posterior");
  for (CLI::App* sub : {fit_cmd, oracle_cmd, bench_cmd, sample_cmd}) add_common(sub);
  oracle_cmd->add_option("--posterior", opt.posterior, "Fitted posterior.csv to compare against");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(opt, out, err);
    if (oracle_cmd->parsed()) return run_oracle_check(opt, out, err);
    if (bench_cmd->parsed()) return run_benchmark(opt, out, err);
    return run_sample(opt, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace structvi::cli
