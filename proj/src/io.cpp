#include "structvi/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "structvi/errors.hpp"

namespace structvi {

using nlohmann::json;

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

double required_number(const json& obj, const char* key, const std::string& context) {
  if (!obj.contains(key) || !obj[key].is_number()) {
    throw ConfigError(context + ": missing numeric hyperparameter '" + key + "'");
  }
  return obj[key].get<double>();
}

bool parse_double(const std::string& text, double& value) {
  std::size_t begin = text.find_first_not_of(" \t\r");
  std::size_t end = text.find_last_not_of(" \t\r");
  if (begin == std::string::npos) return false;
  const std::string trimmed = text.substr(begin, end - begin + 1);
  char* stop = nullptr;
  value = std::strtod(trimmed.c_str(), &stop);
  return stop == trimmed.c_str() + trimmed.size();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

ObservationMask mask_from_json(const json& config) {
  ObservationMask mask;
  if (!config.contains("mask")) return mask;
  const json& m = config["mask"];
  if (!m.is_array()) throw ConfigError("mask must be an array of booleans or 0/1");
  for (const auto& v : m) {
    if (v.is_boolean()) {
      mask.push_back(v.get<bool>());
    } else if (v.is_number() && (v.get<double>() == 0.0 || v.get<double>() == 1.0)) {
      mask.push_back(v.get<double>() == 1.0);
    } else {
      throw ConfigError("mask must be an array of booleans or 0/1");
    }
  }
  return mask;
}

const json& hyperparameters(const json& config) {
  static const json empty = json::object();
  if (!config.contains("hyperparameters")) return empty;
  if (!config["hyperparameters"].is_object()) throw ConfigError("hyperparameters must be an object");
  return config["hyperparameters"];
}

std::string model_name(const json& config) {
  if (!config.contains("model") || !config["model"].is_string()) {
    throw ConfigError("config: missing \"model\" (wiener_gaussian, ou_poisson or ou_bernoulli)");
  }
  return config["model"].get<std::string>();
}

SimulatedSeries simulate(const std::string& name, const json& hp, Eigen::Index T,
                         std::uint64_t seed) {
  if (name == "wiener_gaussian") {
    return simulate_wiener_gaussian(T, required_number(hp, "sigma0", name),
                                    required_number(hp, "sigma", name),
                                    required_number(hp, "tau", name), seed);
  }
  if (name == "ou_poisson") {
    return simulate_ou_poisson(T, required_number(hp, "c", name), required_number(hp, "sigma", name),
                               seed);
  }
  if (name == "ou_bernoulli") {
    return simulate_ou_bernoulli(T, required_number(hp, "c", name),
                                 required_number(hp, "sigma", name), seed);
  }
  throw ConfigError("unknown model '" + name + "'");
}

ModelPtr build_model(const std::string& name, const json& hp, Eigen::VectorXd x,
                     ObservationMask mask) {
  try {
    if (name == "wiener_gaussian") {
      return wiener_gaussian(std::move(x), required_number(hp, "sigma0", name),
                             required_number(hp, "sigma", name), required_number(hp, "tau", name),
                             std::move(mask));
    }
    if (name == "ou_poisson") {
      return ou_poisson(std::move(x), required_number(hp, "c", name),
                        required_number(hp, "sigma", name), std::move(mask));
    }
    if (name == "ou_bernoulli") {
      return ou_bernoulli(std::move(x), required_number(hp, "c", name),
                          required_number(hp, "sigma", name), std::move(mask));
    }
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown model '" + name + "'");
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

json to_json(const StructuredGaussiand& q) {
  return json{{"T", q.size()},
              {"mu", to_std(q.mu())},
              {"nu", to_std(q.nu())},
              {"omega", to_std(q.omega())}};
}

StructuredGaussiand gaussian_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("variational parameters must be an object");
  for (const char* key : {"mu", "nu", "omega"}) {
    if (!j.contains(key)) throw ConfigError(std::string("variational parameters: missing '") + key + "'");
  }
  Eigen::VectorXd mu = to_eigen(j["mu"], "mu");
  if (j.contains("T") && (!j["T"].is_number_integer() || j["T"].get<long long>() != mu.size())) {
    throw ConfigError("variational parameters: T does not match the length of mu");
  }
  try {
    return StructuredGaussiand(std::move(mu), to_eigen(j["nu"], "nu"), to_eigen(j["omega"], "omega"));
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("variational parameters: ") + e.what());
  }
}

json to_json(const FitReport& report, bool include_wall_clock) {
  std::vector<long long> steps;
  std::vector<double> smoothed, raw;
  steps.reserve(report.elbo_trace.size());
  smoothed.reserve(report.elbo_trace.size());
  raw.reserve(report.elbo_trace.size());
  for (const auto& p : report.elbo_trace) {
    steps.push_back(p.step);
    smoothed.push_back(p.elbo_smoothed);
    raw.push_back(p.elbo_raw);
  }
  json j{{"variant", to_string(report.variant)},
         {"seed", report.seed},
         {"steps_run", report.steps_run},
         {"converged", report.converged},
         {"final_elbo", report.final_elbo},
         {"final_elbo_stderr", report.final_elbo_stderr},
         {"final_params", to_json(report.final_params)},
         {"elbo_trace", {{"step", steps}, {"elbo_smoothed", smoothed}, {"elbo_raw", raw}}}};
  if (include_wall_clock) j["wall_clock_per_step"] = report.wall_clock_per_step;
  return j;
}

void write_trace_csv(std::ostream& out, const FitReport& report) {
  out << "step,elbo_smoothed,elbo_raw,seconds\n";
  for (const auto& p : report.elbo_trace) {
    out << p.step << ',' << format_double(p.elbo_smoothed) << ',' << format_double(p.elbo_raw)
        << ',' << format_double(p.seconds) << '\n';
  }
}

void write_posterior_csv(std::ostream& out, const StructuredGaussiand& q) {
  const Eigen::VectorXd var = marginal_variances(q);
  out << "t,mu,marginal_std\n";
  for (Eigen::Index t = 0; t < q.size(); ++t) {
    out << t + 1 << ',' << format_double(q.mu()[t]) << ',' << format_double(std::sqrt(var[t]))
        << '\n';
  }
}

void write_oracle_csv(std::ostream& out, const WienerPosterior& posterior) {
  const Eigen::VectorXd var = posterior_marginal_variances(posterior);
  out << "t,exact_mean,exact_std\n";
  for (Eigen::Index t = 0; t < posterior.mean.size(); ++t) {
    out << t + 1 << ',' << format_double(posterior.mean[t]) << ','
        << format_double(std::sqrt(var[t])) << '\n';
  }
}

void write_scaling_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "T,variant,median_seconds_per_step\n";
  for (const auto& row : rows) {
    out << row.T << ',' << row.variant << ',' << format_double(row.median_seconds_per_step) << '\n';
  }
}

PosteriorSummary read_posterior_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open posterior file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("posterior file " + path.string() + " is empty");
  const auto header = split(line, ',');
  if (header.size() != 3 || header[1] != "mu" || header[2].rfind("marginal_std", 0) != 0) {
    throw ConfigError("posterior file " + path.string() + ": expected header t,mu,marginal_std");
  }
  std::vector<double> mean, stdev;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    double m = 0, s = 0;
    if (cells.size() != 3 || !parse_double(cells[1], m) || !parse_double(cells[2], s)) {
      throw ConfigError("posterior file " + path.string() + ": malformed row '" + line + "'");
    }
    mean.push_back(m);
    stdev.push_back(s);
  }
  PosteriorSummary out;
  out.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  out.std = Eigen::Map<Eigen::VectorXd>(stdev.data(), static_cast<Eigen::Index>(stdev.size()));
  return out;
}

Eigen::VectorXd read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open observations file " + path.string());
  std::vector<double> values;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const auto cells = split(line, ',');
    if (cells.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double v = 0;
    if (!parse_double(cells.back(), v)) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ConfigError("observations file " + path.string() + ": malformed line '" + line + "'");
    }
    first = false;
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("observations file " + path.string() + " has no values");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

ModelPtr model_from_json(const json& config, const std::filesystem::path& base_dir) {
  const std::string name = model_name(config);
  const json& hp = hyperparameters(config);
  if (!config.contains("observations")) throw ConfigError("config: missing \"observations\"");
  const json& obs = config["observations"];

  Eigen::VectorXd x;
  if (obs.is_array()) {
    x = to_eigen(obs, "observations");
  } else if (obs.is_string()) {
    x = read_series_csv(base_dir / obs.get<std::string>());
  } else if (obs.is_object() && obs.contains("csv") && obs["csv"].is_string()) {
    x = read_series_csv(base_dir / obs["csv"].get<std::string>());
  } else if (obs.is_object() && obs.contains("simulate")) {
    const json& sim = obs["simulate"];
    if (!sim.contains("T") || !sim["T"].is_number_integer() || sim["T"].get<long long>() < 1) {
      throw ConfigError("observations.simulate: positive integer T required");
    }
    const std::uint64_t seed = sim.value("seed", std::uint64_t{0});
    try {
      x = simulate(name, hp, sim["T"].get<Eigen::Index>(), seed).x;
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  } else {
    throw ConfigError("observations must be an array, a CSV path, or {\"simulate\": {...}}");
  }
  if (x.size() < 1) throw ConfigError("observations: at least one value required");
  if (config.contains("T") && config["T"].is_number_integer() &&
      config["T"].get<long long>() != x.size()) {
    throw ConfigError("config: declared T = " + std::to_string(config["T"].get<long long>()) +
                      " but " + std::to_string(x.size()) + " observations were given");
  }
  return build_model(name, hp, std::move(x), mask_from_json(config));
}

ModelFamily model_family_from_json(const json& config) {
  const std::string name = model_name(config);
  const json hp = hyperparameters(config);
  std::uint64_t seed = 0;
  if (config.contains("observations") && config["observations"].is_object() &&
      config["observations"].contains("simulate")) {
    seed = config["observations"]["simulate"].value("seed", std::uint64_t{0});
  }
  // Fail early on bad hyperparameters.
  (void)build_model(name, hp, simulate(name, hp, 1, seed).x, {});
  return [name, hp, seed](Eigen::Index T) {
    return build_model(name, hp, simulate(name, hp, T, seed).x, {});
  };
}

FitConfig fit_config_from_json(const json& fit) {
  FitConfig cfg;
  if (fit.is_null()) return cfg;
  if (!fit.is_object()) throw ConfigError("\"fit\" must be an object");
  try {
    cfg.max_steps = fit.value("max_steps", cfg.max_steps);
    cfg.samples = fit.value("samples", cfg.samples);
    cfg.learning_rate = fit.value("learning_rate", cfg.learning_rate);
    cfg.optimizer = parse_optimizer(fit.value("optimizer", to_string(cfg.optimizer)));
    cfg.beta1 = fit.value("beta1", cfg.beta1);
    cfg.beta2 = fit.value("beta2", cfg.beta2);
    cfg.delta = fit.value("delta", cfg.delta);
    cfg.decay_steps = fit.value("decay_steps", cfg.decay_steps);
    cfg.seed = fit.value("seed", cfg.seed);
    cfg.convergence_window = fit.value("convergence_window", cfg.convergence_window);
    cfg.convergence_tol = fit.value("convergence_tol", cfg.convergence_tol);
    cfg.eval_samples = fit.value("eval_samples", cfg.eval_samples);
    if (fit.contains("init") && !fit["init"].is_string()) {
      cfg.init = gaussian_from_json(fit["init"]);
    } else if (fit.contains("init") && fit["init"].get<std::string>() != "mean_field_prior") {
      throw ConfigError("fit.init must be \"mean_field_prior\" or a parameter record");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fit: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("fit: ") + e.what());
  }
  return cfg;
}

}  // namespace structvi
