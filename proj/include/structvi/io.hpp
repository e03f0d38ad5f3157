#pragma once

// JSON and CSV surfaces shared by the CLI and tests.
//
// Variational parameters are a flat record {"T", "mu", "nu", "omega"}.
// CSV files always carry a header row; time steps are numbered from 1 and
// reals are written with 17 significant digits.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "structvi/kalman.hpp"
#include "structvi/models.hpp"
#include "structvi/trainer.hpp"
#include "structvi/variational.hpp"

namespace structvi {

/// Malformed configuration or input file. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double value);

nlohmann::json to_json(const StructuredGaussiand& q);
StructuredGaussiand gaussian_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitReport& report, bool include_wall_clock = true);

void write_trace_csv(std::ostream& out, const FitReport& report);
void write_posterior_csv(std::ostream& out, const StructuredGaussiand& q);
void write_oracle_csv(std::ostream& out, const WienerPosterior& posterior);
void write_scaling_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

/// Fitted posterior summary as read back from a posterior CSV.
struct PosteriorSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};
PosteriorSummary read_posterior_csv(const std::filesystem::path& path);

/// One value per line; a non-numeric first line is treated as a header.
Eigen::VectorXd read_series_csv(const std::filesystem::path& path);

/// Builds a model from {"model", "hyperparameters", "observations", "mask"}.
/// "observations" is an inline array, a CSV path (relative to base_dir), or
/// {"simulate": {"T": n, "seed": s}}.
ModelPtr model_from_json(const nlohmann::json& config, const std::filesystem::path& base_dir);

/// Family of models of the configured kind and hyperparameters, observations
/// simulated per T. Used for scaling benchmarks.
ModelFamily model_family_from_json(const nlohmann::json& config);

/// Reads FitConfig fields from the "fit" object (all optional).
FitConfig fit_config_from_json(const nlohmann::json& fit);

}  // namespace structvi
