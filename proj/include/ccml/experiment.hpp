#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccml/conformal.hpp"
#include "ccml/datagen.hpp"
#include "ccml/eval.hpp"
#include "ccml/models.hpp"

namespace ccml {

enum class LearnerKind { Cct, CmcTMc, CmcTPmc, CmcS, CmcX, NaiveWcp, CpsOracle };

std::string learner_name(LearnerKind kind);
std::optional<LearnerKind> parse_learner(const std::string& name);

enum class PropensityMode { Oracle, Logistic };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-learner overrides from the config file's learner tables.
struct LearnerSettings {
  std::optional<int> n_mc;
  std::optional<ConformityMeasure> measure;
};

// Declarative description of one experiment: a data source, a set of
// learners, alphas, and the simulation protocol. One RunResult row is
// produced per (learner, alpha, seed).
struct ExperimentConfig {
  DgpSpec dgp;
  std::optional<std::string> csv_path;  // ihdp_overlay covariate source
  std::optional<std::string> csv_treatment_column;

  std::vector<LearnerKind> learners{LearnerKind::Cct};
  std::map<LearnerKind, LearnerSettings> learner_settings;
  std::vector<double> alphas{0.1};
  int n_sims = 100;
  int n_mc = 100;
  std::optional<ConformityMeasure> measure;  // default: normalized for synthetic, residual for csv
  RegressorSpec regressor = RegressorSpec::random_forest();
  PropensityMode propensity = PropensityMode::Oracle;
  std::uint64_t base_seed = 0;
  int jobs = 1;
  std::string out_path;                 // empty: results are only returned
  std::optional<double> test_fraction;  // default 0.5 for Nie, 0.2 otherwise
  bool timing = false;                  // wall_time written as 0 unless enabled
  std::optional<Eigen::Index> convolve_budget;

  ConformityMeasure resolved_measure() const;
  double resolved_test_fraction() const;
};

void validate_config(const ExperimentConfig& config);  // throws ConfigError

struct PitRow {
  std::string setup;
  std::string learner;
  std::uint64_t seed = 0;
  double pit = 0.0;
};

struct ExperimentOutput {
  std::vector<RunResult> rows;
  std::vector<PitRow> pits;
};

// Runs n_sims cells (seed_i = base_seed + i), each cell fitting every learner
// on a fresh dataset and evaluating on the held-out split. Cells run on a
// worker pool of `jobs` threads; results are identical to a serial run. A
// cell failure marks its rows failed (NaN metrics) instead of aborting the
// sweep. Writes out_path when set.
std::vector<RunResult> run_experiment(const ExperimentConfig& config);

// As run_experiment, additionally returning every raw PIT value.
ExperimentOutput run_experiment_collecting(const ExperimentConfig& config);

// run_experiment per c in the grid (Nie families only); each row carries its
// c and the output gains a c column.
std::vector<RunResult> sweep_correlation(ExperimentConfig config,
                                         const std::vector<double>& c_grid);

// Raw PIT values per (learner, seed, test point), for histogramming.
std::vector<PitRow> collect_pit(const ExperimentConfig& config);

void write_results_csv(const std::string& path, const std::vector<RunResult>& rows,
                       bool with_c_column);
void write_pit_csv(const std::string& path, const std::vector<PitRow>& rows);

// key = value file with [section] tables; see README for the schema.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace ccml
