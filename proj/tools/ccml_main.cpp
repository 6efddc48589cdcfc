#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ccml/datagen.hpp"
#include "ccml/experiment.hpp"

namespace {

int default_jobs() {
  if (const char* env = std::getenv("CCML_JOBS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

struct RunFlags {
  std::string config_path;
  std::string dgp;
  std::string alphas;
  std::string learners;
  std::string propensity;
  std::string measure;
  std::string csv;
  std::string treatment_col;
  std::string out;
  long n = -1;
  long d = -1;
  long seeds = -1;
  long n_mc = -1;
  long base_seed = -1;
  long jobs = -1;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  double c = std::numeric_limits<double>::quiet_NaN();
  double test_fraction = std::numeric_limits<double>::quiet_NaN();
  bool timing = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config_path, "declarative config file");
  cmd->add_option("--dgp", flags.dgp, "dgp family (nie_a..nie_d, alaa_a, alaa_b, ihdp_overlay)");
  cmd->add_option("--n", flags.n, "sample size");
  cmd->add_option("--d", flags.d, "covariate count (0 = family default)");
  cmd->add_option("--sigma", flags.sigma, "noise scale (Nie)");
  cmd->add_option("--c", flags.c, "noise mixing coefficient (Nie)");
  cmd->add_option("--alpha,--alphas", flags.alphas, "comma list of alphas");
  cmd->add_option("--learners", flags.learners, "comma list of learners");
  cmd->add_option("--seeds", flags.seeds, "number of simulations");
  cmd->add_option("--n-mc", flags.n_mc, "MC samples per calibration row");
  cmd->add_option("--base-seed", flags.base_seed, "first seed");
  cmd->add_option("--jobs", flags.jobs, "worker threads over simulation cells");
  cmd->add_option("--propensity", flags.propensity, "oracle|logistic");
  cmd->add_option("--measure", flags.measure, "residual|normalized");
  cmd->add_option("--csv", flags.csv, "covariate csv (ihdp_overlay)");
  cmd->add_option("--treatment-col", flags.treatment_col, "treatment column name");
  cmd->add_option("--test-fraction", flags.test_fraction, "held-out test fraction");
  cmd->add_option("--out", flags.out, "output csv path");
  cmd->add_flag("--timing", flags.timing, "record wall times (breaks byte-identical reruns)");
}

ccml::ExperimentConfig build_config(const RunFlags& flags) {
  ccml::ExperimentConfig config;
  if (!flags.config_path.empty()) {
    config = ccml::parse_config_file(flags.config_path);
  }
  if (!flags.dgp.empty()) {
    const auto family = ccml::parse_dgp_family(flags.dgp);
    if (!family) throw ccml::ConfigError("unknown dgp family '" + flags.dgp + "'");
    config.dgp.family = *family;
  }
  if (flags.n >= 0) config.dgp.n = flags.n;
  if (flags.d >= 0) config.dgp.d = flags.d;
  if (!std::isnan(flags.sigma)) config.dgp.sigma = flags.sigma;
  if (!std::isnan(flags.c)) config.dgp.c = flags.c;
  if (!flags.alphas.empty()) {
    config.alphas.clear();
    std::istringstream in(flags.alphas);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (item.empty()) continue;
      try {
        config.alphas.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ccml::ConfigError("--alpha: expected a number, got '" + item + "'");
      }
    }
  }
  if (!flags.learners.empty()) {
    config.learners.clear();
    std::istringstream in(flags.learners);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (item.empty()) continue;
      const auto kind = ccml::parse_learner(item);
      if (!kind) throw ccml::ConfigError("unknown learner '" + item + "'");
      config.learners.push_back(*kind);
    }
  }
  if (flags.seeds >= 0) config.n_sims = static_cast<int>(flags.seeds);
  if (flags.n_mc >= 0) config.n_mc = static_cast<int>(flags.n_mc);
  if (flags.base_seed >= 0) config.base_seed = static_cast<std::uint64_t>(flags.base_seed);
  if (flags.jobs >= 1) {
    config.jobs = static_cast<int>(flags.jobs);
  } else if (config.jobs == 1) {
    config.jobs = default_jobs();
  }
  if (!flags.propensity.empty()) {
    if (flags.propensity == "oracle") {
      config.propensity = ccml::PropensityMode::Oracle;
    } else if (flags.propensity == "logistic") {
      config.propensity = ccml::PropensityMode::Logistic;
    } else {
      throw ccml::ConfigError("--propensity: expected oracle|logistic");
    }
  }
  if (!flags.measure.empty()) {
    if (flags.measure == "residual") {
      config.measure = ccml::ConformityMeasure::residual();
    } else if (flags.measure == "normalized") {
      config.measure = ccml::ConformityMeasure::normalized();
    } else {
      throw ccml::ConfigError("--measure: expected residual|normalized");
    }
  }
  if (!flags.csv.empty()) config.csv_path = flags.csv;
  if (!flags.treatment_col.empty()) config.csv_treatment_column = flags.treatment_col;
  if (!std::isnan(flags.test_fraction)) config.test_fraction = flags.test_fraction;
  if (!flags.out.empty()) config.out_path = flags.out;
  if (flags.timing) config.timing = true;
  return config;
}

int report_failures(const std::vector<ccml::RunResult>& rows) {
  int failed = 0;
  for (const auto& row : rows) failed += row.failed ? 1 : 0;
  if (failed > 0) {
    std::cerr << failed << " cell(s) failed; marked with nan metrics in the output\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal predictive distributions of individual treatment effects"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "dump a synthetic dataset csv");
  std::string gen_dgp = "nie_b", gen_out = "dataset.csv", gen_csv, gen_tcol;
  long gen_n = 5000, gen_d = 0, gen_seed = 0;
  double gen_sigma = 1.0, gen_c = 0.0;
  generate->add_option("--dgp", gen_dgp, "dgp family");
  generate->add_option("--n", gen_n, "sample size");
  generate->add_option("--d", gen_d, "covariate count (0 = family default)");
  generate->add_option("--sigma", gen_sigma, "noise scale (Nie)");
  generate->add_option("--c", gen_c, "noise mixing coefficient (Nie)");
  generate->add_option("--seed", gen_seed, "seed");
  generate->add_option("--csv", gen_csv, "covariate csv (ihdp_overlay)");
  generate->add_option("--treatment-col", gen_tcol, "treatment column name");
  generate->add_option("--out", gen_out, "output path")->required();

  // run / sweep-c / pit share the experiment flags
  RunFlags run_flags, sweep_flags, pit_flags;
  auto* run = app.add_subcommand("run", "run an experiment config");
  add_run_flags(run, run_flags);
  auto* sweep = app.add_subcommand("sweep-c", "run per noise-correlation coefficient");
  add_run_flags(sweep, sweep_flags);
  double sweep_from = -1.0, sweep_to = 1.0, sweep_step = 0.1;
  std::string sweep_grid;
  sweep->add_option("--from", sweep_from, "first c");
  sweep->add_option("--to", sweep_to, "last c");
  sweep->add_option("--step", sweep_step, "c increment");
  sweep->add_option("--grid", sweep_grid, "explicit comma list of c values");
  auto* pit = app.add_subcommand("pit", "dump raw PIT values per cell");
  add_run_flags(pit, pit_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      const auto family = ccml::parse_dgp_family(gen_dgp);
      if (!family) throw ccml::ConfigError("unknown dgp family '" + gen_dgp + "'");
      ccml::SyntheticDataset data;
      if (*family == ccml::DgpFamily::IhdpOverlay) {
        if (gen_csv.empty() || gen_tcol.empty()) {
          throw ccml::ConfigError("ihdp_overlay needs --csv and --treatment-col");
        }
        const auto file = ccml::load_covariates_csv(gen_csv, gen_tcol);
        data = ccml::gen_ihdp_overlay(file.X, *file.treatment,
                                      static_cast<std::uint64_t>(gen_seed));
      } else {
        ccml::DgpSpec spec;
        spec.family = *family;
        spec.n = gen_n;
        spec.d = gen_d;
        spec.sigma = gen_sigma;
        spec.c = gen_c;
        spec.seed = static_cast<std::uint64_t>(gen_seed);
        data = ccml::generate(spec);
      }
      ccml::write_dataset_csv(gen_out, data);
      return 0;
    }
    if (run->parsed()) {
      const ccml::ExperimentConfig config = build_config(run_flags);
      ccml::validate_config(config);
      return report_failures(ccml::run_experiment(config));
    }
    if (sweep->parsed()) {
      const ccml::ExperimentConfig config = build_config(sweep_flags);
      ccml::validate_config(config);
      std::vector<double> grid;
      if (!sweep_grid.empty()) {
        std::istringstream in(sweep_grid);
        std::string item;
        while (std::getline(in, item, ',')) {
          if (!item.empty()) grid.push_back(std::stod(item));
        }
      } else {
        if (!(sweep_step > 0.0)) throw ccml::ConfigError("--step must be > 0");
        for (double c = sweep_from; c <= sweep_to + 1e-9; c += sweep_step) {
          grid.push_back(std::abs(c) < 1e-12 ? 0.0 : c);
        }
      }
      return report_failures(ccml::sweep_correlation(config, grid));
    }
    if (pit->parsed()) {
      ccml::ExperimentConfig config = build_config(pit_flags);
      ccml::validate_config(config);
      if (config.out_path.empty()) throw ccml::ConfigError("pit: --out is required");
      const auto rows = ccml::collect_pit(config);
      ccml::write_pit_csv(config.out_path, rows);
      return 0;
    }
  } catch (const ccml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
