#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccml/learners.hpp"

namespace ccml {

enum class DgpFamily { AlaaA, AlaaB, NieA, NieB, NieC, NieD, IhdpOverlay };

std::string dgp_family_name(DgpFamily family);
std::optional<DgpFamily> parse_dgp_family(const std::string& name);
bool is_nie(DgpFamily family);

struct DgpSpec {
  DgpFamily family = DgpFamily::NieB;
  Eigen::Index n = 5000;
  Eigen::Index d = 0;   // 0 = family default (Alaa 10, Nie 5)
  double sigma = 1.0;   // Nie noise scale
  double c = 0.0;       // Nie noise mixing coefficient in [-1, 1]
  std::uint64_t seed = 0;
};

// Generated sample with hidden ground truth. The consistency identity
// y = w*y1 + (1-w)*y0 holds exactly on every instance.
struct SyntheticDataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi w;
  Eigen::VectorXd y;
  Eigen::VectorXd y0, y1;
  Eigen::VectorXd pi_true;
  Eigen::VectorXd tau_true;
  Eigen::VectorXd ite_true;  // y1 - y0

  CausalDataset observed() const { return {X, w, y}; }
  bool has_truth() const { return ite_true.size() == X.rows(); }
};

// Deterministic per (spec, seed): variable streams (covariates, noise,
// treatment) are split from the seed, so e.g. the noise draws are identical
// across values of c.
SyntheticDataset gen_alaa(const DgpSpec& spec);
SyntheticDataset gen_nie(const DgpSpec& spec);
SyntheticDataset generate(const DgpSpec& spec);  // dispatch on family

// Response-surface overlay on external covariates: y0 ~ N(exp((X+0.5)b), 1),
// y1 ~ N(Xb - omega, 1), coefficients b drawn from {0,.1,.2,.3,.4} with
// probabilities (.6,.1,.1,.1,.1), omega solved so the model-mean ATT over the
// treated rows is 4. The file's treatment column is kept; pi_true is filled
// with the constant empirical treated fraction (the overlay defines none).
SyntheticDataset gen_ihdp_overlay(const Eigen::MatrixXd& covariates,
                                  const Eigen::VectorXi& treatment,
                                  std::uint64_t seed);

// Closed-form propensity of a synthetic family, for oracle-weighted fits.
// Throws for IhdpOverlay (no oracle exists there).
PropensityFn oracle_propensity(DgpFamily family);

// Beta(2, 4) CDF, used by the Alaa propensity.
double beta24_cdf(double x);

// Component formulas of the generators, exposed so values at pinned
// covariates can be checked against hand computations.
double alaa_tau(double x0, double x1);

struct NieComponents {
  double b;    // expected outcome baseline
  double pi;   // propensity
  double tau;  // treatment effect
};
NieComponents nie_components(DgpFamily family,
                             const Eigen::Ref<const Eigen::RowVectorXd>& x);

// The offset solving mean over treated rows of (E[Y1] - E[Y0]) = 4.
double ihdp_overlay_omega(const Eigen::MatrixXd& covariates,
                          const Eigen::VectorXi& treatment,
                          const Eigen::VectorXd& beta);

// Strict RFC-4180 numeric CSV: header row required, UTF-8, '.' decimal
// separator. Errors (missing cell, non-numeric cell, ragged row) carry the
// 1-based data row and the column name.
struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
};

CsvTable load_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

struct CovariateFile {
  Eigen::MatrixXd X;
  std::vector<std::string> columns;
  std::optional<Eigen::VectorXi> treatment;
};

// Loads covariates with stable column order; when treatment_column is given,
// that column is split out and must be binary.
CovariateFile load_covariates_csv(const std::string& path,
                                  const std::optional<std::string>& treatment_column);

void write_csv(const std::string& path, const CsvTable& table);

// Columns x0..x{d-1}, w, y, and (when ground truth exists) y0, y1, pi, tau, ite.
void write_dataset_csv(const std::string& path, const SyntheticDataset& data);

// Shortest round-trip decimal rendering; the fixed float format of every CSV
// this library writes.
std::string format_double(double v);

}  // namespace ccml
