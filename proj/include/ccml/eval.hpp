#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ccml/discrete_cpd.hpp"
#include "ccml/learners.hpp"
#include "ccml/rng.hpp"

namespace ccml {

// One row of experiment output; serializes to CSV in exactly this column
// order.
struct RunResult {
  std::string setup;
  std::string learner;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  std::optional<double> mean_finite_width;  // missing when every interval is unbounded
  double frac_unbounded = 0.0;
  double ks_pit = 0.0;
  double rmse_cate = 0.0;
  double wall_time = 0.0;
  std::optional<double> c;  // set by correlation sweeps
  bool failed = false;
};

// Fraction of intervals containing the realized ITE; an unbounded side
// counts as covering on that side. Intervals are closed.
double coverage(const std::vector<ItePredictionInterval>& intervals,
                const Eigen::VectorXd& ite_true);

struct Efficiency {
  std::optional<double> mean_finite_width;
  double frac_unbounded = 0.0;
};

// Mean width over fully finite intervals; intervals with any unbounded side
// are excluded from the mean and reported via frac_unbounded.
Efficiency efficiency(const std::vector<ItePredictionInterval>& intervals);

// PIT_i = cdf(cpd_i, ite_i, phi_i) with independent phi_i ~ Uniform(0,1).
std::vector<double> pit_values(const std::vector<DiscreteCpd>& cpds,
                               const Eigen::VectorXd& ite_true, SplitRng rng);

// Kolmogorov-Smirnov sup-distance between the empirical CDF of values in
// [0,1] and the Uniform(0,1) CDF.
double ks_uniform(std::vector<double> values);

// Point prediction of a CPD: the 0.5 quantile with deferred mass high. If
// more than half the mass is deferred (never the case for a fitted CPS) the
// top of the finite support is used.
double cpd_median(const DiscreteCpd& cpd);

// Root-mean-square of (median(cpd_i) - tau_i).
double rmse_cate(const std::vector<DiscreteCpd>& cpds, const Eigen::VectorXd& tau_true);

// Continuous ranked probability score of the finite support renormalized to
// total mass 1. Internal consistency diagnostic only (the deferred mass makes
// the raw integral divergent).
double crps(const DiscreteCpd& cpd, double y);

}  // namespace ccml
