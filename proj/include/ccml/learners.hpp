#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ccml/conformal.hpp"
#include "ccml/discrete_cpd.hpp"
#include "ccml/rng.hpp"

namespace ccml {

// Observational sample: covariates, binary treatment, observed outcome.
struct CausalDataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi w;  // 0/1
  Eigen::VectorXd y;

  Eigen::Index rows() const { return X.rows(); }
  std::vector<int> arm_rows(int arm) const;
  CausalDataset subset(const std::vector<int>& rows) const;
  void validate() const;  // throws on inconsistent lengths or non-binary w
};

// Propensity score pi(x) in (0, 1); either an oracle closed form or a fitted
// logistic model wrapped in a function.
using PropensityFn = std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>;

// Per-arm weighted CPS pair of the convolution learner. The control system is
// weighted by 1/(1 - pi(x)), the treated one by 1/pi(x).
struct CctLearner {
  SplitCps cps_control;
  SplitCps cps_treated;
  PropensityFn propensity;
  // Recorded split indices (into the fit dataset) for audit.
  std::vector<int> control_train_rows, control_cal_rows;
  std::vector<int> treated_train_rows, treated_cal_rows;
};

// Fits one weighted SplitCps per arm, each arm split proper-train/calibration
// by split_fraction (default 0.5). Throws std::invalid_argument when an arm
// has fewer than 4 rows.
CctLearner fit_cct(const CausalDataset& data, PropensityFn propensity,
                   const ConformityMeasure& measure, const RegressorSpec& spec,
                   double split_fraction, SplitRng rng);

// Covariate-shift weight functions used throughout: control arm 1/(1-pi),
// treated arm 1/pi.
WeightFn control_weight(const PropensityFn& propensity);
WeightFn treated_weight(const PropensityFn& propensity);

DiscreteCpd cct_control_cpd(const CctLearner& learner,
                            const Eigen::Ref<const Eigen::RowVectorXd>& x);
DiscreteCpd cct_treated_cpd(const CctLearner& learner,
                            const Eigen::Ref<const Eigen::RowVectorXd>& x);

// ITE predictive distribution: difference convolution of the treated CPD and
// the control CPD at x.
DiscreteCpd cct_predict(const CctLearner& learner,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        std::optional<Eigen::Index> max_pairs = std::nullopt);

enum class McMode { Mc, PseudoMc };

// Monte Carlo ITE pseudo-samples: for every source row, n_mc draws. Mc mode
// samples both potential-outcome CPDs (nuisance weights 1/pi and 1/(1-pi))
// and differences them; PseudoMc anchors the observed outcome and samples
// only the counterfactual CPD, with weights pi/(1-pi) for treated rows and
// (1-pi)/pi for untreated rows. Draws falling into deferred mass are resolved
// by sampling the finite support renormalized.
struct McSamples {
  Eigen::MatrixXd covariates;  // source rows, each repeated n_mc times
  Eigen::VectorXd ite;
};

McSamples monte_carlo_ite(const CausalDataset& source, const SplitCps& cps_control,
                          const SplitCps& cps_treated, const PropensityFn& propensity,
                          int n_mc, McMode mode, SplitRng rng);

// Conformal Monte Carlo meta-learner: nuisance CPS pair plus a final
// unweighted SplitCps over MC ITE pseudo-targets whose point model is the
// CATE estimate. The nuisance systems live entirely inside the first half of
// the training data (with their own internal proper-train/calibration
// split); the second half is the MC source only, so the nuisance models see
// half as much data as a CCT fit would give them.
struct CmcLearner {
  SplitCps cps_control;
  SplitCps cps_treated;
  SplitCps final_cps;
  std::shared_ptr<const RegressionModel> cate_model;
  McMode mode = McMode::Mc;
  int n_mc = 100;
  // Recorded split indices for audit; the x_* sets are empty except for the
  // X-learner, whose MC source is split into a regressor half and a final
  // conformal half.
  std::vector<int> nuisance_train_rows, nuisance_cal_rows, mc_source_rows;
  std::vector<int> x_regressor_rows, x_conformal_rows;
};

CmcLearner fit_cmc_t(const CausalDataset& data, PropensityFn propensity,
                     const ConformityMeasure& measure, const RegressorSpec& spec,
                     int n_mc, McMode mode, SplitRng rng);

// S-learner variant: a single regressor on [X, w] models both arms; per-arm
// calibration keeps same-arm rows with the T-learner weight for that arm.
CmcLearner fit_cmc_s(const CausalDataset& data, PropensityFn propensity,
                     const ConformityMeasure& measure, const RegressorSpec& spec,
                     int n_mc, McMode mode, SplitRng rng);

// X-learner variant: an explicit ITE regressor (optionally on a covariate
// subset) is fitted on MC samples from one calibration half, and the final
// CPS is calibrated on MC samples from the other half.
CmcLearner fit_cmc_x(const CausalDataset& data, PropensityFn propensity,
                     const ConformityMeasure& measure, const RegressorSpec& spec,
                     int n_mc, McMode mode, SplitRng rng,
                     const std::vector<int>* cate_features = nullptr);

DiscreteCpd cmc_predict(const CmcLearner& learner,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x);

struct ItePredictionInterval {
  QuantileResult lo;
  QuantileResult hi;
  double alpha = 0.1;

  bool fully_finite() const { return lo.is_finite() && hi.is_finite(); }
};

// Central interval from the alpha/2 and 1-alpha/2 quantiles. The deferred
// (test-point) mass is read as sitting above the support on both endpoints,
// the usual weighted-CP treatment of the location-free term: the upper
// endpoint absorbs it conservatively, the lower endpoint is the plain
// finite-mass quantile. A lower endpoint the deferred mass swallows entirely
// is reported LowerUnbounded.
ItePredictionInterval interval(const DiscreteCpd& cpd, double alpha);

// Bonferroni combination of per-arm WCP intervals, each at miscoverage
// alpha/2: [l1 - u0, u1 - l0]. Reuses the arm systems of a fitted CctLearner.
ItePredictionInterval naive_wcp_interval(const CctLearner& learner,
                                         const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                         double alpha);

// Standard unweighted SplitCps fitted on true ITEs (synthetic data only);
// 50/50 proper-train/calibration split.
SplitCps fit_cps_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& ite_true,
                        const ConformityMeasure& measure, const RegressorSpec& spec,
                        SplitRng rng);

}  // namespace ccml
