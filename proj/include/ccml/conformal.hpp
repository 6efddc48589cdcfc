#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>

#include "ccml/discrete_cpd.hpp"
#include "ccml/models.hpp"
#include "ccml/rng.hpp"

namespace ccml {

// Split conformity measure over signed residuals. NormalizedResidual divides
// by a difficulty estimate floored away from zero so the measure stays
// isotonic and balanced.
struct ConformityMeasure {
  enum class Kind { Residual, NormalizedResidual };

  Kind kind = Kind::Residual;
  double floor = 1e-6;

  static ConformityMeasure residual() { return {Kind::Residual, 1e-6}; }
  static ConformityMeasure normalized(double floor = 1e-6) {
    return {Kind::NormalizedResidual, floor};
  }
  bool is_normalized() const { return kind == Kind::NormalizedResidual; }
};

// Unnormalized likelihood-ratio weight w(x) > 0; evaluated at every
// calibration covariate row and at the test object.
using WeightFn = std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>;

// A fitted split conformal predictive system. Calibration scores are kept
// sorted ascending with their covariate rows aligned (weights are evaluated
// at prediction time). Immutable after fit; predict_cpd is pure.
struct SplitCps {
  std::shared_ptr<const RegressionModel> point_model;
  std::shared_ptr<const RegressionModel> difficulty_model;  // null unless normalized
  Eigen::VectorXd cal_scores;
  Eigen::MatrixXd cal_covariates;
  ConformityMeasure measure;

  Eigen::Index n_cal() const { return cal_scores.size(); }
};

// Builds the calibration side of a SplitCps from already-fitted models:
// scores are computed with the measure, then jointly sorted with their
// covariate rows.
SplitCps make_split_cps(std::shared_ptr<const RegressionModel> point_model,
                        std::shared_ptr<const RegressionModel> difficulty_model,
                        const Eigen::MatrixXd& X_cal, const Eigen::VectorXd& y_cal,
                        const ConformityMeasure& measure);

// Absolute residuals of predictions the fitted model never saw: out-of-bag
// for a bagged forest, 5-fold cross-fitted otherwise. Difficulty-model
// training targets.
Eigen::VectorXd heldout_abs_residuals(const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y,
                                      const RegressionModel& fitted,
                                      const RegressorSpec& spec, SplitRng rng);

// Fits the point model on the proper-training split only, computes conformity
// scores on the calibration split only. For NormalizedResidual the difficulty
// model is trained on the proper-training split with absolute residuals of
// out-of-bag predictions as targets (5-fold cross-fitted for non-bagged
// models). Throws std::invalid_argument on an empty split.
SplitCps fit_scps(const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                  const Eigen::MatrixXd& X_cal, const Eigen::VectorXd& y_cal,
                  const ConformityMeasure& measure, const RegressorSpec& spec,
                  SplitRng rng);

// Emits the conformal predictive distribution at x: support points are the
// point prediction offset by the (scaled) calibration scores; masses are the
// weighted transducer probabilities p_i^w = w(x_i) / (sum_j w(x_j) + w(x)),
// and the deferred mass is the test-point term w(x) / (sum_j w(x_j) + w(x)).
// Weights are normalized by w(x) before use, which leaves the distribution
// unchanged and makes any constant weight function reproduce the unweighted
// output bit for bit. Null weights mean w == 1. Ties in the support are
// merged. Throws std::domain_error if a weight evaluates non-positive.
DiscreteCpd predict_cpd(const SplitCps& scps,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        const WeightFn* weights = nullptr);

}  // namespace ccml
