#pragma once

#include <Eigen/Dense>

namespace ccml {

// L2-penalized logistic model for propensity estimation. Predicted
// probabilities are always clipped to [clip, 1 - clip] (positivity).
struct PropensityModel {
  Eigen::VectorXd coef;
  double intercept = 0.0;
  double clip = 0.01;

  double predict_proba(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

// Maximum-likelihood fit via iteratively reweighted least squares (ridge
// penalty lambda on the coefficients, intercept unpenalized; max 100
// iterations, tolerance 1e-8 on the gradient max-norm). Throws
// std::invalid_argument unless both classes are present in w.
PropensityModel fit_propensity(const Eigen::MatrixXd& X, const Eigen::VectorXi& w,
                               double clip = 0.01, double lambda = 1.0,
                               int max_iter = 100, double tol = 1e-8);

}  // namespace ccml
