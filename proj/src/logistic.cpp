#include "ccml/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccml {

namespace {

double sigmoid(double z) {
  z = std::clamp(z, -40.0, 40.0);
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

double PropensityModel::predict_proba(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const double p = sigmoid(x.dot(coef) + intercept);
  return std::clamp(p, clip, 1.0 - clip);
}

PropensityModel fit_propensity(const Eigen::MatrixXd& X, const Eigen::VectorXi& w,
                               double clip, double lambda, int max_iter,
                               double tol) {
  if (X.rows() != w.size()) {
    throw std::invalid_argument("fit_propensity: X rows != w size");
  }
  if (!(clip > 0.0 && clip < 0.5)) {
    throw std::invalid_argument("fit_propensity: clip outside (0, 0.5)");
  }
  const int ones = static_cast<int>(w.cast<int>().sum());
  if (ones == 0 || ones == w.size()) {
    throw std::invalid_argument("fit_propensity: degenerate data, single class");
  }

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  // Design with intercept as the last column; penalty skips it.
  Eigen::MatrixXd Z(n, d + 1);
  Z.leftCols(d) = X;
  Z.col(d).setOnes();
  Eigen::VectorXd target = w.cast<double>();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, lambda);
  penalty[d] = 0.0;

  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd eta = Z * beta;
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(eta[i]);
    Eigen::VectorXd grad = Z.transpose() * (target - p) - penalty.cwiseProduct(beta);
    if (grad.lpNorm<Eigen::Infinity>() < tol) break;
    Eigen::VectorXd weights = p.array() * (1.0 - p.array());
    weights = weights.cwiseMax(1e-10);
    Eigen::MatrixXd hessian = Z.transpose() * weights.asDiagonal() * Z;
    hessian.diagonal() += penalty;
    beta += hessian.ldlt().solve(grad);
  }

  PropensityModel model;
  model.coef = beta.head(d);
  model.intercept = beta[d];
  model.clip = clip;
  return model;
}

}  // namespace ccml
