#include "ccml/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ccml {

SplitCps make_split_cps(std::shared_ptr<const RegressionModel> point_model,
                        std::shared_ptr<const RegressionModel> difficulty_model,
                        const Eigen::MatrixXd& X_cal, const Eigen::VectorXd& y_cal,
                        const ConformityMeasure& measure) {
  if (X_cal.rows() == 0) {
    throw std::invalid_argument("make_split_cps: empty calibration split");
  }
  if (measure.is_normalized() && !difficulty_model) {
    throw std::invalid_argument("make_split_cps: normalized measure needs a difficulty model");
  }
  const Eigen::Index n = X_cal.rows();
  Eigen::VectorXd scores = y_cal - point_model->predict(X_cal);
  if (measure.is_normalized()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      scores[i] /= std::max(difficulty_model->predict_row(X_cal.row(i)), measure.floor);
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  SplitCps out;
  out.point_model = std::move(point_model);
  out.difficulty_model = std::move(difficulty_model);
  out.measure = measure;
  out.cal_scores.resize(n);
  out.cal_covariates.resize(n, X_cal.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.cal_scores[i] = scores[order[static_cast<std::size_t>(i)]];
    out.cal_covariates.row(i) = X_cal.row(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

Eigen::VectorXd heldout_abs_residuals(const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y,
                                      const RegressionModel& fitted,
                                      const RegressorSpec& spec, SplitRng rng) {
  if (const auto* forest = dynamic_cast<const RandomForest*>(&fitted);
      forest != nullptr && forest->has_oob()) {
    return (y - forest->oob_predictions(X)).cwiseAbs();
  }
  const int n = static_cast<int>(X.rows());
  const int n_folds = std::min(5, n);
  SplitRng fold_rng = rng.stream("folds");
  const std::vector<int> order = shuffled_indices(n, fold_rng);
  Eigen::VectorXd out(n);
  for (int f = 0; f < n_folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i) {
      (i % n_folds == f ? test_rows : train_rows).push_back(order[static_cast<std::size_t>(i)]);
    }
    Eigen::MatrixXd Xf(static_cast<Eigen::Index>(train_rows.size()), X.cols());
    Eigen::VectorXd yf(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      Xf.row(static_cast<Eigen::Index>(i)) = X.row(train_rows[i]);
      yf[static_cast<Eigen::Index>(i)] = y[train_rows[i]];
    }
    auto fold_model = fit_regressor(Xf, yf, spec.with_seed(fold_rng.next_u64()));
    for (int row : test_rows) {
      out[row] = std::abs(y[row] - fold_model->predict_row(X.row(row)));
    }
  }
  return out;
}

SplitCps fit_scps(const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                  const Eigen::MatrixXd& X_cal, const Eigen::VectorXd& y_cal,
                  const ConformityMeasure& measure, const RegressorSpec& spec,
                  SplitRng rng) {
  if (X_train.rows() == 0 || X_cal.rows() == 0) {
    throw std::invalid_argument("fit_scps: empty split");
  }
  auto point = fit_regressor(X_train, y_train, spec.with_seed(rng.stream("point").next_u64()));
  std::shared_ptr<const RegressionModel> difficulty;
  if (measure.is_normalized()) {
    const Eigen::VectorXd targets =
        heldout_abs_residuals(X_train, y_train, *point, spec, rng.stream("heldout"));
    difficulty = fit_regressor(X_train, targets,
                               spec.with_seed(rng.stream("difficulty").next_u64()));
  }
  return make_split_cps(std::move(point), std::move(difficulty), X_cal, y_cal, measure);
}

DiscreteCpd predict_cpd(const SplitCps& scps,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        const WeightFn* weights) {
  const Eigen::Index n = scps.n_cal();
  const double mu = scps.point_model->predict_row(x);
  double scale = 1.0;
  if (scps.measure.is_normalized()) {
    scale = std::max(scps.difficulty_model->predict_row(x), scps.measure.floor);
  }

  // scale > 0, so the sorted calibration scores map to a sorted support.
  Eigen::VectorXd support(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    support[i] = mu + scale * scps.cal_scores[i];
  }

  Eigen::VectorXd raw(n);
  if (weights != nullptr) {
    const double w_test = (*weights)(x);
    if (!(w_test > 0.0) || !std::isfinite(w_test)) {
      throw std::domain_error("predict_cpd: non-positive weight at test object");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = (*weights)(scps.cal_covariates.row(i));
      if (!(wi > 0.0) || !std::isfinite(wi)) {
        throw std::domain_error("predict_cpd: non-positive weight at calibration row");
      }
      raw[i] = wi / w_test;
    }
  } else {
    raw.setOnes();
  }
  double total = 1.0;  // the test point's own (normalized) weight
  for (Eigen::Index i = 0; i < n; ++i) total += raw[i];

  // Merge tied support values.
  Eigen::VectorXd merged_support(n), merged_masses(n);
  Eigen::Index out = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mass = raw[i] / total;
    if (out >= 0 && merged_support[out] == support[i]) {
      merged_masses[out] += mass;
    } else {
      ++out;
      merged_support[out] = support[i];
      merged_masses[out] = mass;
    }
  }
  return DiscreteCpd(merged_support.head(out + 1), merged_masses.head(out + 1),
                     1.0 / total);
}

}  // namespace ccml
