#include "ccml/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace ccml {

std::vector<int> CausalDataset::arm_rows(int arm) const {
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] == arm) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

CausalDataset CausalDataset::subset(const std::vector<int>& rows) const {
  CausalDataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.w.resize(static_cast<Eigen::Index>(rows.size()));
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.X.row(r) = X.row(rows[i]);
    out.w[r] = w[rows[i]];
    out.y[r] = y[rows[i]];
  }
  return out;
}

void CausalDataset::validate() const {
  if (X.rows() != w.size() || X.rows() != y.size()) {
    throw std::invalid_argument("CausalDataset: inconsistent lengths");
  }
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] != 0 && w[i] != 1) {
      throw std::invalid_argument("CausalDataset: treatment must be binary");
    }
  }
}

namespace {

double checked_propensity(const PropensityFn& propensity,
                          const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const double pi = propensity(x);
  if (!(pi > 0.0 && pi < 1.0)) {
    throw std::domain_error("propensity outside (0,1)");
  }
  return pi;
}

// CATE as the contrast of two fitted arm models.
class ContrastModel : public RegressionModel {
 public:
  ContrastModel(std::shared_ptr<const RegressionModel> treated,
                std::shared_ptr<const RegressionModel> control)
      : treated_(std::move(treated)), control_(std::move(control)) {}

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    return treated_->predict_row(x) - control_->predict_row(x);
  }
  Eigen::Index n_features() const override { return treated_->n_features(); }

 private:
  std::shared_ptr<const RegressionModel> treated_, control_;
};

// View of a single [X, w] model at a fixed treatment value.
class ArmQueryModel : public RegressionModel {
 public:
  ArmQueryModel(std::shared_ptr<const RegressionModel> base, int arm)
      : base_(std::move(base)), arm_(static_cast<double>(arm)) {}

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    Eigen::RowVectorXd z(x.size() + 1);
    z.head(x.size()) = x;
    z[x.size()] = arm_;
    return base_->predict_row(z);
  }
  Eigen::Index n_features() const override { return base_->n_features() - 1; }

 private:
  std::shared_ptr<const RegressionModel> base_;
  double arm_;
};

// Routes a full covariate row through a model fitted on a column subset.
class ColumnSubsetModel : public RegressionModel {
 public:
  ColumnSubsetModel(std::shared_ptr<const RegressionModel> base,
                    std::vector<int> columns, Eigen::Index full_width)
      : base_(std::move(base)), columns_(std::move(columns)), full_width_(full_width) {}

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    Eigen::RowVectorXd z(static_cast<Eigen::Index>(columns_.size()));
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      z[static_cast<Eigen::Index>(i)] = x[columns_[i]];
    }
    return base_->predict_row(z);
  }
  Eigen::Index n_features() const override { return full_width_; }

 private:
  std::shared_ptr<const RegressionModel> base_;
  std::vector<int> columns_;
  Eigen::Index full_width_;
};

std::pair<Eigen::MatrixXd, Eigen::VectorXd> gather(const CausalDataset& data,
                                                   const std::vector<int>& rows) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), data.X.cols());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
    y[static_cast<Eigen::Index>(i)] = data.y[rows[i]];
  }
  return {std::move(X), std::move(y)};
}

std::vector<int> sorted(std::vector<int> rows) {
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

WeightFn control_weight(const PropensityFn& propensity) {
  return [propensity](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return 1.0 / (1.0 - checked_propensity(propensity, x));
  };
}

WeightFn treated_weight(const PropensityFn& propensity) {
  return [propensity](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return 1.0 / checked_propensity(propensity, x);
  };
}

CctLearner fit_cct(const CausalDataset& data, PropensityFn propensity,
                   const ConformityMeasure& measure, const RegressorSpec& spec,
                   double split_fraction, SplitRng rng) {
  data.validate();
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw std::invalid_argument("fit_cct: split_fraction outside (0,1)");
  }
  CctLearner learner;
  learner.propensity = std::move(propensity);
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<int> rows = data.arm_rows(arm);
    if (rows.size() < 4) {
      throw std::invalid_argument("fit_cct: insufficient data, arm with < 4 rows");
    }
    SplitRng arm_rng = rng.stream(arm == 0 ? "arm0" : "arm1");
    shuffle(rows, arm_rng);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(split_fraction * static_cast<double>(rows.size()))),
        1, rows.size() - 1);
    std::vector<int> train_rows(rows.begin(), rows.begin() + static_cast<long>(n_train));
    std::vector<int> cal_rows(rows.begin() + static_cast<long>(n_train), rows.end());
    auto [Xt, yt] = gather(data, train_rows);
    auto [Xc, yc] = gather(data, cal_rows);
    SplitCps cps = fit_scps(Xt, yt, Xc, yc, measure, spec, arm_rng.stream("scps"));
    if (arm == 0) {
      learner.cps_control = std::move(cps);
      learner.control_train_rows = sorted(std::move(train_rows));
      learner.control_cal_rows = sorted(std::move(cal_rows));
    } else {
      learner.cps_treated = std::move(cps);
      learner.treated_train_rows = sorted(std::move(train_rows));
      learner.treated_cal_rows = sorted(std::move(cal_rows));
    }
  }
  return learner;
}

DiscreteCpd cct_control_cpd(const CctLearner& learner,
                            const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const WeightFn w0 = control_weight(learner.propensity);
  return predict_cpd(learner.cps_control, x, &w0);
}

DiscreteCpd cct_treated_cpd(const CctLearner& learner,
                            const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const WeightFn w1 = treated_weight(learner.propensity);
  return predict_cpd(learner.cps_treated, x, &w1);
}

DiscreteCpd cct_predict(const CctLearner& learner,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x,
                        std::optional<Eigen::Index> max_pairs) {
  return convolve_difference(cct_treated_cpd(learner, x), cct_control_cpd(learner, x),
                             max_pairs);
}

McSamples monte_carlo_ite(const CausalDataset& source, const SplitCps& cps_control,
                          const SplitCps& cps_treated, const PropensityFn& propensity,
                          int n_mc, McMode mode, SplitRng rng) {
  if (n_mc < 1) throw std::invalid_argument("monte_carlo_ite: n_mc must be >= 1");
  const Eigen::Index n = source.rows();
  McSamples out;
  out.covariates.resize(n * n_mc, source.X.cols());
  out.ite.resize(n * n_mc);

  const WeightFn w0 = control_weight(propensity);
  const WeightFn w1 = treated_weight(propensity);
  // pMC counterfactual weights: treated rows query the control system with
  // pi/(1-pi), untreated rows query the treated system with (1-pi)/pi.
  const WeightFn w_cf_of_treated = [&propensity](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const double pi = checked_propensity(propensity, x);
    return pi / (1.0 - pi);
  };
  const WeightFn w_cf_of_untreated = [&propensity](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const double pi = checked_propensity(propensity, x);
    return (1.0 - pi) / pi;
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    SplitRng row_rng = rng.stream(static_cast<std::uint64_t>(i));
    const auto x = source.X.row(i);
    const Eigen::Index base = i * n_mc;
    if (mode == McMode::Mc) {
      const DiscreteCpd cpd1 = predict_cpd(cps_treated, x, &w1);
      const DiscreteCpd cpd0 = predict_cpd(cps_control, x, &w0);
      for (int s = 0; s < n_mc; ++s) {
        const double u1 = row_rng.uniform();
        const double u0 = row_rng.uniform();
        out.ite[base + s] = sample_finite(cpd1, u1) - sample_finite(cpd0, u0);
      }
    } else if (source.w[i] == 0) {
      const DiscreteCpd cpd1 = predict_cpd(cps_treated, x, &w_cf_of_untreated);
      for (int s = 0; s < n_mc; ++s) {
        out.ite[base + s] = sample_finite(cpd1, row_rng.uniform()) - source.y[i];
      }
    } else {
      const DiscreteCpd cpd0 = predict_cpd(cps_control, x, &w_cf_of_treated);
      for (int s = 0; s < n_mc; ++s) {
        out.ite[base + s] = source.y[i] - sample_finite(cpd0, row_rng.uniform());
      }
    }
    for (int s = 0; s < n_mc; ++s) out.covariates.row(base + s) = x;
  }
  return out;
}

namespace {

struct CmcSplits {
  std::vector<int> nuisance_train;            // point/difficulty models
  std::vector<int> nuisance_cal;              // nuisance conformity scores
  std::vector<int> mc_rows;                   // MC source
  std::vector<int> arm_train[2], arm_cal[2];  // per-arm views of the nuisance half
};

CmcSplits split_for_cmc(const CausalDataset& data, SplitRng& rng) {
  const int n = static_cast<int>(data.rows());
  SplitRng split_rng = rng.stream("split");
  std::vector<int> order = shuffled_indices(n, split_rng);
  CmcSplits s;
  const int half = n / 2;
  // First half: the nuisance systems, split per arm into proper-train and
  // calibration. Second half: the MC source only (kept in shuffled order;
  // the X-learner halves it as-is).
  s.mc_rows.assign(order.begin() + half, order.end());
  std::vector<int> arm_rows[2];
  for (int k = 0; k < half; ++k) arm_rows[data.w[order[static_cast<std::size_t>(k)]]].push_back(order[static_cast<std::size_t>(k)]);
  for (int arm = 0; arm < 2; ++arm) {
    const auto arm_half = arm_rows[arm].size() / 2;
    s.arm_train[arm].assign(arm_rows[arm].begin(),
                            arm_rows[arm].begin() + static_cast<long>(arm_half));
    s.arm_cal[arm].assign(arm_rows[arm].begin() + static_cast<long>(arm_half),
                          arm_rows[arm].end());
    if (s.arm_train[arm].size() < 2 || s.arm_cal[arm].size() < 2) {
      throw std::invalid_argument("fit_cmc: insufficient rows per split");
    }
    s.nuisance_train.insert(s.nuisance_train.end(), s.arm_train[arm].begin(),
                            s.arm_train[arm].end());
    s.nuisance_cal.insert(s.nuisance_cal.end(), s.arm_cal[arm].begin(),
                          s.arm_cal[arm].end());
  }
  std::sort(s.nuisance_train.begin(), s.nuisance_train.end());
  std::sort(s.nuisance_cal.begin(), s.nuisance_cal.end());
  return s;
}

CmcLearner finish_cmc(CmcLearner learner, const CausalDataset& data,
                      const PropensityFn& propensity, const RegressorSpec& spec,
                      int n_mc, McMode mode, SplitRng& rng, CmcSplits splits,
                      const std::vector<int>* cate_features) {
  learner.n_mc = n_mc;
  learner.mode = mode;

  if (cate_features == nullptr) {
    // T/S: all MC-source rows feed both the pseudo-targets and the final
    // calibration (the final calibration is the repeated MC source).
    const McSamples mc =
        monte_carlo_ite(data.subset(splits.mc_rows), learner.cps_control,
                        learner.cps_treated, propensity, n_mc, mode, rng.stream("mc"));
    learner.final_cps = make_split_cps(learner.cate_model, nullptr, mc.covariates,
                                       mc.ite, ConformityMeasure::residual());
  } else {
    // X-learner: regressor half -> CATE model, conformal half -> final CPS.
    const std::size_t half = splits.mc_rows.size() / 2;
    std::vector<int> reg_rows(splits.mc_rows.begin(),
                              splits.mc_rows.begin() + static_cast<long>(half));
    std::vector<int> conf_rows(splits.mc_rows.begin() + static_cast<long>(half),
                               splits.mc_rows.end());
    if (reg_rows.size() < 2 || conf_rows.size() < 2) {
      throw std::invalid_argument("fit_cmc_x: calibration portion too small to halve");
    }
    const McSamples mc_reg =
        monte_carlo_ite(data.subset(reg_rows), learner.cps_control,
                        learner.cps_treated, propensity, n_mc, mode, rng.stream("mc_reg"));
    std::vector<int> columns = *cate_features;
    if (columns.empty()) {
      columns.resize(static_cast<std::size_t>(data.X.cols()));
      std::iota(columns.begin(), columns.end(), 0);
    }
    Eigen::MatrixXd reg_X(mc_reg.covariates.rows(),
                          static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      reg_X.col(static_cast<Eigen::Index>(c)) = mc_reg.covariates.col(columns[c]);
    }
    auto ite_model = fit_regressor(reg_X, mc_reg.ite,
                                   spec.with_seed(rng.stream("cate").next_u64()));
    learner.cate_model = std::make_shared<ColumnSubsetModel>(
        std::move(ite_model), columns, data.X.cols());

    const McSamples mc_conf =
        monte_carlo_ite(data.subset(conf_rows), learner.cps_control,
                        learner.cps_treated, propensity, n_mc, mode, rng.stream("mc_conf"));
    learner.final_cps = make_split_cps(learner.cate_model, nullptr, mc_conf.covariates,
                                       mc_conf.ite, ConformityMeasure::residual());
    learner.x_regressor_rows = sorted(std::move(reg_rows));
    learner.x_conformal_rows = sorted(std::move(conf_rows));
  }

  learner.nuisance_train_rows = std::move(splits.nuisance_train);
  learner.nuisance_cal_rows = std::move(splits.nuisance_cal);
  learner.mc_source_rows = sorted(std::move(splits.mc_rows));
  return learner;
}

}  // namespace

CmcLearner fit_cmc_t(const CausalDataset& data, PropensityFn propensity,
                     const ConformityMeasure& measure, const RegressorSpec& spec,
                     int n_mc, McMode mode, SplitRng rng) {
  data.validate();
  CmcSplits splits = split_for_cmc(data, rng);
  CmcLearner learner;
  for (int arm = 0; arm < 2; ++arm) {
    auto [Xt, yt] = gather(data, splits.arm_train[arm]);
    auto [Xc, yc] = gather(data, splits.arm_cal[arm]);
    SplitCps cps = fit_scps(Xt, yt, Xc, yc, measure, spec,
                            rng.stream(arm == 0 ? "nuisance0" : "nuisance1"));
    (arm == 0 ? learner.cps_control : learner.cps_treated) = std::move(cps);
  }
  learner.cate_model = std::make_shared<ContrastModel>(
      learner.cps_treated.point_model, learner.cps_control.point_model);
  return finish_cmc(std::move(learner), data, propensity, spec, n_mc, mode, rng,
                    std::move(splits), nullptr);
}

CmcLearner fit_cmc_s(const CausalDataset& data, PropensityFn propensity,
                     const ConformityMeasure& measure, const RegressorSpec& spec,
                     int n_mc, McMode mode, SplitRng rng) {
  data.validate();
  CmcSplits splits = split_for_cmc(data, rng);

  // One model over [X, w]; arms are fixed-w views of it.
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(splits.nuisance_train.size()),
                    data.X.cols() + 1);
  Eigen::VectorXd yz(static_cast<Eigen::Index>(splits.nuisance_train.size()));
  for (std::size_t i = 0; i < splits.nuisance_train.size(); ++i) {
    const int r = splits.nuisance_train[i];
    const auto d = static_cast<Eigen::Index>(i);
    Z.row(d).head(data.X.cols()) = data.X.row(r);
    Z(d, data.X.cols()) = static_cast<double>(data.w[r]);
    yz[d] = data.y[r];
  }
  SplitRng fit_rng = rng.stream("nuisance_s");
  auto base = fit_regressor(Z, yz, spec.with_seed(fit_rng.stream("point").next_u64()));
  std::shared_ptr<const RegressionModel> diff_base;
  if (measure.is_normalized()) {
    const Eigen::VectorXd targets =
        heldout_abs_residuals(Z, yz, *base, spec, fit_rng.stream("heldout"));
    diff_base = fit_regressor(Z, targets,
                              spec.with_seed(fit_rng.stream("difficulty").next_u64()));
  }

  CmcLearner learner;
  for (int arm = 0; arm < 2; ++arm) {
    auto point = std::make_shared<ArmQueryModel>(base, arm);
    std::shared_ptr<const RegressionModel> difficulty;
    if (diff_base) difficulty = std::make_shared<ArmQueryModel>(diff_base, arm);
    auto [Xc, yc] = gather(data, splits.arm_cal[arm]);
    SplitCps cps = make_split_cps(std::move(point), std::move(difficulty), Xc, yc, measure);
    (arm == 0 ? learner.cps_control : learner.cps_treated) = std::move(cps);
  }
  learner.cate_model = std::make_shared<ContrastModel>(
      learner.cps_treated.point_model, learner.cps_control.point_model);
  return finish_cmc(std::move(learner), data, propensity, spec, n_mc, mode, rng,
                    std::move(splits), nullptr);
}

CmcLearner fit_cmc_x(const CausalDataset& data, PropensityFn propensity,
                     const ConformityMeasure& measure, const RegressorSpec& spec,
                     int n_mc, McMode mode, SplitRng rng,
                     const std::vector<int>* cate_features) {
  data.validate();
  CmcSplits splits = split_for_cmc(data, rng);
  CmcLearner learner;
  for (int arm = 0; arm < 2; ++arm) {
    auto [Xt, yt] = gather(data, splits.arm_train[arm]);
    auto [Xc, yc] = gather(data, splits.arm_cal[arm]);
    SplitCps cps = fit_scps(Xt, yt, Xc, yc, measure, spec,
                            rng.stream(arm == 0 ? "nuisance0" : "nuisance1"));
    (arm == 0 ? learner.cps_control : learner.cps_treated) = std::move(cps);
  }
  static const std::vector<int> all_columns;  // empty = every column
  return finish_cmc(std::move(learner), data, propensity, spec, n_mc, mode, rng,
                    std::move(splits), cate_features ? cate_features : &all_columns);
}

DiscreteCpd cmc_predict(const CmcLearner& learner,
                        const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return predict_cpd(learner.final_cps, x, nullptr);
}

ItePredictionInterval interval(const DiscreteCpd& cpd, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval: alpha outside (0,1)");
  }
  ItePredictionInterval out;
  out.alpha = alpha;
  // Both endpoints read the deferred mass as sitting above the support (the
  // usual weighted-CP treatment of the location-free test-point term): the
  // upper endpoint absorbs it conservatively, the lower endpoint is the
  // plain finite-mass quantile.
  const QuantileResult lo = quantile(cpd, alpha / 2.0, DeferredTail::High);
  out.lo = lo.is_finite() ? lo : QuantileResult::lower_unbounded();
  out.hi = quantile(cpd, 1.0 - alpha / 2.0, DeferredTail::High);
  return out;
}

ItePredictionInterval naive_wcp_interval(const CctLearner& learner,
                                         const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                         double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("naive_wcp_interval: alpha outside (0,1)");
  }
  const DiscreteCpd cpd0 = cct_control_cpd(learner, x);
  const DiscreteCpd cpd1 = cct_treated_cpd(learner, x);
  // Per-arm two-sided intervals at miscoverage alpha/2 each, deferred mass
  // above the support as in interval().
  const QuantileResult l0 = quantile(cpd0, alpha / 4.0, DeferredTail::High);
  const QuantileResult u0 = quantile(cpd0, 1.0 - alpha / 4.0, DeferredTail::High);
  const QuantileResult l1 = quantile(cpd1, alpha / 4.0, DeferredTail::High);
  const QuantileResult u1 = quantile(cpd1, 1.0 - alpha / 4.0, DeferredTail::High);
  ItePredictionInterval out;
  out.alpha = alpha;
  out.lo = (l1.is_finite() && u0.is_finite())
               ? QuantileResult::finite(l1.value - u0.value)
               : QuantileResult::lower_unbounded();
  out.hi = (u1.is_finite() && l0.is_finite())
               ? QuantileResult::finite(u1.value - l0.value)
               : QuantileResult::upper_unbounded();
  return out;
}

SplitCps fit_cps_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& ite_true,
                        const ConformityMeasure& measure, const RegressorSpec& spec,
                        SplitRng rng) {
  if (ite_true.size() == 0) {
    throw std::invalid_argument("fit_cps_oracle: ground-truth ITE missing");
  }
  if (X.rows() != ite_true.size()) {
    throw std::invalid_argument("fit_cps_oracle: X rows != ite size");
  }
  if (X.rows() < 4) {
    throw std::invalid_argument("fit_cps_oracle: too few rows");
  }
  const int n = static_cast<int>(X.rows());
  SplitRng split_rng = rng.stream("split");
  std::vector<int> order = shuffled_indices(n, split_rng);
  const int half = n / 2;
  Eigen::MatrixXd Xt(half, X.cols()), Xc(n - half, X.cols());
  Eigen::VectorXd yt(half), yc(n - half);
  for (int i = 0; i < n; ++i) {
    if (i < half) {
      Xt.row(i) = X.row(order[static_cast<std::size_t>(i)]);
      yt[i] = ite_true[order[static_cast<std::size_t>(i)]];
    } else {
      Xc.row(i - half) = X.row(order[static_cast<std::size_t>(i)]);
      yc[i - half] = ite_true[order[static_cast<std::size_t>(i)]];
    }
  }
  return fit_scps(Xt, yt, Xc, yc, measure, spec, rng.stream("scps"));
}

}  // namespace ccml
