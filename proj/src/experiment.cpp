#include "ccml/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <tuple>

#include "ccml/logistic.hpp"

namespace ccml {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string learner_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Cct: return "cct";
    case LearnerKind::CmcTMc: return "cmc_t_mc";
    case LearnerKind::CmcTPmc: return "cmc_t_pmc";
    case LearnerKind::CmcS: return "cmc_s";
    case LearnerKind::CmcX: return "cmc_x";
    case LearnerKind::NaiveWcp: return "naive_wcp";
    case LearnerKind::CpsOracle: return "cps_oracle";
  }
  return "unknown";
}

std::optional<LearnerKind> parse_learner(const std::string& name) {
  for (LearnerKind k : {LearnerKind::Cct, LearnerKind::CmcTMc, LearnerKind::CmcTPmc,
                        LearnerKind::CmcS, LearnerKind::CmcX, LearnerKind::NaiveWcp,
                        LearnerKind::CpsOracle}) {
    if (learner_name(k) == name) return k;
  }
  return std::nullopt;
}

ConformityMeasure ExperimentConfig::resolved_measure() const {
  if (measure) return *measure;
  return csv_path ? ConformityMeasure::residual() : ConformityMeasure::normalized();
}

double ExperimentConfig::resolved_test_fraction() const {
  if (test_fraction) return *test_fraction;
  return is_nie(dgp.family) ? 0.5 : 0.2;
}

void validate_config(const ExperimentConfig& config) {
  if (config.n_sims < 1) throw ConfigError("n_sims must be >= 1");
  if (config.n_mc < 1) throw ConfigError("n_mc must be >= 1");
  if (config.alphas.empty()) throw ConfigError("at least one alpha is required");
  for (double a : config.alphas) {
    if (!(a > 0.0 && a < 1.0)) {
      throw ConfigError("alpha " + format_double(a) + " outside (0,1)");
    }
  }
  if (config.learners.empty()) throw ConfigError("at least one learner is required");
  if (config.jobs < 1) throw ConfigError("jobs must be >= 1");
  const double frac = config.resolved_test_fraction();
  if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("test_fraction outside (0,1)");
  if (config.dgp.family == DgpFamily::IhdpOverlay) {
    if (!config.csv_path) throw ConfigError("ihdp_overlay needs a csv covariate source");
    if (!config.csv_treatment_column) {
      throw ConfigError("ihdp_overlay needs the treatment column name");
    }
    if (config.propensity == PropensityMode::Oracle) {
      throw ConfigError("csv sources have no oracle propensity; use logistic");
    }
  } else {
    if (config.dgp.n < 20) throw ConfigError("dgp n too small to split");
    if (config.dgp.c < -1.0 || config.dgp.c > 1.0) throw ConfigError("c outside [-1,1]");
    if (!(config.dgp.sigma > 0.0)) throw ConfigError("sigma must be > 0");
  }
}

namespace {

struct CellOutput {
  std::vector<RunResult> rows;
  std::vector<PitRow> pits;
};

struct TruthSplit {
  CausalDataset train;
  Eigen::MatrixXd X_test;
  Eigen::VectorXd ite_test;
  Eigen::VectorXd tau_test;
  Eigen::VectorXd ite_train;  // oracle targets
};

TruthSplit split_dataset(const SyntheticDataset& data, double test_fraction,
                         SplitRng rng) {
  const int n = static_cast<int>(data.X.rows());
  SplitRng split_rng = rng.stream("split");
  std::vector<int> order = shuffled_indices(n, split_rng);
  int n_test = static_cast<int>(std::lround(test_fraction * n));
  n_test = std::clamp(n_test, 1, n - 1);
  const int n_train = n - n_test;

  TruthSplit out;
  out.train.X.resize(n_train, data.X.cols());
  out.train.w.resize(n_train);
  out.train.y.resize(n_train);
  out.ite_train.resize(n_train);
  out.X_test.resize(n_test, data.X.cols());
  out.ite_test.resize(n_test);
  out.tau_test.resize(n_test);
  for (int i = 0; i < n_train; ++i) {
    const int r = order[static_cast<std::size_t>(i)];
    out.train.X.row(i) = data.X.row(r);
    out.train.w[i] = data.w[r];
    out.train.y[i] = data.y[r];
    out.ite_train[i] = data.ite_true[r];
  }
  for (int i = 0; i < n_test; ++i) {
    const int r = order[static_cast<std::size_t>(n_train + i)];
    out.X_test.row(i) = data.X.row(r);
    out.ite_test[i] = data.ite_true[r];
    out.tau_test[i] = data.tau_true[r];
  }
  return out;
}

// Per-test-point artifacts for one learner, accumulated streaming so large
// CPD supports are never held all at once.
struct LearnerEval {
  std::vector<std::vector<ItePredictionInterval>> intervals;  // per alpha
  std::vector<double> pits;
  std::vector<double> medians;
  bool has_cpd = true;
};

template <typename CpdFn>
LearnerEval evaluate_cpd_learner(const ExperimentConfig& config,
                                 const Eigen::MatrixXd& X_test,
                                 const Eigen::VectorXd& ite_test, SplitRng pit_rng,
                                 CpdFn&& cpd_at) {
  LearnerEval eval;
  eval.intervals.resize(config.alphas.size());
  const Eigen::Index n = X_test.rows();
  for (auto& v : eval.intervals) v.reserve(static_cast<std::size_t>(n));
  eval.pits.reserve(static_cast<std::size_t>(n));
  eval.medians.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const DiscreteCpd cpd = cpd_at(X_test.row(i));
    for (std::size_t a = 0; a < config.alphas.size(); ++a) {
      eval.intervals[a].push_back(interval(cpd, config.alphas[a]));
    }
    eval.pits.push_back(cdf(cpd, ite_test[i], pit_rng.uniform()));
    eval.medians.push_back(cpd_median(cpd));
  }
  return eval;
}

// CCT path: per test point only three quantiles and one CDF value of the
// convolution are needed, so the pairwise support is never materialized
// (unless a convolution budget was configured, which the materialized route
// owns).
LearnerEval evaluate_cct_lazy(const ExperimentConfig& config, const CctLearner& learner,
                              const Eigen::MatrixXd& X_test,
                              const Eigen::VectorXd& ite_test, SplitRng pit_rng) {
  LearnerEval eval;
  eval.intervals.resize(config.alphas.size());
  const Eigen::Index n = X_test.rows();
  for (auto& v : eval.intervals) v.reserve(static_cast<std::size_t>(n));
  eval.pits.reserve(static_cast<std::size_t>(n));
  eval.medians.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const DiscreteCpd q1 = cct_treated_cpd(learner, X_test.row(i));
    const DiscreteCpd q0 = cct_control_cpd(learner, X_test.row(i));
    for (std::size_t a = 0; a < config.alphas.size(); ++a) {
      const double alpha = config.alphas[a];
      const QuantileResult lo =
          convolution_quantile(q1, q0, alpha / 2.0, DeferredTail::High);
      eval.intervals[a].push_back(
          {lo.is_finite() ? lo : QuantileResult::lower_unbounded(),
           convolution_quantile(q1, q0, 1.0 - alpha / 2.0, DeferredTail::High), alpha});
    }
    eval.pits.push_back(convolution_cdf(q1, q0, ite_test[i], pit_rng.uniform()));
    const QuantileResult med = convolution_quantile(q1, q0, 0.5, DeferredTail::High);
    eval.medians.push_back(med.is_finite()
                               ? med.value
                               : q1.support()[q1.size() - 1] - q0.support()[0]);
  }
  return eval;
}

// CMC path: the final CPS is unweighted with a Residual measure, so the CPD
// at x is one fixed score distribution shifted by the CATE estimate. Build
// that base distribution once and translate per test point instead of
// materializing a support of n_cal * n_mc points each time.
LearnerEval evaluate_cmc_shifted(const ExperimentConfig& config, const CmcLearner& learner,
                                 const Eigen::MatrixXd& X_test,
                                 const Eigen::VectorXd& ite_test, SplitRng pit_rng) {
  const Eigen::Index n_cal = learner.final_cps.n_cal();
  Eigen::VectorXd masses =
      Eigen::VectorXd::Constant(n_cal, 1.0 / (static_cast<double>(n_cal) + 1.0));
  const DiscreteCpd base(learner.final_cps.cal_scores, masses,
                         1.0 / (static_cast<double>(n_cal) + 1.0));
  struct Level {
    double alpha;
    QuantileResult lo, hi;
  };
  std::vector<Level> levels;
  for (double alpha : config.alphas) {
    const QuantileResult lo = quantile(base, alpha / 2.0, DeferredTail::High);
    levels.push_back({alpha, lo.is_finite() ? lo : QuantileResult::lower_unbounded(),
                      quantile(base, 1.0 - alpha / 2.0, DeferredTail::High)});
  }
  const QuantileResult base_median = quantile(base, 0.5, DeferredTail::High);

  LearnerEval eval;
  eval.intervals.resize(config.alphas.size());
  const Eigen::Index n = X_test.rows();
  for (auto& v : eval.intervals) v.reserve(static_cast<std::size_t>(n));
  eval.pits.reserve(static_cast<std::size_t>(n));
  eval.medians.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shift = learner.cate_model->predict_row(X_test.row(i));
    for (std::size_t a = 0; a < levels.size(); ++a) {
      ItePredictionInterval iv;
      iv.alpha = levels[a].alpha;
      iv.lo = levels[a].lo.is_finite()
                  ? QuantileResult::finite(shift + levels[a].lo.value)
                  : levels[a].lo;
      iv.hi = levels[a].hi.is_finite()
                  ? QuantileResult::finite(shift + levels[a].hi.value)
                  : levels[a].hi;
      eval.intervals[a].push_back(iv);
    }
    eval.pits.push_back(cdf(base, ite_test[i] - shift, pit_rng.uniform()));
    eval.medians.push_back(
        shift + (base_median.is_finite() ? base_median.value
                                         : base.support()[base.size() - 1]));
  }
  return eval;
}

double rmse_from_medians(const std::vector<double>& medians,
                         const Eigen::VectorXd& tau_test) {
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < medians.size(); ++i) {
    const double err = medians[i] - tau_test[static_cast<Eigen::Index>(i)];
    sum_sq += err * err;
  }
  return std::sqrt(sum_sq / static_cast<double>(medians.size()));
}

LearnerEval evaluate_learner(const ExperimentConfig& config, LearnerKind kind,
                             const TruthSplit& split, const PropensityFn& propensity,
                             SplitRng rng) {
  const ConformityMeasure base_measure = config.resolved_measure();
  ConformityMeasure measure = base_measure;
  int n_mc = config.n_mc;
  if (auto it = config.learner_settings.find(kind); it != config.learner_settings.end()) {
    if (it->second.measure) measure = *it->second.measure;
    if (it->second.n_mc) n_mc = *it->second.n_mc;
  }
  SplitRng fit_rng = rng.stream("fit");
  SplitRng pit_rng = rng.stream("pit");

  switch (kind) {
    case LearnerKind::Cct: {
      const CctLearner learner =
          fit_cct(split.train, propensity, measure, config.regressor, 0.5, fit_rng);
      if (config.convolve_budget) {
        return evaluate_cpd_learner(config, split.X_test, split.ite_test, pit_rng,
                                    [&](const auto& x) {
                                      return cct_predict(learner, x, config.convolve_budget);
                                    });
      }
      return evaluate_cct_lazy(config, learner, split.X_test, split.ite_test, pit_rng);
    }
    case LearnerKind::CmcTMc:
    case LearnerKind::CmcTPmc: {
      const McMode mode = kind == LearnerKind::CmcTMc ? McMode::Mc : McMode::PseudoMc;
      const CmcLearner learner = fit_cmc_t(split.train, propensity, measure,
                                           config.regressor, n_mc, mode, fit_rng);
      return evaluate_cmc_shifted(config, learner, split.X_test, split.ite_test, pit_rng);
    }
    case LearnerKind::CmcS: {
      const CmcLearner learner = fit_cmc_s(split.train, propensity, measure,
                                           config.regressor, n_mc, McMode::Mc, fit_rng);
      return evaluate_cmc_shifted(config, learner, split.X_test, split.ite_test, pit_rng);
    }
    case LearnerKind::CmcX: {
      const CmcLearner learner = fit_cmc_x(split.train, propensity, measure,
                                           config.regressor, n_mc, McMode::Mc, fit_rng);
      return evaluate_cmc_shifted(config, learner, split.X_test, split.ite_test, pit_rng);
    }
    case LearnerKind::NaiveWcp: {
      const CctLearner learner =
          fit_cct(split.train, propensity, measure, config.regressor, 0.5, fit_rng);
      LearnerEval eval;
      eval.has_cpd = false;
      eval.intervals.resize(config.alphas.size());
      for (Eigen::Index i = 0; i < split.X_test.rows(); ++i) {
        for (std::size_t a = 0; a < config.alphas.size(); ++a) {
          eval.intervals[a].push_back(
              naive_wcp_interval(learner, split.X_test.row(i), config.alphas[a]));
        }
      }
      return eval;
    }
    case LearnerKind::CpsOracle: {
      const SplitCps cps = fit_cps_oracle(split.train.X, split.ite_train, measure,
                                          config.regressor, fit_rng);
      return evaluate_cpd_learner(config, split.X_test, split.ite_test, pit_rng,
                                  [&](const auto& x) { return predict_cpd(cps, x); });
    }
  }
  throw std::logic_error("evaluate_learner: unknown learner");
}

CellOutput run_cell(const ExperimentConfig& config,
                    const std::optional<CovariateFile>& covariates, int sim,
                    bool collect_pits) {
  const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(sim);
  const std::string setup = dgp_family_name(config.dgp.family);
  CellOutput out;

  auto fail_all = [&]() {
    for (LearnerKind kind : config.learners) {
      for (double alpha : config.alphas) {
        RunResult row;
        row.setup = setup;
        row.learner = learner_name(kind);
        row.alpha = alpha;
        row.seed = seed;
        row.coverage = kNan;
        row.frac_unbounded = kNan;
        row.ks_pit = kNan;
        row.rmse_cate = kNan;
        row.wall_time = kNan;
        row.failed = true;
        out.rows.push_back(std::move(row));
      }
    }
  };

  TruthSplit split;
  PropensityFn propensity;
  try {
    SyntheticDataset data;
    if (config.dgp.family == DgpFamily::IhdpOverlay) {
      data = gen_ihdp_overlay(covariates->X, *covariates->treatment, seed);
    } else {
      DgpSpec spec = config.dgp;
      spec.seed = seed;
      data = generate(spec);
    }
    SplitRng rng = SplitRng(seed).stream("run");
    split = split_dataset(data, config.resolved_test_fraction(), rng);
    if (config.propensity == PropensityMode::Oracle) {
      propensity = oracle_propensity(config.dgp.family);
    } else {
      const PropensityModel model = fit_propensity(split.train.X, split.train.w);
      propensity = [model](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        return model.predict_proba(x);
      };
    }
  } catch (const std::exception&) {
    fail_all();
    return out;
  }

  for (LearnerKind kind : config.learners) {
    SplitRng learner_rng = SplitRng(seed).stream("run").stream(learner_name(kind));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const LearnerEval eval =
          evaluate_learner(config, kind, split, propensity, learner_rng);
      const double elapsed =
          config.timing
              ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              : 0.0;
      const double ks = eval.has_cpd ? ks_uniform(eval.pits) : kNan;
      const double rmse =
          eval.has_cpd ? rmse_from_medians(eval.medians, split.tau_test) : kNan;
      for (std::size_t a = 0; a < config.alphas.size(); ++a) {
        const Efficiency eff = efficiency(eval.intervals[a]);
        RunResult row;
        row.setup = setup;
        row.learner = learner_name(kind);
        row.alpha = config.alphas[a];
        row.seed = seed;
        row.coverage = coverage(eval.intervals[a], split.ite_test);
        row.mean_finite_width = eff.mean_finite_width;
        row.frac_unbounded = eff.frac_unbounded;
        row.ks_pit = ks;
        row.rmse_cate = rmse;
        row.wall_time = elapsed;
        out.rows.push_back(std::move(row));
      }
      if (collect_pits && eval.has_cpd) {
        for (double p : eval.pits) {
          out.pits.push_back({setup, learner_name(kind), seed, p});
        }
      }
    } catch (const std::exception&) {
      for (double alpha : config.alphas) {
        RunResult row;
        row.setup = setup;
        row.learner = learner_name(kind);
        row.alpha = alpha;
        row.seed = seed;
        row.coverage = kNan;
        row.frac_unbounded = kNan;
        row.ks_pit = kNan;
        row.rmse_cate = kNan;
        row.wall_time = kNan;
        row.failed = true;
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

std::vector<CellOutput> run_cells(const ExperimentConfig& config, bool collect_pits) {
  validate_config(config);
  std::optional<CovariateFile> covariates;
  if (config.dgp.family == DgpFamily::IhdpOverlay) {
    covariates = load_covariates_csv(*config.csv_path, config.csv_treatment_column);
    if (!covariates->treatment) {
      throw ConfigError("csv source is missing the treatment column");
    }
  }

  std::vector<CellOutput> cells(static_cast<std::size_t>(config.n_sims));
  const int workers = std::max(1, std::min(config.jobs, config.n_sims));
  if (workers == 1) {
    for (int i = 0; i < config.n_sims; ++i) {
      cells[static_cast<std::size_t>(i)] = run_cell(config, covariates, i, collect_pits);
    }
  } else {
    std::atomic<int> next{0};
    auto work = [&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= config.n_sims) break;
        cells[static_cast<std::size_t>(i)] = run_cell(config, covariates, i, collect_pits);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return cells;
}

void sort_rows(std::vector<RunResult>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const RunResult& a, const RunResult& b) {
    const double ca = a.c.value_or(-std::numeric_limits<double>::infinity());
    const double cb = b.c.value_or(-std::numeric_limits<double>::infinity());
    return std::tie(a.setup, a.learner, a.alpha, ca, a.seed) <
           std::tie(b.setup, b.learner, b.alpha, cb, b.seed);
  });
}

}  // namespace

std::vector<RunResult> run_experiment(const ExperimentConfig& config) {
  std::vector<CellOutput> cells = run_cells(config, false);
  std::vector<RunResult> rows;
  for (auto& cell : cells) {
    for (auto& row : cell.rows) rows.push_back(std::move(row));
  }
  sort_rows(rows);
  if (!config.out_path.empty()) write_results_csv(config.out_path, rows, false);
  return rows;
}

ExperimentOutput run_experiment_collecting(const ExperimentConfig& config) {
  std::vector<CellOutput> cells = run_cells(config, true);
  ExperimentOutput out;
  for (auto& cell : cells) {
    for (auto& row : cell.rows) out.rows.push_back(std::move(row));
    for (auto& pit : cell.pits) out.pits.push_back(std::move(pit));
  }
  sort_rows(out.rows);
  if (!config.out_path.empty()) write_results_csv(config.out_path, out.rows, false);
  return out;
}

std::vector<RunResult> sweep_correlation(ExperimentConfig config,
                                         const std::vector<double>& c_grid) {
  if (!is_nie(config.dgp.family)) {
    throw ConfigError("sweep-c requires a Nie dgp family");
  }
  if (c_grid.empty()) throw ConfigError("sweep-c: empty c grid");
  const std::string out_path = config.out_path;
  config.out_path.clear();
  std::vector<RunResult> rows;
  for (double c : c_grid) {
    if (c < -1.0 || c > 1.0) throw ConfigError("sweep-c: c outside [-1,1]");
    config.dgp.c = c;
    std::vector<RunResult> sub = run_experiment(config);
    for (auto& row : sub) {
      row.c = c;
      rows.push_back(std::move(row));
    }
  }
  sort_rows(rows);
  if (!out_path.empty()) write_results_csv(out_path, rows, true);
  return rows;
}

std::vector<PitRow> collect_pit(const ExperimentConfig& config) {
  std::vector<CellOutput> cells = run_cells(config, true);
  std::vector<PitRow> rows;
  for (auto& cell : cells) {
    for (auto& row : cell.pits) rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string field(double v) { return format_double(v); }

std::string field(const std::optional<double>& v) {
  return v ? format_double(*v) : "nan";
}

}  // namespace

void write_results_csv(const std::string& path, const std::vector<RunResult>& rows,
                       bool with_c_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "setup,learner,alpha";
  if (with_c_column) out << ",c";
  out << ",seed,coverage,mean_finite_width,frac_unbounded,ks_pit,rmse_cate,wall_time\n";
  for (const auto& row : rows) {
    out << row.setup << ',' << row.learner << ',' << field(row.alpha);
    if (with_c_column) out << ',' << field(row.c);
    out << ',' << row.seed << ',' << field(row.coverage) << ','
        << field(row.mean_finite_width) << ',' << field(row.frac_unbounded) << ','
        << field(row.ks_pit) << ',' << field(row.rmse_cate) << ','
        << field(row.wall_time) << '\n';
  }
}

void write_pit_csv(const std::string& path, const std::vector<PitRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "setup,learner,seed,pit\n";
  for (const auto& row : rows) {
    out << row.setup << ',' << row.learner << ',' << row.seed << ','
        << format_double(row.pit) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config file

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

ConformityMeasure parse_measure(const std::string& key, const std::string& value) {
  if (value == "residual") return ConformityMeasure::residual();
  if (value == "normalized") return ConformityMeasure::normalized();
  throw ConfigError(key + ": expected residual|normalized, got '" + value + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig config;
  config.learners.clear();
  std::vector<LearnerKind> table_learners;

  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.rfind("learner.", 0) == 0) {
        const std::string name = section.substr(8);
        const auto kind = parse_learner(name);
        if (!kind) {
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": unknown learner '" + name + "'");
        }
        table_learners.push_back(*kind);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string scoped = section.empty() ? key : section + "." + key;

    if (section.rfind("learner.", 0) == 0) {
      const LearnerKind kind = table_learners.back();
      if (key == "n_mc") {
        config.learner_settings[kind].n_mc = static_cast<int>(parse_int(scoped, value));
      } else if (key == "measure") {
        config.learner_settings[kind].measure = parse_measure(scoped, value);
      } else {
        throw ConfigError(scoped + ": unknown learner key");
      }
      continue;
    }

    if (section == "dgp") {
      if (key == "family") {
        const auto family = parse_dgp_family(value);
        if (!family) throw ConfigError(scoped + ": unknown family '" + value + "'");
        config.dgp.family = *family;
      } else if (key == "n") {
        config.dgp.n = parse_int(scoped, value);
      } else if (key == "d") {
        config.dgp.d = parse_int(scoped, value);
      } else if (key == "sigma") {
        config.dgp.sigma = parse_double(scoped, value);
      } else if (key == "c") {
        config.dgp.c = parse_double(scoped, value);
      } else {
        throw ConfigError(scoped + ": unknown dgp key");
      }
    } else if (section == "csv") {
      if (key == "path") {
        config.csv_path = value;
      } else if (key == "treatment_column") {
        config.csv_treatment_column = value;
      } else {
        throw ConfigError(scoped + ": unknown csv key");
      }
    } else if (section == "forest") {
      if (key == "n_trees") {
        config.regressor.forest.n_trees = static_cast<int>(parse_int(scoped, value));
      } else if (key == "max_depth") {
        config.regressor.forest.max_depth = static_cast<int>(parse_int(scoped, value));
      } else if (key == "min_samples_leaf") {
        config.regressor.forest.min_samples_leaf =
            static_cast<int>(parse_int(scoped, value));
      } else if (key == "min_samples_split") {
        config.regressor.forest.min_samples_split =
            static_cast<int>(parse_int(scoped, value));
      } else if (key == "feature_fraction") {
        config.regressor.forest.feature_fraction = parse_double(scoped, value);
      } else if (key == "bootstrap") {
        config.regressor.forest.bootstrap = parse_bool(scoped, value);
      } else {
        throw ConfigError(scoped + ": unknown forest key");
      }
    } else if (section == "regressor") {
      if (key == "kind") {
        if (value == "forest") {
          config.regressor.kind = RegressorSpec::Kind::RandomForest;
        } else if (value == "knn") {
          config.regressor.kind = RegressorSpec::Kind::Knn;
        } else {
          throw ConfigError(scoped + ": expected forest|knn");
        }
      } else if (key == "k") {
        config.regressor.knn_k = static_cast<int>(parse_int(scoped, value));
      } else {
        throw ConfigError(scoped + ": unknown regressor key");
      }
    } else if (section.empty() || section == "experiment") {
      if (key == "learners") {
        for (const std::string& name : split_list(value)) {
          const auto kind = parse_learner(name);
          if (!kind) throw ConfigError(scoped + ": unknown learner '" + name + "'");
          config.learners.push_back(*kind);
        }
      } else if (key == "alphas" || key == "alpha") {
        config.alphas.clear();
        for (const std::string& a : split_list(value)) {
          config.alphas.push_back(parse_double(scoped, a));
        }
      } else if (key == "n_sims") {
        config.n_sims = static_cast<int>(parse_int(scoped, value));
      } else if (key == "n_mc") {
        config.n_mc = static_cast<int>(parse_int(scoped, value));
      } else if (key == "measure") {
        config.measure = parse_measure(scoped, value);
      } else if (key == "propensity") {
        if (value == "oracle") {
          config.propensity = PropensityMode::Oracle;
        } else if (value == "logistic") {
          config.propensity = PropensityMode::Logistic;
        } else {
          throw ConfigError(scoped + ": expected oracle|logistic");
        }
      } else if (key == "base_seed") {
        config.base_seed = static_cast<std::uint64_t>(parse_int(scoped, value));
      } else if (key == "jobs") {
        config.jobs = static_cast<int>(parse_int(scoped, value));
      } else if (key == "out") {
        config.out_path = value;
      } else if (key == "test_fraction") {
        config.test_fraction = parse_double(scoped, value);
      } else if (key == "timing") {
        config.timing = parse_bool(scoped, value);
      } else if (key == "convolve_budget") {
        config.convolve_budget = parse_int(scoped, value);
      } else {
        throw ConfigError(scoped + ": unknown key");
      }
    } else {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" +
                        section + "]");
    }
  }

  for (LearnerKind kind : table_learners) {
    if (std::find(config.learners.begin(), config.learners.end(), kind) ==
        config.learners.end()) {
      config.learners.push_back(kind);
    }
  }
  if (config.learners.empty()) config.learners.push_back(LearnerKind::Cct);
  return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace ccml
