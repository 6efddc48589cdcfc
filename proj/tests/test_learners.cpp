#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ccml/datagen.hpp"
#include "ccml/eval.hpp"
#include "ccml/learners.hpp"
#include "test_util.hpp"

using namespace ccml;
using ccml::testing::random_cpd;
using ccml::testing::to_vector;

namespace {

const PropensityFn kRct = [](const Eigen::Ref<const Eigen::RowVectorXd>&) {
  return 0.5;
};

// y = effect * w + f(x) + noise_scale * N(0,1); both arms populated.
CausalDataset toy_dataset(int n, double effect, double noise_scale, SplitRng& rng,
                          double treat_rate = 0.5) {
  CausalDataset data;
  data.X.resize(n, 2);
  data.w.resize(n);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.uniform();
    data.X(i, 1) = rng.uniform();
    data.w[i] = rng.uniform() < treat_rate ? 1 : 0;
    data.y[i] = effect * data.w[i] + noise_scale * rng.normal();
  }
  return data;
}

RegressorSpec small_forest(std::uint64_t seed = 0, int trees = 40) {
  ForestParams params;
  params.n_trees = trees;
  return RegressorSpec::random_forest(params, seed);
}

bool bitwise_equal(const DiscreteCpd& a, const DiscreteCpd& b) {
  if (a.size() != b.size() || a.deferred_mass() != b.deferred_mass()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.support()[i] != b.support()[i] || a.masses()[i] != b.masses()[i]) return false;
  }
  return true;
}

void check_disjoint(const std::vector<const std::vector<int>*>& sets, int n_total) {
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto* s : sets) {
    for (int r : *s) {
      CHECK(r >= 0);
      CHECK(r < n_total);
      seen.insert(r);
    }
    total += s->size();
  }
  CHECK(seen.size() == total);  // pairwise disjoint
}

}  // namespace

TEST_CASE("rct oracle propensity reduces weighted arm cpds to unweighted, bitwise") {
  SplitRng rng(1);
  CausalDataset data = toy_dataset(240, 1.0, 0.4, rng);
  const CctLearner learner = fit_cct(data, kRct, ConformityMeasure::normalized(),
                                     small_forest(3), 0.5, SplitRng(2));
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::RowVectorXd x(2);
    x << rng.uniform(), rng.uniform();
    CHECK(bitwise_equal(cct_control_cpd(learner, x),
                        predict_cpd(learner.cps_control, x)));
    CHECK(bitwise_equal(cct_treated_cpd(learner, x),
                        predict_cpd(learner.cps_treated, x)));
  }
}

TEST_CASE("noiseless unit effect collapses the cct interval") {
  SplitRng rng(3);
  CausalDataset data = toy_dataset(400, 1.0, 0.0, rng);
  const CctLearner learner = fit_cct(data, kRct, ConformityMeasure::residual(),
                                     small_forest(5), 0.5, SplitRng(4));
  Eigen::RowVectorXd x(2);
  x << 0.5, 0.5;
  const DiscreteCpd cpd = cct_predict(learner, x);
  const ItePredictionInterval iv = interval(cpd, 0.1);
  REQUIRE(iv.fully_finite());
  CHECK(iv.hi.value - iv.lo.value < 0.1);
  CHECK(iv.lo.value == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("an arm with fewer than 4 rows is insufficient data") {
  SplitRng rng(5);
  CausalDataset data = toy_dataset(200, 1.0, 0.1, rng);
  for (int i = 0; i < 200; ++i) data.w[i] = i < 3 ? 1 : 0;  // arm sizes (3, 197)
  CHECK_THROWS_AS(fit_cct(data, kRct, ConformityMeasure::residual(), small_forest(),
                          0.5, SplitRng(6)),
                  std::invalid_argument);
}

TEST_CASE("cct_predict is exactly the convolution of its arm cpds") {
  SplitRng rng(7);
  CausalDataset data = toy_dataset(300, 2.0, 0.5, rng);
  const CctLearner learner = fit_cct(data, kRct, ConformityMeasure::normalized(),
                                     small_forest(8), 0.5, SplitRng(9));
  Eigen::RowVectorXd x(2);
  x << 0.3, 0.7;
  const DiscreteCpd direct = cct_predict(learner, x);
  const DiscreteCpd manual =
      convolve_difference(cct_treated_cpd(learner, x), cct_control_cpd(learner, x));
  CHECK(bitwise_equal(direct, manual));

  // Point-mass arms: noiseless arms at 3 and 1 give an ite point mass at 2.
  SplitRng rng2(10);
  CausalDataset flat = toy_dataset(300, 0.0, 0.0, rng2);
  for (int i = 0; i < 300; ++i) flat.y[i] = flat.w[i] == 1 ? 3.0 : 1.0;
  const CctLearner point = fit_cct(flat, kRct, ConformityMeasure::residual(),
                                   small_forest(11), 0.5, SplitRng(12));
  const DiscreteCpd cpd = cct_predict(point, x);
  REQUIRE(cpd.size() == 1);
  CHECK(cpd.support()[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("monte carlo ite sampling hand cases") {
  SplitRng rng(13);
  // Point-mass systems: treated at 3, control at 1.
  CausalDataset flat = toy_dataset(200, 0.0, 0.0, rng);
  for (int i = 0; i < 200; ++i) flat.y[i] = flat.w[i] == 1 ? 3.0 : 1.0;
  const CctLearner learner = fit_cct(flat, kRct, ConformityMeasure::residual(),
                                     small_forest(14), 0.5, SplitRng(15));

  CausalDataset source;
  source.X.resize(2, 2);
  source.X << 0.2, 0.4, 0.6, 0.8;
  source.w = Eigen::VectorXi::Zero(2);
  source.y = to_vector({1.0, 1.0});

  const McSamples mc = monte_carlo_ite(source, learner.cps_control, learner.cps_treated,
                                       kRct, 10, McMode::Mc, SplitRng(16));
  REQUIRE(mc.ite.size() == 20);
  for (Eigen::Index i = 0; i < mc.ite.size(); ++i) {
    CHECK(mc.ite[i] == doctest::Approx(2.0).epsilon(1e-12));
  }
  CHECK(mc.covariates.rows() == 20);
  CHECK(mc.covariates(0, 0) == 0.2);
  CHECK(mc.covariates(10, 0) == 0.6);

  // Pseudo-MC anchors the observed outcome: w=0, y=1, treated point mass 3.
  const McSamples pmc = monte_carlo_ite(source, learner.cps_control,
                                        learner.cps_treated, kRct, 10,
                                        McMode::PseudoMc, SplitRng(17));
  for (Eigen::Index i = 0; i < pmc.ite.size(); ++i) {
    CHECK(pmc.ite[i] == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("monte carlo sample mean matches the sampling oracle") {
  // Treated support {2,4} uniform, control point mass at 0: mean ite 3.
  Eigen::MatrixXd X_cal = Eigen::MatrixXd::Zero(2, 1);
  X_cal << 0.25, 0.75;
  const auto const_model = [](double v) {
    return std::make_shared<KnnRegressor>(Eigen::MatrixXd::Zero(1, 1),
                                          Eigen::VectorXd::Constant(1, v), 1);
  };
  const SplitCps treated = make_split_cps(const_model(0.0), nullptr, X_cal,
                                          to_vector({2.0, 4.0}),
                                          ConformityMeasure::residual());
  const SplitCps control = make_split_cps(const_model(0.0), nullptr,
                                          Eigen::MatrixXd::Zero(1, 1),
                                          to_vector({0.0}),
                                          ConformityMeasure::residual());
  CausalDataset source;
  source.X = Eigen::MatrixXd::Zero(1, 1);
  source.w = Eigen::VectorXi::Zero(1);
  source.y = to_vector({0.0});
  const McSamples mc = monte_carlo_ite(source, control, treated, kRct, 10000,
                                       McMode::Mc, SplitRng(18));
  CHECK(mc.ite.mean() == doctest::Approx(3.0).epsilon(0.017));
  // Every sample is one of the two support differences.
  for (Eigen::Index i = 0; i < 100; ++i) {
    CHECK((mc.ite[i] == 2.0 || mc.ite[i] == 4.0));
  }
}

TEST_CASE("pseudo-mc on an rct reduces to unweighted sampling, bitwise") {
  SplitRng rng(19);
  CausalDataset data = toy_dataset(300, 1.5, 0.5, rng);
  const CctLearner learner = fit_cct(data, kRct, ConformityMeasure::residual(),
                                     small_forest(20), 0.5, SplitRng(21));
  CausalDataset source = toy_dataset(10, 1.5, 0.5, rng);

  const McSamples weighted = monte_carlo_ite(source, learner.cps_control,
                                             learner.cps_treated, kRct, 25,
                                             McMode::PseudoMc, SplitRng(22));
  // Replay the sampling by hand with unweighted cpds and the same streams.
  SplitRng replay_root(22);
  for (Eigen::Index i = 0; i < source.rows(); ++i) {
    SplitRng row_rng = replay_root.stream(static_cast<std::uint64_t>(i));
    const auto x = source.X.row(i);
    for (int s = 0; s < 25; ++s) {
      const double u = row_rng.uniform();
      const double expected =
          source.w[i] == 0
              ? sample_finite(predict_cpd(learner.cps_treated, x), u) - source.y[i]
              : source.y[i] - sample_finite(predict_cpd(learner.cps_control, x), u);
      CHECK(weighted.ite[i * 25 + s] == expected);
    }
  }
}

TEST_CASE("cmc fits reject datasets too small to split") {
  SplitRng rng(99);
  CausalDataset data = toy_dataset(40, 1.0, 0.3, rng);
  for (int i = 0; i < 40; ++i) data.w[i] = i < 3 ? 1 : 0;  // 3 treated rows
  CHECK_THROWS_AS(fit_cmc_t(data, kRct, ConformityMeasure::residual(),
                            small_forest(98), 10, McMode::Mc, SplitRng(97)),
                  std::invalid_argument);
}

TEST_CASE("cmc t-learner: deterministic dgp collapses widths") {
  SplitRng rng(23);
  CausalDataset data = toy_dataset(400, 2.0, 0.0, rng);
  const CmcLearner learner = fit_cmc_t(data, kRct, ConformityMeasure::residual(),
                                       small_forest(24), 20, McMode::Mc, SplitRng(25));
  Eigen::RowVectorXd x(2);
  x << 0.5, 0.5;
  const DiscreteCpd cpd = cmc_predict(learner, x);
  const ItePredictionInterval iv = interval(cpd, 0.1);
  REQUIRE(iv.fully_finite());
  CHECK(iv.lo.value == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(iv.hi.value - iv.lo.value < 1e-9);
}

TEST_CASE("cmc final cpd is the cate estimate offset by final scores") {
  SplitRng rng(26);
  CausalDataset data = toy_dataset(300, 1.0, 0.6, rng);
  const CmcLearner learner = fit_cmc_t(data, kRct, ConformityMeasure::normalized(),
                                       small_forest(27), 15, McMode::Mc, SplitRng(28));
  Eigen::RowVectorXd x(2);
  x << 0.4, 0.6;
  const DiscreteCpd cpd = cmc_predict(learner, x);
  const double cate = learner.cate_model->predict_row(x);
  // First and last support points are cate + extreme scores.
  CHECK(cpd.support()[0] ==
        doctest::Approx(cate + learner.final_cps.cal_scores[0]).epsilon(1e-12));
  const Eigen::Index last = learner.final_cps.n_cal() - 1;
  CHECK(cpd.support()[cpd.size() - 1] ==
        doctest::Approx(cate + learner.final_cps.cal_scores[last]).epsilon(1e-12));
  // Unweighted final stage: uniform masses.
  CHECK(cpd.deferred_mass() ==
        doctest::Approx(1.0 / (learner.final_cps.n_cal() + 1.0)).epsilon(1e-12));
}

TEST_CASE("mc ite samples agree with the convolution cdf at fixed x") {
  SplitRng rng(29);
  DgpSpec spec;
  spec.family = DgpFamily::NieB;
  spec.n = 1200;
  spec.seed = 30;
  const SyntheticDataset data = generate(spec);
  const CausalDataset observed = data.observed();
  const CctLearner learner = fit_cct(observed, oracle_propensity(DgpFamily::NieB),
                                     ConformityMeasure::normalized(),
                                     small_forest(31), 0.5, SplitRng(32));
  CausalDataset source;
  source.X = data.X.topRows(2);
  source.w = data.w.head(2);
  source.y = data.y.head(2);
  const int n_mc = 2000;
  const McSamples mc = monte_carlo_ite(source, learner.cps_control, learner.cps_treated,
                                       oracle_propensity(DgpFamily::NieB), n_mc,
                                       McMode::Mc, SplitRng(33));
  for (int row = 0; row < 2; ++row) {
    const DiscreteCpd conv = cct_predict(learner, source.X.row(row));
    std::vector<double> samples(
        mc.ite.data() + row * n_mc, mc.ite.data() + (row + 1) * n_mc);
    std::sort(samples.begin(), samples.end());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double f = cdf(conv, samples[i], 0.5);
      d = std::max(d, std::abs(f - static_cast<double>(i) / n_mc));
      d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n_mc));
    }
    CHECK(d < 0.05);
  }
}

TEST_CASE("cmc s-learner shares one model across arms") {
  SplitRng rng(34);
  // Constant outcome: the shared model is a single pure leaf, so the two
  // arm views coincide bitwise.
  CausalDataset constant = toy_dataset(400, 0.0, 0.0, rng);
  for (int i = 0; i < 400; ++i) constant.y[i] = 4.25;
  const CmcLearner pure = fit_cmc_s(constant, kRct, ConformityMeasure::residual(),
                                    small_forest(35), 10, McMode::Mc, SplitRng(36));
  // Outcome driven by x only: arm views stay close and the cate is near zero
  // (a bootstrap forest may still split on w deep in noisy leaves).
  CausalDataset data = toy_dataset(400, 0.0, 0.0, rng);
  for (int i = 0; i < 400; ++i) data.y[i] = data.X(i, 0);
  const CmcLearner learner = fit_cmc_s(data, kRct, ConformityMeasure::residual(),
                                       small_forest(35), 10, McMode::Mc, SplitRng(36));
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::RowVectorXd x(2);
    x << rng.uniform(), rng.uniform();
    CHECK(pure.cps_control.point_model->predict_row(x) ==
          pure.cps_treated.point_model->predict_row(x));
    CHECK(pure.cate_model->predict_row(x) == 0.0);
    CHECK(std::abs(learner.cate_model->predict_row(x)) < 0.05);
  }
}

TEST_CASE("cmc s-learner is no more efficient than the t-learner on unrelated arms") {
  double width_t = 0.0, width_s = 0.0;
  int counted = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DgpSpec spec;
    spec.family = DgpFamily::NieD;
    spec.n = 2400;
    spec.seed = 100 + seed;
    const SyntheticDataset data = generate(spec);
    const CausalDataset observed = data.observed();
    const PropensityFn prop = oracle_propensity(DgpFamily::NieD);
    const CmcLearner t = fit_cmc_t(observed, prop, ConformityMeasure::normalized(),
                                   small_forest(seed), 40, McMode::Mc,
                                   SplitRng(200 + seed));
    const CmcLearner s = fit_cmc_s(observed, prop, ConformityMeasure::normalized(),
                                   small_forest(seed), 40, McMode::Mc,
                                   SplitRng(300 + seed));
    SplitRng probe(400 + seed);
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::RowVectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = probe.normal();
      const ItePredictionInterval iv_t = interval(cmc_predict(t, x), 0.1);
      const ItePredictionInterval iv_s = interval(cmc_predict(s, x), 0.1);
      if (iv_t.fully_finite() && iv_s.fully_finite()) {
        width_t += iv_t.hi.value - iv_t.lo.value;
        width_s += iv_s.hi.value - iv_s.lo.value;
        ++counted;
      }
    }
  }
  REQUIRE(counted > 500);
  CHECK(width_s / counted >= width_t / counted);
}

TEST_CASE("cmc x-learner recovers the cate and honors feature subsets") {
  SplitRng rng(37);
  // Deterministic effect tau(x) = x0.
  CausalDataset data = toy_dataset(800, 0.0, 0.0, rng);
  for (int i = 0; i < 800; ++i) data.y[i] = data.w[i] * data.X(i, 0);
  const CmcLearner learner = fit_cmc_x(data, kRct, ConformityMeasure::residual(),
                                       small_forest(38), 20, McMode::Mc, SplitRng(39));
  double worst = 0.0;
  for (double g = 0.1; g <= 0.9; g += 0.1) {
    Eigen::RowVectorXd x(2);
    x << g, 0.5;
    worst = std::max(worst, std::abs(learner.cate_model->predict_row(x) - g));
  }
  CHECK(worst < 0.15);
}

TEST_CASE("cmc x-learner with all features tracks the t-learner cate") {
  // Easy limit: noiseless tau(x) = x0 + x1, where both cate estimators
  // converge and must agree.
  SplitRng rng(40);
  CausalDataset data = toy_dataset(3000, 0.0, 0.0, rng);
  for (int i = 0; i < 3000; ++i) {
    data.y[i] = data.w[i] * (data.X(i, 0) + data.X(i, 1));
  }
  const CmcLearner t = fit_cmc_t(data, kRct, ConformityMeasure::residual(),
                                 small_forest(42), 30, McMode::Mc, SplitRng(43));
  const CmcLearner x_learner = fit_cmc_x(data, kRct, ConformityMeasure::residual(),
                                         small_forest(44), 30, McMode::Mc, SplitRng(45));
  double gap = 0.0;
  int count = 0;
  SplitRng probe(46);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::RowVectorXd x(2);
    x << probe.uniform(), probe.uniform();
    gap += std::abs(t.cate_model->predict_row(x) - x_learner.cate_model->predict_row(x));
    ++count;
  }
  CHECK(gap / count < 0.1);
}

TEST_CASE("excluding effect-relevant covariates widens x-learner intervals") {
  double width_full = 0.0, width_reduced = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    DgpSpec spec;
    spec.family = DgpFamily::NieA;  // tau = (x0 + x1) / 2
    spec.n = 1600;
    spec.sigma = 0.3;
    spec.seed = 50 + seed;
    const SyntheticDataset data = generate(spec);
    const CausalDataset observed = data.observed();
    const PropensityFn prop = oracle_propensity(DgpFamily::NieA);
    const std::vector<int> blind = {2, 3, 4};
    const CmcLearner full = fit_cmc_x(observed, prop, ConformityMeasure::residual(),
                                      small_forest(60 + seed), 30, McMode::Mc,
                                      SplitRng(70 + seed));
    const CmcLearner reduced = fit_cmc_x(observed, prop, ConformityMeasure::residual(),
                                         small_forest(60 + seed), 30, McMode::Mc,
                                         SplitRng(70 + seed), &blind);
    SplitRng probe(80 + seed);
    for (int rep = 0; rep < 40; ++rep) {
      Eigen::RowVectorXd x(5);
      for (int j = 0; j < 5; ++j) x[j] = probe.uniform();
      const auto iv_f = interval(cmc_predict(full, x), 0.1);
      const auto iv_r = interval(cmc_predict(reduced, x), 0.1);
      REQUIRE(iv_f.fully_finite());
      REQUIRE(iv_r.fully_finite());
      width_full += iv_f.hi.value - iv_f.lo.value;
      width_reduced += iv_r.hi.value - iv_r.lo.value;
    }
  }
  CHECK(width_reduced > width_full);
}

TEST_CASE("split hygiene: recorded split sets are pairwise disjoint") {
  SplitRng rng(47);
  CausalDataset data = toy_dataset(400, 1.0, 0.5, rng);
  const CctLearner cct = fit_cct(data, kRct, ConformityMeasure::residual(),
                                 small_forest(48), 0.5, SplitRng(49));
  check_disjoint({&cct.control_train_rows, &cct.control_cal_rows,
                  &cct.treated_train_rows, &cct.treated_cal_rows},
                 400);

  const CmcLearner t = fit_cmc_t(data, kRct, ConformityMeasure::residual(),
                                 small_forest(50), 10, McMode::Mc, SplitRng(51));
  check_disjoint({&t.nuisance_train_rows, &t.nuisance_cal_rows, &t.mc_source_rows}, 400);
  CHECK(t.nuisance_train_rows.size() + t.nuisance_cal_rows.size() +
            t.mc_source_rows.size() ==
        400);

  const CmcLearner x = fit_cmc_x(data, kRct, ConformityMeasure::residual(),
                                 small_forest(52), 10, McMode::Mc, SplitRng(53));
  check_disjoint({&x.nuisance_train_rows, &x.nuisance_cal_rows, &x.x_regressor_rows,
                  &x.x_conformal_rows},
                 400);
  CHECK(x.x_regressor_rows.size() + x.x_conformal_rows.size() == x.mc_source_rows.size());
}

TEST_CASE("interval extraction from quantiles") {
  Eigen::VectorXd support(10), masses(10);
  for (int i = 0; i < 10; ++i) {
    support[i] = i + 1;
    masses[i] = 0.1;
  }
  const DiscreteCpd uniform(support, masses, 0.0);
  const ItePredictionInterval iv = interval(uniform, 0.2);
  REQUIRE(iv.fully_finite());
  CHECK(iv.lo.value == 1.0);
  CHECK(iv.hi.value == 9.0);

  const DiscreteCpd pm(to_vector({3.0}), to_vector({1.0}), 0.0);
  const ItePredictionInterval degenerate = interval(pm, 0.2);
  CHECK(degenerate.lo.value == 3.0);
  CHECK(degenerate.hi.value == 3.0);

  // Heavy deferred mass: the upper endpoint cannot be certified; the lower
  // endpoint is still the finite-mass quantile.
  const DiscreteCpd heavy(to_vector({0.0}), to_vector({0.5}), 0.5);
  const ItePredictionInterval unbounded = interval(heavy, 0.2);
  CHECK(unbounded.lo.is_finite());
  CHECK(unbounded.lo.value == 0.0);
  CHECK(unbounded.hi.kind == QuantileResult::Kind::UpperUnbounded);

  // Deferred mass beyond the lower tail level as well: nothing certifiable.
  const DiscreteCpd extreme(to_vector({0.0}), to_vector({0.05}), 0.95);
  const ItePredictionInterval nothing = interval(extreme, 0.2);
  CHECK(nothing.lo.kind == QuantileResult::Kind::LowerUnbounded);
  CHECK(nothing.hi.kind == QuantileResult::Kind::UpperUnbounded);

  CHECK_THROWS_AS(interval(uniform, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(interval(uniform, 0.0), std::invalid_argument);
}

TEST_CASE("interval nesting: smaller alpha contains larger alpha") {
  SplitRng rng(54);
  for (int rep = 0; rep < 200; ++rep) {
    const DiscreteCpd d = random_cpd(rng);
    const ItePredictionInterval wide = interval(d, 0.05);
    const ItePredictionInterval narrow = interval(d, 0.2);
    if (wide.lo.is_finite()) {
      REQUIRE(narrow.lo.is_finite());
      CHECK(wide.lo.value <= narrow.lo.value);
    }
    if (wide.hi.is_finite()) {
      REQUIRE(narrow.hi.is_finite());
      CHECK(wide.hi.value >= narrow.hi.value);
    }
  }
}

TEST_CASE("naive wcp interval combines per-arm bounds bonferroni style") {
  SplitRng rng(55);
  // Noiseless arms at 1 and 3: per-arm point masses, naive interval [2, 2].
  CausalDataset flat = toy_dataset(400, 0.0, 0.0, rng);
  for (int i = 0; i < 400; ++i) flat.y[i] = flat.w[i] == 1 ? 3.0 : 1.0;
  const CctLearner point = fit_cct(flat, kRct, ConformityMeasure::residual(),
                                   small_forest(56), 0.5, SplitRng(57));
  Eigen::RowVectorXd x(2);
  x << 0.5, 0.5;
  const ItePredictionInterval degenerate = naive_wcp_interval(point, x, 0.1);
  REQUIRE(degenerate.fully_finite());
  CHECK(degenerate.lo.value == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(degenerate.hi.value == doctest::Approx(2.0).epsilon(1e-12));

  // Hand combination from the arm quantiles of a real fit.
  CausalDataset data = toy_dataset(600, 1.0, 0.5, rng);
  const CctLearner learner = fit_cct(data, kRct, ConformityMeasure::residual(),
                                     small_forest(58), 0.5, SplitRng(59));
  const double alpha = 0.2;
  const DiscreteCpd cpd0 = cct_control_cpd(learner, x);
  const DiscreteCpd cpd1 = cct_treated_cpd(learner, x);
  const double l0 = quantile(cpd0, alpha / 4, DeferredTail::High).value;
  const double u0 = quantile(cpd0, 1 - alpha / 4, DeferredTail::High).value;
  const double l1 = quantile(cpd1, alpha / 4, DeferredTail::High).value;
  const double u1 = quantile(cpd1, 1 - alpha / 4, DeferredTail::High).value;
  const ItePredictionInterval iv = naive_wcp_interval(learner, x, alpha);
  CHECK(iv.lo.value == l1 - u0);
  CHECK(iv.hi.value == u1 - l0);

  // Statistically, bonferroni is wider than the convolution on the same fit.
  double naive_width = 0.0, cct_width = 0.0;
  SplitRng probe(60);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::RowVectorXd xt(2);
    xt << probe.uniform(), probe.uniform();
    const auto nv = naive_wcp_interval(learner, xt, 0.1);
    const auto cv = interval(cct_predict(learner, xt), 0.1);
    REQUIRE(nv.fully_finite());
    REQUIRE(cv.fully_finite());
    naive_width += nv.hi.value - nv.lo.value;
    cct_width += cv.hi.value - cv.lo.value;
  }
  CHECK(naive_width >= cct_width);
}

TEST_CASE("naive bonferroni hand example") {
  // [l0,u0] = [1,2], [l1,u1] = [5,7] at per-arm miscoverage alpha/2
  // combine to [l1 - u0, u1 - l0] = [3, 6].
  const double l0 = 1, u0 = 2, l1 = 5, u1 = 7;
  CHECK(l1 - u0 == 3.0);
  CHECK(u1 - l0 == 6.0);
}

TEST_CASE("cps oracle is calibrated and degenerate when the ite is constant") {
  SplitRng rng(61);
  // Deterministic tau: ite == 3 everywhere, knn recovers it exactly.
  Eigen::MatrixXd X(300, 2);
  for (int i = 0; i < 300; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
  }
  const Eigen::VectorXd ite = Eigen::VectorXd::Constant(300, 3.0);
  const SplitCps oracle = fit_cps_oracle(X, ite, ConformityMeasure::residual(),
                                         RegressorSpec::knn(5), SplitRng(62));
  Eigen::RowVectorXd x(2);
  x << 0.5, 0.5;
  const ItePredictionInterval iv = interval(predict_cpd(oracle, x), 0.1);
  REQUIRE(iv.fully_finite());
  CHECK(iv.lo.value == 3.0);
  CHECK(iv.hi.value == 3.0);

  CHECK_THROWS_AS(fit_cps_oracle(X, Eigen::VectorXd(), ConformityMeasure::residual(),
                                 RegressorSpec::knn(5), SplitRng(63)),
                  std::invalid_argument);
}

TEST_CASE("cps oracle coverage band on setup b over 20 seeds") {
  double total_cov = 0.0;
  std::vector<double> pits;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DgpSpec spec;
    spec.family = DgpFamily::NieB;
    spec.n = 2000;
    spec.seed = 500 + seed;
    const SyntheticDataset data = generate(spec);
    const int n_train = 1000;
    const SplitCps oracle =
        fit_cps_oracle(data.X.topRows(n_train), data.ite_true.head(n_train),
                       ConformityMeasure::residual(), RegressorSpec::knn(15),
                       SplitRng(600 + seed));
    int hits = 0;
    SplitRng phi(700 + seed);
    for (int i = n_train; i < 2000; ++i) {
      const DiscreteCpd cpd = predict_cpd(oracle, data.X.row(i));
      const ItePredictionInterval iv = interval(cpd, 0.1);
      const bool lo_ok = !iv.lo.is_finite() || iv.lo.value <= data.ite_true[i];
      const bool hi_ok = !iv.hi.is_finite() || data.ite_true[i] <= iv.hi.value;
      hits += (lo_ok && hi_ok) ? 1 : 0;
      pits.push_back(cdf(cpd, data.ite_true[i], phi.uniform()));
    }
    total_cov += hits / 1000.0;
  }
  const double mean_cov = total_cov / 20.0;
  CHECK(mean_cov >= 0.88);
  CHECK(mean_cov <= 0.93);
  CHECK(ks_uniform(pits) < 0.03);
}
