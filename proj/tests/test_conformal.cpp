#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ccml/conformal.hpp"
#include "ccml/eval.hpp"
#include "ccml/learners.hpp"
#include "ccml/rng.hpp"
#include "test_util.hpp"

using namespace ccml;
using ccml::testing::to_vector;

namespace {

// Constant-output model backed by a 1-NN on identical targets.
std::shared_ptr<RegressionModel> constant_model(double value, Eigen::Index d) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, d);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(1, value);
  return std::make_shared<KnnRegressor>(X, y, 1);
}

Eigen::MatrixXd column(std::initializer_list<double> values) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) X(i++, 0) = v;
  return X;
}

}  // namespace

TEST_CASE("residual scores are signed and sorted") {
  const Eigen::MatrixXd X_train = column({0.0, 1.0, 2.0, 3.0});
  const Eigen::VectorXd y_train = Eigen::VectorXd::Zero(4);
  const Eigen::MatrixXd X_cal = column({0.5, 1.5, 2.5});
  const Eigen::VectorXd y_cal = to_vector({1.0, -1.0, 0.0});
  const SplitCps cps = fit_scps(X_train, y_train, X_cal, y_cal,
                                ConformityMeasure::residual(),
                                RegressorSpec::knn(4), SplitRng(1));
  REQUIRE(cps.n_cal() == 3);
  CHECK(cps.cal_scores[0] == -1.0);
  CHECK(cps.cal_scores[1] == 0.0);
  CHECK(cps.cal_scores[2] == 1.0);
  // Covariates move with their scores.
  CHECK(cps.cal_covariates(0, 0) == 1.5);
  CHECK(cps.cal_covariates(2, 0) == 0.5);
}

TEST_CASE("normalized scores divide by the difficulty estimate") {
  const Eigen::MatrixXd X_cal = column({0.5, 1.5, 2.5});
  const Eigen::VectorXd y_cal = to_vector({-1.0, 0.0, 1.0});
  const SplitCps cps =
      make_split_cps(constant_model(0.0, 1), constant_model(2.0, 1), X_cal, y_cal,
                     ConformityMeasure::normalized());
  CHECK(cps.cal_scores[0] == -0.5);
  CHECK(cps.cal_scores[1] == 0.0);
  CHECK(cps.cal_scores[2] == 0.5);
}

TEST_CASE("a perfect point model yields all-zero scores") {
  const Eigen::MatrixXd X_train = column({0.0, 1.0, 2.0, 3.0});
  Eigen::VectorXd y_train = X_train.col(0);
  const Eigen::MatrixXd X_cal = X_train;
  const SplitCps cps = fit_scps(X_train, y_train, X_cal, y_train,
                                ConformityMeasure::residual(),
                                RegressorSpec::knn(1), SplitRng(2));
  for (Eigen::Index i = 0; i < cps.n_cal(); ++i) CHECK(cps.cal_scores[i] == 0.0);
}

TEST_CASE("fit_scps rejects empty splits") {
  const Eigen::MatrixXd X = column({1.0, 2.0});
  const Eigen::VectorXd y = to_vector({1.0, 2.0});
  CHECK_THROWS_AS(fit_scps(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), X, y,
                           ConformityMeasure::residual(), RegressorSpec::knn(1),
                           SplitRng(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_scps(X, y, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0),
                           ConformityMeasure::residual(), RegressorSpec::knn(1),
                           SplitRng(3)),
                  std::invalid_argument);
}

TEST_CASE("predict_cpd emits the split transducer distribution") {
  const Eigen::MatrixXd X_cal = column({1.0, 2.0, 3.0});
  const Eigen::VectorXd y_cal = to_vector({4.0, 5.0, 6.0});
  const SplitCps cps = make_split_cps(constant_model(5.0, 1), nullptr, X_cal, y_cal,
                                      ConformityMeasure::residual());
  Eigen::RowVectorXd x(1);
  x << 10.0;

  const DiscreteCpd unweighted = predict_cpd(cps, x);
  REQUIRE(unweighted.size() == 3);
  CHECK(unweighted.support()[0] == 4.0);
  CHECK(unweighted.support()[1] == 5.0);
  CHECK(unweighted.support()[2] == 6.0);
  for (int i = 0; i < 3; ++i) CHECK(unweighted.masses()[i] == 0.25);
  CHECK(unweighted.deferred_mass() == 0.25);

  // w(x_i) = {1, 1, 2} on the calibration rows, w(x*) = 4.
  const WeightFn lookup = [](const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    if (row[0] == 3.0) return 2.0;
    if (row[0] == 10.0) return 4.0;
    return 1.0;
  };
  const DiscreteCpd weighted = predict_cpd(cps, x, &lookup);
  CHECK(weighted.masses()[0] == 0.125);
  CHECK(weighted.masses()[1] == 0.125);
  CHECK(weighted.masses()[2] == 0.25);
  CHECK(weighted.deferred_mass() == 0.5);
}

TEST_CASE("constant weight functions reproduce the unweighted output bitwise") {
  SplitRng rng(5);
  SplitRng data_rng = rng.stream("data");
  for (int rep = 0; rep < 100; ++rep) {
    const int n_train = 12 + data_rng.uniform_int(20);
    const int n_cal = 5 + data_rng.uniform_int(20);
    Eigen::MatrixXd Xt(n_train, 2), Xc(n_cal, 2);
    Eigen::VectorXd yt(n_train), yc(n_cal);
    for (int i = 0; i < n_train; ++i) {
      Xt(i, 0) = data_rng.uniform();
      Xt(i, 1) = data_rng.uniform();
      yt[i] = Xt(i, 0) + 0.3 * data_rng.normal();
    }
    for (int i = 0; i < n_cal; ++i) {
      Xc(i, 0) = data_rng.uniform();
      Xc(i, 1) = data_rng.uniform();
      yc[i] = Xc(i, 0) + 0.3 * data_rng.normal();
    }
    const bool normalized = rep % 2 == 0;
    ForestParams params;
    params.n_trees = 10;
    const SplitCps cps = fit_scps(
        Xt, yt, Xc, yc,
        normalized ? ConformityMeasure::normalized() : ConformityMeasure::residual(),
        RegressorSpec::random_forest(params, static_cast<std::uint64_t>(rep)),
        SplitRng(static_cast<std::uint64_t>(rep)));

    const double c = 0.017 + 3.0 * data_rng.uniform();
    const WeightFn constant = [c](const Eigen::Ref<const Eigen::RowVectorXd>&) {
      return c;
    };
    Eigen::RowVectorXd x(2);
    x << data_rng.uniform(), data_rng.uniform();
    const DiscreteCpd a = predict_cpd(cps, x);
    const DiscreteCpd b = predict_cpd(cps, x, &constant);
    REQUIRE(a.size() == b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      CHECK(a.support()[i] == b.support()[i]);
      CHECK(a.masses()[i] == b.masses()[i]);
    }
    CHECK(a.deferred_mass() == b.deferred_mass());
  }
}

TEST_CASE("non-positive weights are a domain error") {
  const Eigen::MatrixXd X_cal = column({1.0, 2.0});
  const Eigen::VectorXd y_cal = to_vector({1.0, 2.0});
  const SplitCps cps = make_split_cps(constant_model(0.0, 1), nullptr, X_cal, y_cal,
                                      ConformityMeasure::residual());
  Eigen::RowVectorXd x(1);
  x << 0.5;
  const WeightFn bad = [](const Eigen::Ref<const Eigen::RowVectorXd>&) { return 0.0; };
  CHECK_THROWS_AS(predict_cpd(cps, x, &bad), std::domain_error);
}

TEST_CASE("tied support values merge into one mass point") {
  const Eigen::MatrixXd X_cal = column({1.0, 2.0, 3.0, 4.0});
  const Eigen::VectorXd y_cal = to_vector({1.0, 1.0, 2.0, 3.0});
  const SplitCps cps = make_split_cps(constant_model(0.0, 1), nullptr, X_cal, y_cal,
                                      ConformityMeasure::residual());
  Eigen::RowVectorXd x(1);
  x << 0.0;
  const DiscreteCpd cpd = predict_cpd(cps, x);
  REQUIRE(cpd.size() == 3);
  CHECK(cpd.support()[0] == 1.0);
  CHECK(cpd.masses()[0] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("split cps is probabilistically calibrated on exchangeable data") {
  // y = sin(3 x0) + x1 + 0.5 N(0,1); KNN point model keeps it fast.
  SplitRng rng(6);
  SplitRng data_rng = rng.stream("data");
  const auto draw = [&](Eigen::Index n, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
    X.resize(n, 2);
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 0) = data_rng.uniform();
      X(i, 1) = data_rng.uniform();
      y[i] = std::sin(3.0 * X(i, 0)) + X(i, 1) + 0.5 * data_rng.normal();
    }
  };
  // The calibration side contributes its own ~1/sqrt(n_cal) wobble to the
  // PIT empirical CDF, so it must not be the bottleneck.
  Eigen::MatrixXd Xt, Xc, Xtest;
  Eigen::VectorXd yt, yc, ytest;
  draw(2000, Xt, yt);
  draw(6000, Xc, yc);
  draw(6000, Xtest, ytest);
  const SplitCps cps = fit_scps(Xt, yt, Xc, yc, ConformityMeasure::normalized(),
                                RegressorSpec::knn(25), SplitRng(7));
  SplitRng phi_rng = rng.stream("phi");
  std::vector<double> pits;
  pits.reserve(5000);
  for (Eigen::Index i = 0; i < Xtest.rows(); ++i) {
    pits.push_back(cdf(predict_cpd(cps, Xtest.row(i)), ytest[i], phi_rng.uniform()));
  }
  CHECK(ks_uniform(pits) < 0.03);
}

TEST_CASE("split cps intervals reach marginal coverage") {
  SplitRng rng(8);
  SplitRng data_rng = rng.stream("data");
  const double alpha = 0.1;
  int hits = 0, total = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::MatrixXd Xt(150, 1), Xc(150, 1), Xtest(20, 1);
    Eigen::VectorXd yt(150), yc(150), ytest(20);
    const auto fill = [&](Eigen::MatrixXd& X, Eigen::VectorXd& y) {
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        X(i, 0) = data_rng.uniform();
        y[i] = 2.0 * X(i, 0) + 0.3 * data_rng.normal();
      }
    };
    fill(Xt, yt);
    fill(Xc, yc);
    fill(Xtest, ytest);
    const SplitCps cps = fit_scps(Xt, yt, Xc, yc, ConformityMeasure::residual(),
                                  RegressorSpec::knn(10),
                                  SplitRng(static_cast<std::uint64_t>(rep)));
    for (Eigen::Index i = 0; i < Xtest.rows(); ++i) {
      const ItePredictionInterval iv = interval(predict_cpd(cps, Xtest.row(i)), alpha);
      const bool lo_ok = !iv.lo.is_finite() || iv.lo.value <= ytest[i];
      const bool hi_ok = !iv.hi.is_finite() || ytest[i] <= iv.hi.value;
      hits += (lo_ok && hi_ok) ? 1 : 0;
      ++total;
    }
  }
  CHECK(static_cast<double>(hits) / total >= 1.0 - alpha - 0.02);
}
