#include "ccml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccml {

namespace {

bool covers(const ItePredictionInterval& iv, double ite) {
  const bool lo_ok = !iv.lo.is_finite() || iv.lo.value <= ite;
  const bool hi_ok = !iv.hi.is_finite() || ite <= iv.hi.value;
  return lo_ok && hi_ok;
}

}  // namespace

double coverage(const std::vector<ItePredictionInterval>& intervals,
                const Eigen::VectorXd& ite_true) {
  if (static_cast<Eigen::Index>(intervals.size()) != ite_true.size()) {
    throw std::invalid_argument("coverage: length mismatch");
  }
  if (intervals.empty()) throw std::invalid_argument("coverage: empty input");
  int hits = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    hits += covers(intervals[i], ite_true[static_cast<Eigen::Index>(i)]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(intervals.size());
}

Efficiency efficiency(const std::vector<ItePredictionInterval>& intervals) {
  if (intervals.empty()) throw std::invalid_argument("efficiency: empty input");
  double width_sum = 0.0;
  int finite = 0;
  int unbounded = 0;
  for (const auto& iv : intervals) {
    if (iv.fully_finite()) {
      width_sum += iv.hi.value - iv.lo.value;
      ++finite;
    } else {
      ++unbounded;
    }
  }
  Efficiency out;
  out.frac_unbounded = static_cast<double>(unbounded) / static_cast<double>(intervals.size());
  if (finite > 0) out.mean_finite_width = width_sum / finite;
  return out;
}

std::vector<double> pit_values(const std::vector<DiscreteCpd>& cpds,
                               const Eigen::VectorXd& ite_true, SplitRng rng) {
  if (static_cast<Eigen::Index>(cpds.size()) != ite_true.size()) {
    throw std::invalid_argument("pit_values: length mismatch");
  }
  std::vector<double> out(cpds.size());
  for (std::size_t i = 0; i < cpds.size(); ++i) {
    out[i] = cdf(cpds[i], ite_true[static_cast<Eigen::Index>(i)], rng.uniform());
  }
  return out;
}

double ks_uniform(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("ks_uniform: empty input");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const double step_lo = static_cast<double>(i) / n;
    const double step_hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(step_hi - v, v - step_lo));
  }
  return d;
}

double cpd_median(const DiscreteCpd& cpd) {
  const QuantileResult q = quantile(cpd, 0.5, DeferredTail::High);
  return q.is_finite() ? q.value : cpd.support()[cpd.size() - 1];
}

double rmse_cate(const std::vector<DiscreteCpd>& cpds, const Eigen::VectorXd& tau_true) {
  if (static_cast<Eigen::Index>(cpds.size()) != tau_true.size()) {
    throw std::invalid_argument("rmse_cate: length mismatch");
  }
  if (cpds.empty()) throw std::invalid_argument("rmse_cate: empty input");
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < cpds.size(); ++i) {
    const double err = cpd_median(cpds[i]) - tau_true[static_cast<Eigen::Index>(i)];
    sum_sq += err * err;
  }
  return std::sqrt(sum_sq / static_cast<double>(cpds.size()));
}

double crps(const DiscreteCpd& cpd, double y) {
  // Piecewise-constant renormalized CDF; integrate (F - 1{t >= y})^2 exactly
  // over the union of support intervals and the segment reaching y.
  const double total = cpd.finite_mass();
  const Eigen::Index n = cpd.size();
  std::vector<double> knots(cpd.support().data(), cpd.support().data() + n);
  knots.push_back(y);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double a = knots[k];
    const double b = knots[k + 1];
    // F on (a, b): cum at a under the renormalized finite distribution.
    const double f = cdf(cpd, a, 1.0) - cpd.deferred_mass() * 1.0;
    const double fr = f / total;
    const double h = (a >= y) ? 1.0 : 0.0;
    acc += (fr - h) * (fr - h) * (b - a);
  }
  return acc;
}

}  // namespace ccml
