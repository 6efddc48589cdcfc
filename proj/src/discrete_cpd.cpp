#include "ccml/discrete_cpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ccml/cpd_json.hpp"

namespace ccml {

namespace {

// Slack for cumulative-mass comparisons: masses like 1/(n+1) accumulate
// rounding, and a level that is mathematically reached must not slip to the
// next support point.
constexpr double kLevelEps = 1e-12;
constexpr double kMassTol = 1e-9;

}  // namespace

DiscreteCpd::DiscreteCpd(Eigen::VectorXd support, Eigen::VectorXd masses,
                         double deferred_mass, bool approximate)
    : support_(std::move(support)),
      masses_(std::move(masses)),
      deferred_(deferred_mass),
      approx_(approximate) {
  if (support_.size() == 0) {
    throw std::invalid_argument("DiscreteCpd: empty support");
  }
  if (support_.size() != masses_.size()) {
    throw std::invalid_argument("DiscreteCpd: support/masses size mismatch");
  }
  if (deferred_ < -kMassTol || deferred_ > 1.0 + kMassTol) {
    throw std::invalid_argument("DiscreteCpd: deferred mass outside [0,1]");
  }
  deferred_ = std::clamp(deferred_, 0.0, 1.0);
  cum_.resize(masses_.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < masses_.size(); ++i) {
    if (masses_[i] < -kMassTol) {
      throw std::invalid_argument("DiscreteCpd: negative mass");
    }
    if (masses_[i] < 0.0) masses_[i] = 0.0;  // rounding dust; keeps cum monotone
    if (i > 0 && support_[i] < support_[i - 1]) {
      throw std::invalid_argument("DiscreteCpd: support not non-decreasing");
    }
    acc += masses_[i];
    cum_[i] = acc;
  }
  if (std::abs(acc + deferred_ - 1.0) > kMassTol) {
    throw std::invalid_argument("DiscreteCpd: masses + deferred != 1");
  }
}

double cdf(const DiscreteCpd& dist, double y, double phi) {
  const auto& s = dist.support();
  const double* begin = s.data();
  const double* end = s.data() + s.size();
  const auto lo = std::lower_bound(begin, end, y) - begin;  // first >= y
  const auto hi = std::upper_bound(begin, end, y) - begin;  // first > y
  const double below = lo > 0 ? dist.cum()[lo - 1] : 0.0;
  const double at = (hi > lo) ? dist.cum()[hi - 1] - below : 0.0;
  return below + phi * at + phi * dist.deferred_mass();
}

QuantileResult quantile(const DiscreteCpd& dist, double level,
                        DeferredTail tail) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("quantile: level must lie in (0,1)");
  }
  const Eigen::Index n = dist.size();
  if (tail == DeferredTail::Low) {
    // Deferred mass sits below all support; the level can be absorbed there.
    const double target = level - dist.deferred_mass();
    if (target <= kLevelEps && dist.deferred_mass() > 0.0) {
      return QuantileResult::lower_unbounded();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist.cum()[i] >= target - kLevelEps) {
        return QuantileResult::finite(dist.support()[i]);
      }
    }
    return QuantileResult::finite(dist.support()[n - 1]);
  }
  // DeferredTail::High: deferred mass above all support.
  if (dist.finite_mass() < level - kLevelEps) {
    return QuantileResult::upper_unbounded();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dist.cum()[i] >= level - kLevelEps) {
      return QuantileResult::finite(dist.support()[i]);
    }
  }
  return QuantileResult::finite(dist.support()[n - 1]);
}

DiscreteCpd negate(const DiscreteCpd& dist) {
  return DiscreteCpd(-dist.support().reverse(), dist.masses().reverse(),
                     dist.deferred_mass(), dist.approximate());
}

namespace {

// Collapses a CPD onto at most k equal-mass buckets of its finite support.
// Bucket mass is the exact sum of member masses, so total mass is preserved;
// the representative point is where the bucket's mass midpoint falls.
DiscreteCpd thin_to(const DiscreteCpd& dist, Eigen::Index k) {
  const Eigen::Index n = dist.size();
  if (n <= k) return dist;
  const double total = dist.finite_mass();
  std::vector<double> support, masses;
  support.reserve(static_cast<std::size_t>(k));
  masses.reserve(static_cast<std::size_t>(k));
  Eigen::Index i = 0;
  for (Eigen::Index b = 0; b < k && i < n; ++b) {
    const bool last = b + 1 == k;
    const double upper = total * static_cast<double>(b + 1) / static_cast<double>(k);
    const double mid = total * (static_cast<double>(b) + 0.5) / static_cast<double>(k);
    double mass = 0.0;
    double rep = 0.0;
    double rep_last = 0.0;
    bool any = false;
    bool rep_set = false;
    while (i < n && (last || dist.cum()[i] <= upper + kLevelEps)) {
      mass += dist.masses()[i];
      if (!rep_set && dist.cum()[i] >= mid) {
        rep = dist.support()[i];
        rep_set = true;
      }
      rep_last = dist.support()[i];
      any = true;
      ++i;
    }
    if (any) {
      support.push_back(rep_set ? rep : rep_last);
      masses.push_back(mass);
    }
  }
  const auto m = static_cast<Eigen::Index>(support.size());
  return DiscreteCpd(Eigen::Map<const Eigen::VectorXd>(support.data(), m),
                     Eigen::Map<const Eigen::VectorXd>(masses.data(), m),
                     dist.deferred_mass(), true);
}

}  // namespace

DiscreteCpd convolve_difference(const DiscreteCpd& treated,
                                const DiscreteCpd& control,
                                std::optional<Eigen::Index> max_pairs) {
  const DiscreteCpd* q1 = &treated;
  const DiscreteCpd* q0 = &control;
  std::optional<DiscreteCpd> t1, t0;
  if (max_pairs && treated.size() * control.size() > *max_pairs) {
    const auto k = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::sqrt(static_cast<double>(*max_pairs))));
    t1 = thin_to(treated, k);
    t0 = thin_to(control, k);
    q1 = &*t1;
    q0 = &*t0;
  }

  const Eigen::Index n1 = q1->size();
  const Eigen::Index n0 = q0->size();
  // Reused across calls; the pairwise buffer is the hot allocation.
  thread_local std::vector<std::pair<double, double>> pairs;
  pairs.clear();
  pairs.reserve(static_cast<std::size_t>(n1 * n0));
  for (Eigen::Index i = 0; i < n1; ++i) {
    const double qi = q1->support()[i];
    const double pi = q1->masses()[i];
    for (Eigen::Index j = 0; j < n0; ++j) {
      pairs.emplace_back(qi - q0->support()[j], pi * q0->masses()[j]);
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Merge equal differences; the CDF is unchanged and support growth bounded.
  Eigen::VectorXd support(static_cast<Eigen::Index>(pairs.size()));
  Eigen::VectorXd masses(static_cast<Eigen::Index>(pairs.size()));
  Eigen::Index out = -1;
  for (const auto& [v, m] : pairs) {
    if (out >= 0 && support[out] == v) {
      masses[out] += m;
    } else {
      ++out;
      support[out] = v;
      masses[out] = m;
    }
  }
  const double deferred =
      1.0 - (1.0 - q1->deferred_mass()) * (1.0 - q0->deferred_mass());
  return DiscreteCpd(support.head(out + 1), masses.head(out + 1), deferred,
                     q1->approximate() || q0->approximate());
}

namespace {

// The rounded difference q1_i - q0_j is weakly decreasing in j, so the pair
// sets {j : fl(q1_i - q0_j) <relation> y} are contiguous and binary-searchable
// on the rounded value itself. Comparing rounded differences keeps the lazy
// routes pair-for-pair identical to the materialized convolution.
Eigen::Index first_j_diff_le(const DiscreteCpd& q0, double qi, double y) {
  const double* begin = q0.support().data();
  const double* end = begin + q0.size();
  return std::partition_point(begin, end,
                              [&](double q0j) { return qi - q0j > y; }) -
         begin;
}

Eigen::Index first_j_diff_lt(const DiscreteCpd& q0, double qi, double y) {
  const double* begin = q0.support().data();
  const double* end = begin + q0.size();
  return std::partition_point(begin, end,
                              [&](double q0j) { return qi - q0j >= y; }) -
         begin;
}

}  // namespace

double convolution_cdf(const DiscreteCpd& treated, const DiscreteCpd& control,
                       double y, double phi) {
  const double total0 = control.finite_mass();
  double less = 0.0;
  double at = 0.0;
  for (Eigen::Index i = 0; i < treated.size(); ++i) {
    const double qi = treated.support()[i];
    const auto j_lt = first_j_diff_lt(control, qi, y);
    const auto j_le = first_j_diff_le(control, qi, y);
    const double cum_lt = j_lt > 0 ? control.cum()[j_lt - 1] : 0.0;
    const double cum_le = j_le > 0 ? control.cum()[j_le - 1] : 0.0;
    less += treated.masses()[i] * (total0 - cum_lt);
    at += treated.masses()[i] * (cum_lt - cum_le);
  }
  const double deferred =
      1.0 - (1.0 - treated.deferred_mass()) * (1.0 - control.deferred_mass());
  return less + phi * at + phi * deferred;
}

namespace {

// Finite mass of pairs whose rounded difference is <= y.
double convolution_mass_le(const DiscreteCpd& q1, const DiscreteCpd& q0, double y) {
  const double total0 = q0.finite_mass();
  double mass = 0.0;
  for (Eigen::Index i = 0; i < q1.size(); ++i) {
    const auto j = first_j_diff_le(q0, q1.support()[i], y);
    const double below = j > 0 ? q0.cum()[j - 1] : 0.0;
    mass += q1.masses()[i] * (total0 - below);
  }
  return mass;
}

// Smallest rounded pairwise difference in (lo, hi]; bitwise identical to the
// value the materialized convolution would hold. Requires one to exist.
double smallest_difference_above(const DiscreteCpd& q1, const DiscreteCpd& q0,
                                 double lo, double hi) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < q1.size(); ++i) {
    const double qi = q1.support()[i];
    const auto j = first_j_diff_le(q0, qi, lo);  // first rounded diff <= lo
    if (j > 0) {
      const double diff = qi - q0.support()[j - 1];
      if (diff > lo && diff <= hi && diff < best) best = diff;
    }
  }
  return best;
}

}  // namespace

QuantileResult convolution_quantile(const DiscreteCpd& treated,
                                    const DiscreteCpd& control, double level,
                                    DeferredTail tail) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("convolution_quantile: level must lie in (0,1)");
  }
  const double deferred =
      1.0 - (1.0 - treated.deferred_mass()) * (1.0 - control.deferred_mass());
  const double total =
      treated.finite_mass() * control.finite_mass();
  double target = level;
  if (tail == DeferredTail::Low) {
    target = level - deferred;
    if (target <= kLevelEps && deferred > 0.0) {
      return QuantileResult::lower_unbounded();
    }
  } else if (total < level - kLevelEps) {
    return QuantileResult::upper_unbounded();
  }
  target -= kLevelEps;

  const Eigen::Index n1 = treated.size();
  const Eigen::Index n0 = control.size();
  double lo = treated.support()[0] - control.support()[n0 - 1];
  double hi = treated.support()[n1 - 1] - control.support()[0];
  if (convolution_mass_le(treated, control, lo) >= target) {
    return QuantileResult::finite(lo);  // everything at the single minimum
  }
  // Invariant: mass_le(lo) < target <= mass_le(hi); shrink, then snap to the
  // exact difference value inside (lo, hi].
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (convolution_mass_le(treated, control, mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const double snapped = smallest_difference_above(treated, control, lo, hi);
  return QuantileResult::finite(std::isfinite(snapped) ? snapped : hi);
}

double sample_finite(const DiscreteCpd& dist, double u) {
  const double v = u * dist.finite_mass();
  const double* begin = dist.cum().data();
  const double* end = dist.cum().data() + dist.cum().size();
  auto idx = std::lower_bound(begin, end, v) - begin;
  if (idx >= dist.size()) idx = dist.size() - 1;
  return dist.support()[idx];
}

nlohmann::json to_json(const DiscreteCpd& dist) {
  nlohmann::json j;
  j["support"] = std::vector<double>(dist.support().data(),
                                     dist.support().data() + dist.size());
  j["masses"] = std::vector<double>(dist.masses().data(),
                                    dist.masses().data() + dist.size());
  j["deferred"] = dist.deferred_mass();
  if (dist.approximate()) j["approximate"] = true;
  return j;
}

DiscreteCpd cpd_from_json(const nlohmann::json& j) {
  const auto support = j.at("support").get<std::vector<double>>();
  const auto masses = j.at("masses").get<std::vector<double>>();
  Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(
      support.data(), static_cast<Eigen::Index>(support.size()));
  Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(
      masses.data(), static_cast<Eigen::Index>(masses.size()));
  return DiscreteCpd(std::move(s), std::move(m), j.at("deferred").get<double>(),
                     j.value("approximate", false));
}

}  // namespace ccml
