#pragma once

#include <Eigen/Dense>
#include <optional>

namespace ccml {

// Placement of the deferred (test-point) mass when inverting the CDF. The
// deferred mass has no fixed location on the support, so tail quantiles must
// commit to a convention: Low stacks it below all support values, High above.
enum class DeferredTail { Low, High };

struct QuantileResult {
  enum class Kind { Finite, LowerUnbounded, UpperUnbounded };

  Kind kind = Kind::Finite;
  double value = 0.0;  // meaningful only when kind == Finite

  static QuantileResult finite(double v) { return {Kind::Finite, v}; }
  static QuantileResult lower_unbounded() { return {Kind::LowerUnbounded, 0.0}; }
  static QuantileResult upper_unbounded() { return {Kind::UpperUnbounded, 0.0}; }

  bool is_finite() const { return kind == Kind::Finite; }
};

// Discrete conformal predictive distribution: a finite ascending support with
// non-negative masses plus a deferred mass u for the test point whose
// conformity score is unknown. Any CDF evaluation picks up phi * u.
//
// Invariants (checked at construction): support non-decreasing, masses >= 0,
// u in [0, 1], sum(masses) + u == 1 within 1e-9. Instances are immutable and
// safe to share across threads.
class DiscreteCpd {
 public:
  DiscreteCpd(Eigen::VectorXd support, Eigen::VectorXd masses,
              double deferred_mass, bool approximate = false);

  Eigen::Index size() const { return support_.size(); }
  const Eigen::VectorXd& support() const { return support_; }
  const Eigen::VectorXd& masses() const { return masses_; }
  // Cumulative finite mass; cum()[i] = sum of masses 0..i.
  const Eigen::VectorXd& cum() const { return cum_; }
  double deferred_mass() const { return deferred_; }
  double finite_mass() const { return cum_[cum_.size() - 1]; }
  // True when the distribution was thinned under a convolution budget.
  bool approximate() const { return approx_; }

 private:
  Eigen::VectorXd support_;
  Eigen::VectorXd masses_;
  Eigen::VectorXd cum_;
  double deferred_;
  bool approx_;
};

// Split-transducer CDF: sum of masses strictly below y, plus phi times the
// mass exactly at y, plus phi times the deferred mass. Total function of y;
// monotone non-decreasing in both y and phi.
double cdf(const DiscreteCpd& dist, double y, double phi);

// Smallest support value whose cumulative mass (deferred mass placed per the
// tail convention) reaches the level. Returns LowerUnbounded/UpperUnbounded
// when the level is absorbed entirely by deferred mass in the requested tail.
// Throws std::invalid_argument unless 0 < level < 1.
QuantileResult quantile(const DiscreteCpd& dist, double level, DeferredTail tail);

// Reflection about 0; an involution. Deferred mass is unchanged.
DiscreteCpd negate(const DiscreteCpd& dist);

// Difference convolution of two independent CPDs: support is the multiset of
// pairwise differences {q1_i - q0_j} with product masses (equal differences
// merged), deferred mass 1 - (1 - u1)(1 - u0). With max_pairs set, operands
// whose pair count exceeds the budget are first thinned to ~sqrt(budget)
// equal-mass points and the result is flagged approximate().
DiscreteCpd convolve_difference(const DiscreteCpd& treated,
                                const DiscreteCpd& control,
                                std::optional<Eigen::Index> max_pairs = std::nullopt);

// CDF of convolve_difference(treated, control) evaluated lazily as the double
// sum, without materializing the pairwise support. O(N1 log N0) per call;
// agrees with the materialized route up to float summation order.
double convolution_cdf(const DiscreteCpd& treated, const DiscreteCpd& control,
                       double y, double phi);

// Quantile of convolve_difference(treated, control) without materializing it:
// value bisection on the lazy CDF, snapped to an exact pairwise difference.
// Same conventions as quantile(); equivalent to it up to ~1e-11 of cumulative
// mass at a jump (the two routes accumulate masses in different orders).
QuantileResult convolution_quantile(const DiscreteCpd& treated,
                                    const DiscreteCpd& control, double level,
                                    DeferredTail tail);

// Inverse draw from the finite support renormalized to total mass 1 (the
// deferred mass is excluded; callers re-draw into the finite support by
// construction). u in [0, 1].
double sample_finite(const DiscreteCpd& dist, double u);

}  // namespace ccml
