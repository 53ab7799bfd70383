#pragma once

// Upper-tail probabilities of the reference distributions used by the
// significance tests.

#include <cmath>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "ppp/error.hpp"

namespace ppp::dist {

// P(F > f) for F ~ F(d1, d2).
inline double f_upper_tail(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw DomainError("F distribution needs positive degrees of freedom");
  if (std::isnan(f)) throw DomainError("F statistic is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<double>(d1, d2), f));
}

// P(|T| >= |t|) for T ~ Student t(df).
inline double t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DomainError("t distribution needs positive degrees of freedom");
  if (std::isnan(t)) throw DomainError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), std::abs(t)));
  return p > 1.0 ? 1.0 : p;
}

// P(|Z| >= |z|) for a standard normal Z.
inline double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace ppp::dist
