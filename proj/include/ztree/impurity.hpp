#pragma once

#include <span>

#include "ztree/error.hpp"
#include "ztree/schema.hpp"

namespace ztree {

/// 1 - sum p_i^2
inline double gini(std::span<const double> probs) {
  double sq = 0.0;
  for (double p : probs) sq += p * p;
  return 1.0 - sq;
}

inline double gini(const probability_distribution& dist) { return gini(dist.probabilities()); }

/// Harmonic mean of two branch impurities; H(0, 0) is taken as 0.
inline double harmonic_combine(double g1, double g2) {
  const double s = g1 + g2;
  if (s <= 0.0) return 0.0;
  return 2.0 * g1 * g2 / s;
}

/// Zero-shot split quality, lower is better.
inline double split_score(const probability_distribution& left, const probability_distribution& right) {
  return harmonic_combine(gini(left), gini(right));
}

/// Instance-weighted average used by the data-driven baseline.
inline double weighted_combine(double g1, double n1, double g2, double n2) {
  const double n = n1 + n2;
  if (!(n > 0.0)) throw error(error_kind::zero_total_count, "weighted_combine needs a positive total count");
  return (n1 * g1 + n2 * g2) / n;
}

}  // namespace ztree
