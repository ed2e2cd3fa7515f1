#pragma once

#include <cmath>

#include "deconv/stats_core.hpp"

namespace deconv {

/// Random-walk proposal scale tuned in batches during burn-in toward an
/// acceptance rate inside [lo, hi], then frozen.
struct AdaptiveScale {
  double scale = 1.0;
  long batch_accepted = 0;
  long batch_proposed = 0;
  long accepted = 0;
  long proposed = 0;

  void record(bool ok) {
    ++batch_proposed;
    ++proposed;
    if (ok) {
      ++batch_accepted;
      ++accepted;
    }
  }

  void adapt(double lo = 0.25, double hi = 0.45) {
    if (batch_proposed == 0) return;
    const double rate = static_cast<double>(batch_accepted) / static_cast<double>(batch_proposed);
    if (rate < lo) scale *= 0.75;
    else if (rate > hi) scale *= 1.33;
    batch_accepted = batch_proposed = 0;
  }

  void reset_counts() { batch_accepted = batch_proposed = accepted = proposed = 0; }

  double acceptance() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

inline bool mh_accept(double log_ratio, RngStream& rng) {
  if (log_ratio >= 0.0) return true;
  if (!std::isfinite(log_ratio)) return false;
  return std::log(rng.uniform()) < log_ratio;
}

/// log(Phi(b) - Phi(a)) for a < b, stable in both tails.
inline double log_normal_interval(double a, double b) {
  if (b <= 0.0) {
    const double lb = log_normal_cdf(b);
    return lb + std::log1p(-std::exp(log_normal_cdf(a) - lb));
  }
  if (a >= 0.0) {
    const double la = log_normal_cdf(-a);
    return la + std::log1p(-std::exp(log_normal_cdf(-b) - la));
  }
  return std::log1p(-normal_cdf(a) - normal_cdf(-b));
}

/// Log normaliser of a truncated normal proposal centred at `centre`.
inline double truncated_log_mass(double centre, double sd, double lo, double hi) {
  if (!(sd > 0.0)) return 0.0;
  return log_normal_interval((lo - centre) / sd, (hi - centre) / sd);
}

}  // namespace deconv
