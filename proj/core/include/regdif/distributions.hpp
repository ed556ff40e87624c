#pragma once

namespace regdif {

/// P(X <= x) for X ~ chi^2_df.
double chi_square_cdf(double x, double df);
/// 1 - chi_square_cdf, computed without cancellation.
double chi_square_sf(double x, double df);
/// Standard normal quantile Phi^{-1}(p), 0 < p < 1.
double normal_quantile(double p);
double normal_cdf(double x);

}  // namespace regdif
