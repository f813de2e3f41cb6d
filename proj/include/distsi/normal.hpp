#pragma once

namespace distsi {

/// Standard normal CDF, accurate to well below 1e-12 absolute.
double norm_cdf(double z);

/// Standard normal quantile (inverse CDF), Wichura's AS 241 (PPND16).
/// Accurate to about 1e-15 relative over p in (0, 1).
double norm_quantile(double p);

/// Two-sided p-value for a standard normal z statistic.
double two_sided_pvalue(double z);

}  // namespace distsi
