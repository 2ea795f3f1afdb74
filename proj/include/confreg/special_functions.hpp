#pragma once

#include <vector>

// Special functions needed by the coverage bounds: log-gamma, (incomplete)
// Beta integrals, binomial tail probabilities, and a Beta quantile.
// Everything is plain double precision; accuracy targets are documented per
// function and enforced by the test suite against independent oracles.

namespace confreg::sf {

// Natural log of the Gamma function, Lanczos approximation (g = 7, 9 terms).
// Relative error on the log scale is ~1e-13 for positive arguments.
double ln_gamma(double x);

// ln B(r, s) = ln Gamma(r) + ln Gamma(s) - ln Gamma(r + s).
// Requires r, s > 0. Relative error <= 1e-12 for r, s <= 1e4.
double ln_beta(double r, double s);

// ln of the binomial coefficient C(n, k), 0 <= k <= n.
double ln_choose(long n, long k);

// Regularized incomplete Beta I_z(r, s), z in [0, 1], r, s > 0.
// Continued fraction (modified Lentz), with the symmetry switch at
// z > (r + 1) / (r + s + 2).
double regularized_incomplete_beta(double z, double r, double s);

// Non-regularized incomplete Beta integral int_0^z t^(r-1) (1-t)^(s-1) dt.
// incomplete_beta(1, r, s) == exp(ln_beta(r, s)). Relative error <= 1e-10.
double incomplete_beta(double z, double r, double s);

// CDF of the Beta(r, s) distribution at z (clamped to [0, 1]).
double beta_cdf(double z, double r, double s);

// Quantile of Beta(r, s): z with |beta_cdf(z) - q| <= 1e-10, by bisection.
// Requires q in [0, 1].
double beta_quantile(double q, double r, double s);

// Upper tail of the binomial: P(Bin(n, p) >= k) for k in [0, n + 1].
// k = 0 gives 1 exactly, k = n + 1 gives 0 exactly. Dispatches on n:
// direct Kahan summation for n <= 60, the regularized incomplete Beta
// identity P(Bin(n,p) >= k) = I_p(k, n - k + 1) above that. Both routes are
// exposed in detail:: so tests can cross-validate them on the same inputs.
double binomial_tail(long n, long k, double p);

// P(Bin(n, p) >= k) for every k = 0..n+1 at once, via one PMF recurrence
// pass and a suffix Kahan sum. Entry [k] is the tail at k.
std::vector<double> binomial_tail_table(long n, double p);

namespace detail {
double binomial_tail_sum(long n, long k, double p);      // term-by-term Kahan sum
double binomial_tail_incbeta(long n, long k, double p);  // I_p(k, n-k+1)
}  // namespace detail

}  // namespace confreg::sf
