#pragma once

#include "confreg/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

// Vote-threshold selection: given n interval-membership votes, pick the
// largest k such that the region {theta : at least k votes} still traps the
// true parameter with probability >= 1 - beta. Four bound families are
// offered, trading generality for tightness.

namespace confreg::bounds {

// b is a lower bound on min(P(noise >= 0 | x), P(noise <= 0 | x)) over
// inputs x, so b <= 1/2 always. assumption3 asserts that the noise-free
// value inherits the interval coverage of the noisy output directly, in
// which case the 1/b inflation is skipped.
struct NoiseAssumption {
    double b = 0.5;
    bool assumption3 = false;
};

enum class KMethod { markov, worst_case, split, pac };

std::string method_name(KMethod m);

// A chosen threshold plus the inputs that produced it. guaranteed_coverage
// is the certified lower bound on P(true parameter lands in the region);
// for pac the certificate holds with probability 1 - delta over the
// calibration draw rather than marginally.
struct KSelection {
    KMethod method = KMethod::split;
    long k = 0;
    double guaranteed_coverage = 1.0;
    std::optional<double> randomizer_draw;  // markov only: the realized U

    long n = 0;
    long n_cal = -1;  // -1 when the method never sees a calibration set
    double alpha = 0.0;  // for markov/worst_case this is the noise-free level
    double beta = 0.0;
    NoiseAssumption noise;
    double delta = std::numeric_limits<double>::quiet_NaN();  // pac only
    std::uint64_t seed = 0;                                   // markov only
};

// Noise-free miscoverage level alpha' = alpha / b (or alpha itself under
// assumption3). Throws VacuousGuaranteeError when alpha / b >= 1.
double noise_free_alpha(double alpha, const NoiseAssumption& noise);

// Randomized Markov threshold: base = floor(n + 1 - n alpha' / beta), then
// k = base + floor(U) with U ~ Unif(0, n - base + 1), clamped to [base, n].
// The coverage bound 1 - n alpha' / (n - base + 1) >= 1 - beta holds
// marginally over U. Throws NoValidKError when base < 1.
KSelection k_markov(long n, double alpha_prime, double beta, std::uint64_t seed);

// Minimum of E[F_k(Q)] over all coverage laws Q with mean >= 1 - alpha',
// where F_k(p) = P(Bin(n, p) >= k). The minimizer is a two-point mixture
// v < 1 - alpha' < u, scanned on a grid x grid lattice with a 10x-finer
// refinement pass around the best cell plus the u,v -> 1 - alpha' boundary
// candidate F_k(1 - alpha'). grid >= 100 required.
double worst_case_coverage(long n, long k, double alpha_prime, long grid = 512);

// Largest k whose worst-case coverage is >= 1 - beta (k = 0 always
// qualifies with coverage 1).
KSelection k_worst_case(long n, double alpha_prime, double beta);

// H(k) = E[F_k(Q')] where Q ~ Beta(i, n_cal + 1 - i) is the conditional
// coverage law of a split-calibrated interval at level alpha (i the
// calibration quantile rank) and Q' = Q under assumption3, otherwise
// Q' = 1 - (1 - Q)/b restricted to (0, 1). Under assumption3 this is the
// beta-binomial tail in closed form; otherwise adaptive Gauss-Legendre
// quadrature over (1 - b, 1].
double split_bound_H(long n, long k, long n_cal, double alpha,
                     const NoiseAssumption& noise);

// Same quantity without assumption3 through the alternating finite double
// sum instead of quadrature. The (b-1)^(i-j) terms cancel catastrophically
// as n grows; intended as an independent cross-check for n <= 40 only.
double split_bound_H_series(long n, long k, long n_cal, double alpha,
                            const NoiseAssumption& noise);

// Largest k with H(k) >= 1 - beta. H is nonincreasing in k, so a downward
// scan stops at the first success. Without assumption3 even k = 0 can fail
// (H(0) = P(Q > 1 - b) < 1); that raises NoValidKError.
KSelection k_split(long n, long n_cal, double alpha, double beta,
                   const NoiseAssumption& noise);

// Threshold certified with probability 1 - delta over the calibration set:
// k = max{k : F_k(1 - atilde/b) >= 1 - beta} (the /b is dropped under
// assumption3). Plain variant: atilde = alpha + sqrt(log(1/delta)/n_cal).
// Refined variant: atilde = 1 - q_delta with q_delta the lower
// delta-quantile of the Beta coverage law, which is never worse. Throws
// NoValidKError when 1 - atilde/b < 0.
KSelection k_pac(long n, long n_cal, double alpha, double beta, double delta,
                 const NoiseAssumption& noise, bool refined = false);

struct CurveRow {
    std::string method;
    long k = 0;
    double coverage = 1.0;
};

// Guaranteed coverage of every threshold k = 0..n for each requested
// method, ordered by k. k = 0 rows are exactly 1 (the region is the whole
// parameter space). markov rows use the per-k marginal bound
// max(0, 1 - n alpha'/(n - k + 1)); pac rows use the plain variant at the
// given delta.
std::vector<CurveRow> coverage_curve(long n, long n_cal, double alpha,
                                     const NoiseAssumption& noise,
                                     const std::vector<KMethod>& methods,
                                     double delta = 0.1);

// CSV with header method,k,coverage.
void write_coverage_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows);

}  // namespace confreg::bounds
