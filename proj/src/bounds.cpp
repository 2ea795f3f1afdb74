#include "confreg/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "confreg/conformal.hpp"
#include "confreg/errors.hpp"
#include "confreg/rng.hpp"
#include "confreg/special_functions.hpp"

namespace confreg::bounds {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void check_noise(const NoiseAssumption& noise) {
    require(noise.b > 0.0 && noise.b <= 0.5,
            "noise assumption: b must lie in (0, 0.5]");
}

// 21-point Gauss-Legendre nodes and weights on [-1, 1], computed once by
// Newton iteration on the Legendre recurrence (exact for degree <= 41).
struct GaussRule {
    static constexpr int points = 21;
    double node[points];
    double weight[points];

    GaussRule() {
        const int m = points;
        for (int i = 0; i < (m + 1) / 2; ++i) {
            long double x = cosl(3.14159265358979323846L * (long double)(i + 0.75L) /
                                 ((long double)m + 0.5L));
            long double dp = 0.0L;
            for (int it = 0; it < 100; ++it) {
                long double p0 = 1.0L, p1 = x;
                for (int j = 2; j <= m; ++j) {
                    long double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m * (x * p1 - p0) / (x * x - 1.0L);
                long double dx = p1 / dp;
                x -= dx;
                if (fabsl(dx) < 1e-19L) break;
            }
            node[i] = double(-x);
            node[m - 1 - i] = double(x);
            double w = double(2.0L / ((1.0L - x * x) * dp * dp));
            weight[i] = w;
            weight[m - 1 - i] = w;
        }
    }
};

const GaussRule& gauss_rule() {
    static const GaussRule rule;
    return rule;
}

template <class F>
double gl_segment(const F& f, double a, double b) {
    const GaussRule& g = gauss_rule();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < GaussRule::points; ++i) acc += g.weight[i] * f(c + h * g.node[i]);
    return h * acc;
}

template <class F>
double adaptive_gl(const F& f, double a, double b, double tol, int depth) {
    const double whole = gl_segment(f, a, b);
    const double mid = 0.5 * (a + b);
    const double left = gl_segment(f, a, mid), right = gl_segment(f, mid, b);
    if (depth >= 48 || std::fabs(left + right - whole) <= tol) return left + right;
    return adaptive_gl(f, a, mid, 0.5 * tol, depth + 1) +
           adaptive_gl(f, mid, b, 0.5 * tol, depth + 1);
}

struct KahanLd {
    long double sum = 0.0L, carry = 0.0L;
    void add(long double term) {
        long double y = term - carry;
        long double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

long quantile_ranks(double alpha, long n_cal, long& j_rank) {
    long i_rank = conformal::quantile_rank(alpha, n_cal);
    j_rank = n_cal + 1 - i_rank;
    return i_rank;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string method_name(KMethod m) {
    switch (m) {
        case KMethod::markov: return "markov";
        case KMethod::worst_case: return "worst_case";
        case KMethod::split: return "split";
        case KMethod::pac: return "pac";
    }
    throw std::logic_error("method_name: unknown method");
}

double noise_free_alpha(double alpha, const NoiseAssumption& noise) {
    require(alpha > 0.0 && alpha < 1.0, "noise_free_alpha: alpha must lie in (0,1)");
    check_noise(noise);
    if (noise.assumption3) return alpha;
    double prime = alpha / noise.b;
    if (prime >= 1.0)
        throw VacuousGuaranteeError(
            "noise_free_alpha: alpha/b >= 1, no nontrivial noise-free guarantee");
    return prime;
}

KSelection k_markov(long n, double alpha_prime, double beta, std::uint64_t seed) {
    require(n >= 1, "k_markov: n must be at least 1");
    require(alpha_prime >= 0.0 && alpha_prime < 1.0, "k_markov: alpha' must lie in [0,1)");
    require(beta > 0.0 && beta < 1.0, "k_markov: beta must lie in (0,1)");
    // the +1e-9 nudge keeps exactly-integer expressions (e.g. 31 - 3/0.5)
    // from landing one below their value through binary rounding of alpha'
    long double base_ld = floorl((long double)n + 1.0L -
                                 (long double)n * (long double)alpha_prime /
                                     (long double)beta +
                                 1e-9L);
    if (base_ld < 1.0L)
        throw NoValidKError("k_markov: even k = 1 misses the confidence target");
    long base = std::min((long)base_ld, n);

    SplitMix64 rng(seed);
    double span = double(n - base + 1);
    double u = rng.uniform() * span;  // U ~ Unif(0, n - base + 1)
    long k = std::clamp(base + (long)std::floor(u), base, n);

    KSelection sel;
    sel.method = KMethod::markov;
    sel.k = k;
    sel.randomizer_draw = u;
    sel.guaranteed_coverage =
        clamp01(1.0 - double(n) * alpha_prime / double(n - base + 1));
    sel.n = n;
    sel.alpha = alpha_prime;
    sel.beta = beta;
    sel.seed = seed;
    return sel;
}

double worst_case_coverage(long n, long k, double alpha_prime, long grid) {
    require(n >= 1, "worst_case_coverage: n must be at least 1");
    require(k >= 0 && k <= n, "worst_case_coverage: k must lie in [0, n]");
    require(alpha_prime >= 0.0 && alpha_prime < 1.0,
            "worst_case_coverage: alpha' must lie in [0,1)");
    require(grid >= 100, "worst_case_coverage: grid must be at least 100");
    if (k == 0) return 1.0;               // F_0 is identically 1
    if (alpha_prime == 0.0) return 1.0;   // mean constraint forces Q = 1

    const double t = 1.0 - alpha_prime;
    auto tail = [&](double p) { return sf::binomial_tail(n, k, p); };
    // mixture value at (v, u) with mass placed so the mean is exactly t
    auto mixture = [&](double v, double fv, double u, double fu) {
        double m = (t - v) / (u - v);
        return fv + m * (fu - fv);
    };

    // u, v -> t from both sides collapses the mixture onto F_k(t)
    double best = tail(t);
    long best_i = -1, best_j = -1;

    std::vector<double> fv((std::size_t)grid), fu((std::size_t)grid);
    for (long i = 0; i < grid; ++i)
        fv[(std::size_t)i] = tail(t * double(i) / double(grid));
    for (long j = 0; j < grid; ++j)
        fu[(std::size_t)j] = tail(t + (1.0 - t) * double(j + 1) / double(grid));
    for (long i = 0; i < grid; ++i) {
        const double v = t * double(i) / double(grid);
        for (long j = 0; j < grid; ++j) {
            const double u = t + (1.0 - t) * double(j + 1) / double(grid);
            double s = mixture(v, fv[(std::size_t)i], u, fu[(std::size_t)j]);
            if (s < best) {
                best = s;
                best_i = i;
                best_j = j;
            }
        }
    }

    if (best_i >= 0) {
        // refinement: resample the +-1-cell window around the best lattice
        // point 10x finer on each axis (the optimum location is not known in
        // closed form, only that a two-point mixture attains it)
        const long fine = 10 * grid;
        const double eps = 1e-12;
        double v_lo = t * double(std::max(0L, best_i - 1)) / double(grid);
        double v_hi = std::min(t * double(best_i + 1) / double(grid), t * (1.0 - eps));
        double u_lo = std::max(t + (1.0 - t) * double(best_j) / double(grid),
                               t + (1.0 - t) * eps);
        double u_hi = t + (1.0 - t) * double(std::min(grid, best_j + 2)) / double(grid);

        std::vector<double> gv((std::size_t)fine + 1), gu((std::size_t)fine + 1);
        for (long i = 0; i <= fine; ++i)
            gv[(std::size_t)i] = tail(v_lo + (v_hi - v_lo) * double(i) / double(fine));
        for (long j = 0; j <= fine; ++j)
            gu[(std::size_t)j] = tail(u_lo + (u_hi - u_lo) * double(j) / double(fine));
        for (long i = 0; i <= fine; ++i) {
            const double v = v_lo + (v_hi - v_lo) * double(i) / double(fine);
            for (long j = 0; j <= fine; ++j) {
                const double u = u_lo + (u_hi - u_lo) * double(j) / double(fine);
                double s = mixture(v, gv[(std::size_t)i], u, gu[(std::size_t)j]);
                if (s < best) best = s;
            }
        }
    }
    return clamp01(best);
}

KSelection k_worst_case(long n, double alpha_prime, double beta) {
    require(beta > 0.0 && beta < 1.0, "k_worst_case: beta must lie in (0,1)");
    for (long k = n; k >= 0; --k) {
        double cov = worst_case_coverage(n, k, alpha_prime);
        if (cov >= 1.0 - beta) {
            KSelection sel;
            sel.method = KMethod::worst_case;
            sel.k = k;
            sel.guaranteed_coverage = cov;
            sel.n = n;
            sel.alpha = alpha_prime;
            sel.beta = beta;
            return sel;
        }
    }
    throw std::logic_error("k_worst_case: unreachable, k = 0 has coverage 1");
}

double split_bound_H(long n, long k, long n_cal, double alpha,
                     const NoiseAssumption& noise) {
    require(n >= 1, "split_bound_H: n must be at least 1");
    require(k >= 0 && k <= n, "split_bound_H: k must lie in [0, n]");
    check_noise(noise);
    long j_rank = 0;
    const long i_rank = quantile_ranks(alpha, n_cal, j_rank);
    const double r = double(i_rank), s = double(j_rank);

    if (noise.assumption3) {
        if (k == 0) return 1.0;  // full beta-binomial sum
        const double ln_norm = sf::ln_beta(r, s);
        KahanLd acc;
        for (long i = k; i <= n; ++i)
            acc.add(expl((long double)(sf::ln_choose(n, i) +
                                       sf::ln_beta(r + double(i), s + double(n - i)) -
                                       ln_norm)));
        return clamp01(double(acc.sum));
    }

    // E[F_k(1 - (1-Q)/b)] restricted to Q > 1 - b, with the Beta weight kept
    // in log space; Gauss-Legendre panels subdivided until the local error
    // estimate drops below an absolute 1e-13
    const double b = noise.b;
    const double ln_norm = sf::ln_beta(r, s);
    auto integrand = [&](double p) {
        const double one_minus = 1.0 - p;
        if (one_minus <= 0.0) return 0.0;
        double mapped = 1.0 - one_minus / b;
        double f = sf::binomial_tail(n, k, std::clamp(mapped, 0.0, 1.0));
        double ln_w = (r - 1.0) * std::log(p) + (s - 1.0) * std::log(one_minus) - ln_norm;
        return f * std::exp(ln_w);
    };
    double value = adaptive_gl(integrand, 1.0 - b, 1.0, 1e-13, 0);
    return clamp01(value);
}

double split_bound_H_series(long n, long k, long n_cal, double alpha,
                            const NoiseAssumption& noise) {
    require(n >= 1, "split_bound_H_series: n must be at least 1");
    require(k >= 0 && k <= n, "split_bound_H_series: k must lie in [0, n]");
    check_noise(noise);
    require(!noise.assumption3,
            "split_bound_H_series: only the no-assumption3 double sum is provided");
    long j_rank = 0;
    const long i_rank = quantile_ranks(alpha, n_cal, j_rank);
    const double r = double(i_rank), s = double(j_rank);
    const double b = noise.b;
    const long double ln_b = logl((long double)b);
    const long double ln_one_minus_b = logl(1.0L - (long double)b);
    const double ln_norm = sf::ln_beta(r, s);

    KahanLd acc;
    for (long i = k; i <= n; ++i) {
        for (long j = 0; j <= i; ++j) {
            // segment of the Beta integral above 1-b, via the tail symmetry
            // of the regularized incomplete Beta (avoids computing 1 - I)
            double tail_frac =
                sf::regularized_incomplete_beta(b, s + double(n - i), r + double(j));
            if (tail_frac <= 0.0) continue;
            long double ln_mag = (long double)sf::ln_choose(n, i) +
                                 (long double)sf::ln_choose(i, j) +
                                 (long double)(i - j) * ln_one_minus_b -
                                 (long double)n * ln_b +
                                 (long double)sf::ln_beta(r + double(j),
                                                          s + double(n - i)) +
                                 logl((long double)tail_frac) - (long double)ln_norm;
            long double term = expl(ln_mag);
            acc.add(((i - j) % 2 != 0) ? -term : term);  // (b-1)^(i-j) alternates
        }
    }
    return clamp01(double(acc.sum));
}

KSelection k_split(long n, long n_cal, double alpha, double beta,
                   const NoiseAssumption& noise) {
    require(beta > 0.0 && beta < 1.0, "k_split: beta must lie in (0,1)");
    for (long k = n; k >= 0; --k) {
        double h = split_bound_H(n, k, n_cal, alpha, noise);
        if (h >= 1.0 - beta) {
            KSelection sel;
            sel.method = KMethod::split;
            sel.k = k;
            sel.guaranteed_coverage = h;
            sel.n = n;
            sel.n_cal = n_cal;
            sel.alpha = alpha;
            sel.beta = beta;
            sel.noise = noise;
            return sel;
        }
    }
    throw NoValidKError(
        "k_split: H(0) < 1 - beta, too much coverage mass maps below zero");
}

KSelection k_pac(long n, long n_cal, double alpha, double beta, double delta,
                 const NoiseAssumption& noise, bool refined) {
    require(n >= 1, "k_pac: n must be at least 1");
    require(n_cal >= 1, "k_pac: n_cal must be at least 1");
    require(alpha > 0.0 && alpha < 1.0, "k_pac: alpha must lie in (0,1)");
    require(beta > 0.0 && beta < 1.0, "k_pac: beta must lie in (0,1)");
    require(delta > 0.0 && delta < 1.0, "k_pac: delta must lie in (0,1)");
    check_noise(noise);

    double alpha_tilde;
    if (refined) {
        // exact lower delta-quantile of the Beta coverage law in place of
        // the Hoeffding-style slack
        long j_rank = 0;
        const long i_rank = quantile_ranks(alpha, n_cal, j_rank);
        alpha_tilde = 1.0 - sf::beta_quantile(delta, double(i_rank), double(j_rank));
    } else {
        alpha_tilde = alpha + std::sqrt(std::log(1.0 / delta) / double(n_cal));
    }
    double p_arg = noise.assumption3 ? 1.0 - alpha_tilde : 1.0 - alpha_tilde / noise.b;
    if (p_arg < 0.0)
        throw NoValidKError("k_pac: inflated miscoverage exceeds 1, no threshold is valid");

    for (long k = n; k >= 0; --k) {
        double f = sf::binomial_tail(n, k, p_arg);
        if (f >= 1.0 - beta) {
            KSelection sel;
            sel.method = KMethod::pac;
            sel.k = k;
            sel.guaranteed_coverage = f;
            sel.n = n;
            sel.n_cal = n_cal;
            sel.alpha = alpha;
            sel.beta = beta;
            sel.noise = noise;
            sel.delta = delta;
            return sel;
        }
    }
    throw std::logic_error("k_pac: unreachable, k = 0 has tail 1");
}

std::vector<CurveRow> coverage_curve(long n, long n_cal, double alpha,
                                     const NoiseAssumption& noise,
                                     const std::vector<KMethod>& methods,
                                     double delta) {
    require(n >= 1, "coverage_curve: n must be at least 1");
    const double alpha_prime = noise_free_alpha(alpha, noise);
    double pac_arg = 0.0;
    bool want_pac = false;
    for (KMethod m : methods) want_pac = want_pac || m == KMethod::pac;
    if (want_pac) {
        require(delta > 0.0 && delta < 1.0, "coverage_curve: delta must lie in (0,1)");
        double alpha_tilde = alpha + std::sqrt(std::log(1.0 / delta) / double(n_cal));
        pac_arg = noise.assumption3 ? 1.0 - alpha_tilde : 1.0 - alpha_tilde / noise.b;
        pac_arg = std::max(pac_arg, 0.0);
    }

    const KMethod order[] = {KMethod::markov, KMethod::worst_case, KMethod::split,
                             KMethod::pac};
    std::vector<CurveRow> rows;
    for (long k = 0; k <= n; ++k) {
        for (KMethod m : order) {
            if (std::find(methods.begin(), methods.end(), m) == methods.end()) continue;
            CurveRow row;
            row.method = method_name(m);
            row.k = k;
            if (k == 0) {
                row.coverage = 1.0;  // threshold 0 keeps the whole space
            } else {
                switch (m) {
                    case KMethod::markov:
                        row.coverage = std::max(
                            0.0, 1.0 - double(n) * alpha_prime / double(n - k + 1));
                        break;
                    case KMethod::worst_case:
                        row.coverage = worst_case_coverage(n, k, alpha_prime);
                        break;
                    case KMethod::split:
                        row.coverage = split_bound_H(n, k, n_cal, alpha, noise);
                        break;
                    case KMethod::pac:
                        row.coverage = sf::binomial_tail(n, k, pac_arg);
                        break;
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_coverage_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
    out << "method,k,coverage\n";
    for (const CurveRow& row : rows)
        out << row.method << ',' << row.k << ',' << format_double(row.coverage) << '\n';
}

}  // namespace confreg::bounds
