#include "confreg/milp.hpp"

#include "confreg/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace confreg::milp {

namespace {

constexpr double INF = std::numeric_limits<double>::infinity();
constexpr double PIVOT_TOL = 1e-11;
constexpr double DEGEN_TOL = 1e-12;

// ============================================================================
// Bounded-variable primal simplex, dense explicit inverse.
// ============================================================================
//
// Internal form: min c'x over [A | I] (x_struct, x_slack) = b with general
// bounds on every column. Slack bounds encode the row relation. Phase 1
// starts from the all-slack basis and minimizes the total bound violation of
// the basic variables (costs +/-1 on violated basics, no artificial columns);
// phase 2 is the textbook bounded simplex. Dantzig pricing with a permanent
// switch to Bland's rule once degenerate pivots pile up.

class Simplex {
public:
    Simplex(long m, long nstruct) : m_(m), n_(nstruct), ntot_(nstruct + m) {
        A_.assign(std::size_t(m_) * std::size_t(n_), 0.0);
        b_.assign(std::size_t(m_), 0.0);
        lo_.assign(std::size_t(ntot_), 0.0);
        up_.assign(std::size_t(ntot_), 0.0);
        cost_.assign(std::size_t(ntot_), 0.0);
    }

    double& a(long i, long j) { return A_[std::size_t(i) * std::size_t(n_) + std::size_t(j)]; }
    void set_rhs(long i, double v) { b_[std::size_t(i)] = v; }
    void set_bounds(long j, double lo, double up) {
        lo_[std::size_t(j)] = lo;
        up_[std::size_t(j)] = up;
    }
    void set_cost(long j, double c) { cost_[std::size_t(j)] = c; }

    // Returns true when a feasible optimum was found; false when infeasible.
    // Throws on unbounded problems (cannot happen for box-bounded inputs).
    bool solve() {
        init_basis();
        if (!phase1()) return false;
        phase2();
        polish();
        return true;
    }

    double objective() const {
        double v = 0.0;
        for (long j = 0; j < ntot_; ++j) v += cost_[std::size_t(j)] * x_[std::size_t(j)];
        return v;
    }
    double value(long j) const { return x_[std::size_t(j)]; }
    double infeasibility() const { return total_violation(); }

private:
    long m_, n_, ntot_;
    std::vector<double> A_, b_, lo_, up_, cost_;
    std::vector<long> basis_;
    std::vector<int> where_;  // -1 at lower, +1 at upper, 0 basic
    std::vector<double> binv_, x_;
    long pivots_ = 0;
    long degenerate_ = 0;
    bool bland_ = false;

    double colval(long i, long j) const {
        return j < n_ ? A_[std::size_t(i) * std::size_t(n_) + std::size_t(j)]
                      : (i == j - n_ ? 1.0 : 0.0);
    }

    void init_basis() {
        basis_.resize(std::size_t(m_));
        where_.assign(std::size_t(ntot_), -1);
        x_.assign(std::size_t(ntot_), 0.0);
        for (long j = 0; j < n_; ++j) {
            // start at the finite bound of smaller magnitude (deterministic)
            double l = lo_[std::size_t(j)], u = up_[std::size_t(j)];
            if (std::isfinite(l) && (!std::isfinite(u) || std::fabs(l) <= std::fabs(u))) {
                x_[std::size_t(j)] = l;
                where_[std::size_t(j)] = -1;
            } else {
                x_[std::size_t(j)] = u;
                where_[std::size_t(j)] = +1;
            }
        }
        for (long i = 0; i < m_; ++i) {
            basis_[std::size_t(i)] = n_ + i;
            where_[std::size_t(n_ + i)] = 0;
        }
        binv_.assign(std::size_t(m_) * std::size_t(m_), 0.0);
        for (long i = 0; i < m_; ++i) binv_[std::size_t(i) * std::size_t(m_) + std::size_t(i)] = 1.0;
        compute_basics();
        bland_ = false;
        degenerate_ = 0;
        pivots_ = 0;
    }

    void compute_basics() {
        std::vector<double> r = b_;
        for (long j = 0; j < ntot_; ++j) {
            if (where_[std::size_t(j)] == 0 || x_[std::size_t(j)] == 0.0) continue;
            double xj = x_[std::size_t(j)];
            if (j < n_) {
                for (long i = 0; i < m_; ++i) r[std::size_t(i)] -= a_ij(i, j) * xj;
            } else {
                r[std::size_t(j - n_)] -= xj;
            }
        }
        for (long i = 0; i < m_; ++i) {
            double v = 0.0;
            for (long k = 0; k < m_; ++k)
                v += binv_[std::size_t(i) * std::size_t(m_) + std::size_t(k)] * r[std::size_t(k)];
            x_[std::size_t(basis_[std::size_t(i)])] = v;
        }
    }

    double a_ij(long i, long j) const {
        return A_[std::size_t(i) * std::size_t(n_) + std::size_t(j)];
    }

    void ftran(long q, std::vector<double>& w) const {
        w.assign(std::size_t(m_), 0.0);
        if (q >= n_) {
            long r = q - n_;
            for (long i = 0; i < m_; ++i)
                w[std::size_t(i)] = binv_[std::size_t(i) * std::size_t(m_) + std::size_t(r)];
            return;
        }
        for (long k = 0; k < m_; ++k) {
            double akq = a_ij(k, q);
            if (akq == 0.0) continue;
            for (long i = 0; i < m_; ++i)
                w[std::size_t(i)] += binv_[std::size_t(i) * std::size_t(m_) + std::size_t(k)] * akq;
        }
    }

    void btran(const std::vector<double>& cb, std::vector<double>& y) const {
        y.assign(std::size_t(m_), 0.0);
        for (long i = 0; i < m_; ++i) {
            double ci = cb[std::size_t(i)];
            if (ci == 0.0) continue;
            for (long k = 0; k < m_; ++k)
                y[std::size_t(k)] += ci * binv_[std::size_t(i) * std::size_t(m_) + std::size_t(k)];
        }
    }

    double reduced_cost(long j, const std::vector<double>& y, double cj) const {
        double d = cj;
        if (j < n_) {
            for (long i = 0; i < m_; ++i) {
                double aij = a_ij(i, j);
                if (aij != 0.0) d -= y[std::size_t(i)] * aij;
            }
        } else {
            d -= y[std::size_t(j - n_)];
        }
        return d;
    }

    double total_violation() const {
        double v = 0.0;
        for (long i = 0; i < m_; ++i) {
            long bidx = basis_[std::size_t(i)];
            double xb = x_[std::size_t(bidx)];
            if (xb < lo_[std::size_t(bidx)]) v += lo_[std::size_t(bidx)] - xb;
            if (xb > up_[std::size_t(bidx)]) v += xb - up_[std::size_t(bidx)];
        }
        return v;
    }

    // Gauss-Jordan refactorization of the explicit inverse.
    void refactor() {
        std::vector<double> mtx(std::size_t(m_) * std::size_t(m_));
        for (long i = 0; i < m_; ++i)
            for (long r = 0; r < m_; ++r)
                mtx[std::size_t(r) * std::size_t(m_) + std::size_t(i)] =
                    colval(r, basis_[std::size_t(i)]);
        std::vector<double> inv(std::size_t(m_) * std::size_t(m_), 0.0);
        for (long i = 0; i < m_; ++i) inv[std::size_t(i) * std::size_t(m_) + std::size_t(i)] = 1.0;
        for (long c = 0; c < m_; ++c) {
            long p = c;
            double best = std::fabs(mtx[std::size_t(c) * std::size_t(m_) + std::size_t(c)]);
            for (long r = c + 1; r < m_; ++r) {
                double v = std::fabs(mtx[std::size_t(r) * std::size_t(m_) + std::size_t(c)]);
                if (v > best) {
                    best = v;
                    p = r;
                }
            }
            if (best < 1e-12) throw std::runtime_error("simplex: singular basis");
            if (p != c) {
                for (long j = 0; j < m_; ++j) {
                    std::swap(mtx[std::size_t(p) * std::size_t(m_) + std::size_t(j)],
                              mtx[std::size_t(c) * std::size_t(m_) + std::size_t(j)]);
                    std::swap(inv[std::size_t(p) * std::size_t(m_) + std::size_t(j)],
                              inv[std::size_t(c) * std::size_t(m_) + std::size_t(j)]);
                }
            }
            double piv = mtx[std::size_t(c) * std::size_t(m_) + std::size_t(c)];
            for (long j = 0; j < m_; ++j) {
                mtx[std::size_t(c) * std::size_t(m_) + std::size_t(j)] /= piv;
                inv[std::size_t(c) * std::size_t(m_) + std::size_t(j)] /= piv;
            }
            for (long r = 0; r < m_; ++r) {
                if (r == c) continue;
                double f = mtx[std::size_t(r) * std::size_t(m_) + std::size_t(c)];
                if (f == 0.0) continue;
                for (long j = 0; j < m_; ++j) {
                    mtx[std::size_t(r) * std::size_t(m_) + std::size_t(j)] -=
                        f * mtx[std::size_t(c) * std::size_t(m_) + std::size_t(j)];
                    inv[std::size_t(r) * std::size_t(m_) + std::size_t(j)] -=
                        f * inv[std::size_t(c) * std::size_t(m_) + std::size_t(j)];
                }
            }
        }
        binv_.swap(inv);
        compute_basics();
    }

    // One simplex iteration against the given cost vector. Returns false when
    // no improving entering variable exists.
    bool iterate(const std::vector<double>& c, bool phase_one) {
        std::vector<double> cb(static_cast<std::size_t>(m_));
        for (long i = 0; i < m_; ++i) cb[std::size_t(i)] = c[std::size_t(basis_[std::size_t(i)])];
        std::vector<double> y;
        btran(cb, y);

        const double rtol = tolerances().reduced_cost;
        long q = -1;
        int dir = 0;
        double best = 0.0;
        for (long j = 0; j < ntot_; ++j) {
            int wst = where_[std::size_t(j)];
            if (wst == 0) continue;
            if (up_[std::size_t(j)] - lo_[std::size_t(j)] <= 0.0) continue;  // fixed
            double d = reduced_cost(j, y, c[std::size_t(j)]);
            int cand = 0;
            if (wst == -1 && d < -rtol) cand = +1;
            if (wst == +1 && d > rtol) cand = -1;
            if (cand == 0) continue;
            if (bland_) {
                q = j;
                dir = cand;
                break;
            }
            if (std::fabs(d) > best) {
                best = std::fabs(d);
                q = j;
                dir = cand;
            }
        }
        if (q < 0) return false;

        std::vector<double> w;
        ftran(q, w);

        // ratio test
        double limit = up_[std::size_t(q)] - lo_[std::size_t(q)];  // bound flip distance
        long leave_pos = -1;
        double leave_bound = 0.0;
        double best_pivot = 0.0;
        for (long i = 0; i < m_; ++i) {
            double wi = w[std::size_t(i)];
            if (std::fabs(wi) <= PIVOT_TOL) continue;
            long bidx = basis_[std::size_t(i)];
            double rate = -double(dir) * wi;  // change of basic value per unit step
            double xb = x_[std::size_t(bidx)];
            double l = lo_[std::size_t(bidx)], u = up_[std::size_t(bidx)];
            double ratio = INF, hit = 0.0;
            if (phase_one && xb < l - DEGEN_TOL) {
                // violated below: blocks only while rising toward l
                if (rate > 0.0) {
                    ratio = (l - xb) / rate;
                    hit = l;
                }
            } else if (phase_one && xb > u + DEGEN_TOL) {
                if (rate < 0.0) {
                    ratio = (u - xb) / rate;
                    hit = u;
                }
            } else if (rate > 0.0) {
                if (std::isfinite(u)) {
                    ratio = (u - xb) / rate;
                    hit = u;
                }
            } else {
                if (std::isfinite(l)) {
                    ratio = (l - xb) / rate;
                    hit = l;
                }
            }
            if (ratio == INF) continue;
            if (ratio < 0.0) ratio = 0.0;  // tolerance dust
            bool take = false;
            if (ratio < limit - 1e-12) {
                take = true;
            } else if (ratio <= limit + 1e-12 && leave_pos >= 0 && ratio <= limit) {
                // tie among basics: prefer the larger pivot, then (under
                // Bland) the smallest variable index
                if (bland_) {
                    take = basis_[std::size_t(i)] < basis_[std::size_t(leave_pos)];
                } else {
                    take = std::fabs(wi) > best_pivot;
                }
            } else if (ratio <= limit && leave_pos < 0) {
                take = true;
            }
            if (take) {
                limit = std::min(limit, ratio);
                leave_pos = i;
                leave_bound = hit;
                best_pivot = std::fabs(wi);
            }
        }

        if (limit == INF) throw std::runtime_error("simplex: unbounded direction");

        if (limit <= DEGEN_TOL) {
            if (++degenerate_ > 10 * (ntot_ + m_)) bland_ = true;
        }

        // apply the step
        double step = double(dir) * limit;
        x_[std::size_t(q)] += step;
        for (long i = 0; i < m_; ++i) {
            double wi = w[std::size_t(i)];
            if (wi != 0.0) x_[std::size_t(basis_[std::size_t(i)])] -= step * wi;
        }

        if (leave_pos < 0) {
            // bound flip, basis unchanged
            where_[std::size_t(q)] = -where_[std::size_t(q)];
            return true;
        }

        long leaving = basis_[std::size_t(leave_pos)];
        x_[std::size_t(leaving)] = leave_bound;  // snap exactly
        where_[std::size_t(leaving)] =
            (leave_bound == lo_[std::size_t(leaving)] &&
             lo_[std::size_t(leaving)] != up_[std::size_t(leaving)])
                ? -1
            : (leave_bound == up_[std::size_t(leaving)] ? +1 : -1);
        basis_[std::size_t(leave_pos)] = q;
        where_[std::size_t(q)] = 0;

        // eta update of the explicit inverse
        double wp = w[std::size_t(leave_pos)];
        for (long col = 0; col < m_; ++col) {
            double pivrow = binv_[std::size_t(leave_pos) * std::size_t(m_) + std::size_t(col)] / wp;
            binv_[std::size_t(leave_pos) * std::size_t(m_) + std::size_t(col)] = pivrow;
            for (long r = 0; r < m_; ++r) {
                if (r == leave_pos) continue;
                double wr = w[std::size_t(r)];
                if (wr != 0.0)
                    binv_[std::size_t(r) * std::size_t(m_) + std::size_t(col)] -= wr * pivrow;
            }
        }

        if (++pivots_ % 64 == 0) refactor();
        return true;
    }

    bool phase1() {
        const double ftol = tolerances().lp_feasibility;
        std::vector<double> c(std::size_t(ntot_), 0.0);
        long cap = 20000 + 50 * (ntot_ + m_);
        for (long it = 0; it < cap; ++it) {
            bool violated = false;
            for (long j = 0; j < ntot_; ++j) c[std::size_t(j)] = 0.0;
            for (long i = 0; i < m_; ++i) {
                long bidx = basis_[std::size_t(i)];
                double xb = x_[std::size_t(bidx)];
                if (xb > up_[std::size_t(bidx)] + ftol) {
                    c[std::size_t(bidx)] = 1.0;
                    violated = true;
                } else if (xb < lo_[std::size_t(bidx)] - ftol) {
                    c[std::size_t(bidx)] = -1.0;
                    violated = true;
                }
            }
            if (!violated) return true;
            if (!iterate(c, true)) return total_violation() <= ftol * double(m_ > 0 ? m_ : 1);
        }
        throw std::runtime_error("simplex: phase 1 iteration cap exceeded");
    }

    void phase2() {
        long cap = 20000 + 50 * (ntot_ + m_);
        for (long it = 0; it < cap; ++it) {
            if (!iterate(cost_, false)) return;
        }
        throw std::runtime_error("simplex: phase 2 iteration cap exceeded");
    }

    // Final cleanup: refresh basic values from a fresh factorization, audit
    // the row residuals, then clamp tolerance dust onto the bounds.
    void polish() {
        refactor();
        const double ftol = tolerances().lp_feasibility;
        for (long i = 0; i < m_; ++i) {
            double act = 0.0;
            double scale = 1.0 + std::fabs(b_[std::size_t(i)]);
            for (long j = 0; j < n_; ++j) {
                double t = a_ij(i, j) * x_[std::size_t(j)];
                act += t;
                scale += std::fabs(t);
            }
            double t = x_[std::size_t(n_ + i)];
            act += t;
            scale += std::fabs(t);
            if (std::fabs(act - b_[std::size_t(i)]) > ftol * scale)
                throw std::runtime_error("simplex: residual audit failed");
        }
        for (long j = 0; j < ntot_; ++j) {
            double l = lo_[std::size_t(j)], u = up_[std::size_t(j)];
            double& v = x_[std::size_t(j)];
            if (v < l && v > l - ftol * (1.0 + std::fabs(l))) v = l;
            else if (v > u && v < u + ftol * (1.0 + std::fabs(u))) v = u;
        }
    }
};

LpSolution solve_lp_impl(const MilpProblem& p, const std::vector<double>& bin_lo,
                         const std::vector<double>& bin_up) {
    long n = p.n_vars();
    long m = long(p.constraints.size());

    LpSolution out;
    if (m == 0) {
        // pure box problem
        out.status = LpStatus::optimal;
        out.x.assign(std::size_t(n), 0.0);
        double v = 0.0;
        bool maximize = p.sense == Sense::maximize;
        for (long j = 0; j < n; ++j) {
            double lo = j < p.n_continuous ? p.lower[std::size_t(j)]
                                           : (bin_lo.empty() ? 0.0 : bin_lo[std::size_t(j - p.n_continuous)]);
            double up = j < p.n_continuous ? p.upper[std::size_t(j)]
                                           : (bin_up.empty() ? 1.0 : bin_up[std::size_t(j - p.n_continuous)]);
            double c = p.objective[std::size_t(j)];
            bool at_up = maximize ? (c > 0.0) : (c < 0.0);
            out.x[std::size_t(j)] = at_up ? up : lo;
            v += c * out.x[std::size_t(j)];
        }
        out.value = v;
        return out;
    }

    Simplex s(m, n);
    bool maximize = p.sense == Sense::maximize;
    for (long j = 0; j < n; ++j)
        s.set_cost(j, maximize ? -p.objective[std::size_t(j)] : p.objective[std::size_t(j)]);
    for (long j = 0; j < p.n_continuous; ++j)
        s.set_bounds(j, p.lower[std::size_t(j)], p.upper[std::size_t(j)]);
    for (long j = 0; j < p.n_binary; ++j) {
        double lo = bin_lo.empty() ? 0.0 : bin_lo[std::size_t(j)];
        double up = bin_up.empty() ? 1.0 : bin_up[std::size_t(j)];
        s.set_bounds(p.n_continuous + j, lo, up);
    }
    for (long i = 0; i < m; ++i) {
        const LinearConstraint& row = p.constraints[std::size_t(i)];
        for (long j = 0; j < n; ++j) {
            double v = row.coeffs[std::size_t(j)];
            if (v != 0.0) s.a(i, j) = v;
        }
        s.set_rhs(i, row.rhs);
        switch (row.rel) {
            case Relation::le: s.set_bounds(n + i, 0.0, INF); break;
            case Relation::ge: s.set_bounds(n + i, -INF, 0.0); break;
            case Relation::eq: s.set_bounds(n + i, 0.0, 0.0); break;
        }
    }

    if (!s.solve()) {
        out.status = LpStatus::infeasible;
        out.infeasibility = s.infeasibility();
        return out;
    }
    out.status = LpStatus::optimal;
    out.x.resize(std::size_t(n));
    for (long j = 0; j < n; ++j) out.x[std::size_t(j)] = s.value(j);
    double v = s.objective();
    out.value = maximize ? -v : v;
    return out;
}

double constraint_activity(const LinearConstraint& row, const std::vector<double>& x) {
    double v = 0.0;
    for (std::size_t j = 0; j < row.coeffs.size(); ++j) v += row.coeffs[j] * x[j];
    return v;
}

double constraint_violation(const LinearConstraint& row, const std::vector<double>& x) {
    double act = constraint_activity(row, x);
    switch (row.rel) {
        case Relation::le: return std::max(0.0, act - row.rhs);
        case Relation::ge: return std::max(0.0, row.rhs - act);
        case Relation::eq: return std::fabs(act - row.rhs);
    }
    return 0.0;
}

double constraint_scale(const LinearConstraint& row, const std::vector<double>& x) {
    double s = 1.0 + std::fabs(row.rhs);
    for (std::size_t j = 0; j < row.coeffs.size(); ++j) s += std::fabs(row.coeffs[j] * x[j]);
    return s;
}

}  // namespace

const SolverTolerances& tolerances() {
    static const SolverTolerances t;
    return t;
}

void MilpProblem::validate() const {
    if (n_continuous < 0 || n_binary < 0)
        throw std::invalid_argument("milp: negative variable counts");
    if (long(objective.size()) != n_vars())
        throw std::invalid_argument("milp: objective size mismatch");
    if (long(lower.size()) != n_continuous || long(upper.size()) != n_continuous)
        throw std::invalid_argument("milp: bound vector size mismatch");
    for (long j = 0; j < n_continuous; ++j) {
        if (!std::isfinite(lower[std::size_t(j)]) || !std::isfinite(upper[std::size_t(j)]))
            throw std::invalid_argument("milp: continuous bounds must be finite");
        if (lower[std::size_t(j)] > upper[std::size_t(j)])
            throw std::invalid_argument("milp: lower bound exceeds upper bound");
    }
    for (const auto& row : constraints)
        if (long(row.coeffs.size()) != n_vars())
            throw std::invalid_argument("milp: constraint width mismatch");
}

LpSolution solve_lp(const MilpProblem& problem, const std::vector<double>& bin_lower,
                    const std::vector<double>& bin_upper) {
    problem.validate();
    if (!bin_lower.empty() && long(bin_lower.size()) != problem.n_binary)
        throw std::invalid_argument("milp: bin_lower size mismatch");
    if (!bin_upper.empty() && long(bin_upper.size()) != problem.n_binary)
        throw std::invalid_argument("milp: bin_upper size mismatch");
    return solve_lp_impl(problem, bin_lower, bin_upper);
}

namespace {

struct Node {
    double bound;  // parent relaxation value, minimization orientation
    long id;
    std::vector<signed char> fix;  // -1 free, else fixed 0/1
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on bound
        return a.id > b.id;
    }
};

}  // namespace

MilpSolution solve_milp(const MilpProblem& problem, long node_limit) {
    problem.validate();
    const SolverTolerances& tol = tolerances();
    const bool maximize = problem.sense == Sense::maximize;
    const long nb = problem.n_binary;
    auto to_min = [&](double v) { return maximize ? -v : v; };

    MilpSolution out;
    out.status = MilpStatus::infeasible;

    double inc_value = INF;  // minimization orientation
    std::vector<double> inc_x;

    std::vector<Node> plunge_stack;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    long next_id = 0;

    plunge_stack.push_back(Node{-INF, next_id++, std::vector<signed char>(std::size_t(nb), -1)});

    auto bounds_of = [&](const std::vector<signed char>& fix, std::vector<double>& blo,
                         std::vector<double>& bup) {
        blo.assign(std::size_t(nb), 0.0);
        bup.assign(std::size_t(nb), 1.0);
        for (long j = 0; j < nb; ++j) {
            if (fix[std::size_t(j)] == 0) bup[std::size_t(j)] = 0.0;
            if (fix[std::size_t(j)] == 1) blo[std::size_t(j)] = 1.0;
        }
    };

    // Re-solves with every binary pinned to its rounded value, then checks the
    // full constraint set; incumbent values/assignments come from this exact
    // pass rather than from the relaxation.
    auto try_incumbent = [&](const std::vector<double>& relaxed) -> bool {
        std::vector<double> blo(static_cast<std::size_t>(nb)), bup(static_cast<std::size_t>(nb));
        for (long j = 0; j < nb; ++j) {
            double r = std::round(relaxed[std::size_t(problem.n_continuous + j)]);
            blo[std::size_t(j)] = r;
            bup[std::size_t(j)] = r;
        }
        LpSolution fixed = solve_lp_impl(problem, blo, bup);
        if (fixed.status != LpStatus::optimal) return false;
        std::vector<double> x = fixed.x;
        for (long j = 0; j < nb; ++j)
            x[std::size_t(problem.n_continuous + j)] = blo[std::size_t(j)];  // exact 0/1
        for (const auto& row : problem.constraints) {
            if (constraint_violation(row, x) > tol.feasibility * constraint_scale(row, x))
                throw std::runtime_error("milp: incumbent failed exact feasibility audit");
        }
        double v = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) v += problem.objective[j] * x[j];
        double vmin = to_min(v);
        if (!out.has_incumbent || vmin < inc_value) {
            inc_value = vmin;
            inc_x = std::move(x);
            out.has_incumbent = true;
        }
        return true;
    };

    auto best_open_bound = [&]() {
        double b = INF;
        if (!open.empty()) b = std::min(b, open.top().bound);
        for (const auto& nd : plunge_stack) b = std::min(b, nd.bound);
        return b;
    };

    std::vector<double> blo, bup;
    bool hit_limit = false;
    while (!plunge_stack.empty() || !open.empty()) {
        if (out.node_count >= node_limit) {
            hit_limit = true;
            break;
        }
        Node node;
        if (!plunge_stack.empty()) {
            node = std::move(plunge_stack.back());
            plunge_stack.pop_back();
        } else {
            node = open.top();
            open.pop();
        }
        if (out.has_incumbent && node.bound >= inc_value - tol.pruning) continue;

        ++out.node_count;
        bounds_of(node.fix, blo, bup);
        LpSolution relax = solve_lp_impl(problem, blo, bup);
        if (relax.status != LpStatus::optimal) continue;
        double bound = to_min(relax.value);
        if (out.has_incumbent && bound >= inc_value - tol.pruning) continue;

        // integrality check
        long branch_var = -1;
        double branch_score = -1.0;
        for (long j = 0; j < nb; ++j) {
            double xv = relax.x[std::size_t(problem.n_continuous + j)];
            double dist = std::fabs(xv - std::round(xv));
            if (dist > tol.integrality) {
                double score = std::min(xv - std::floor(xv), std::ceil(xv) - xv);
                if (score > branch_score + 1e-15) {
                    branch_score = score;
                    branch_var = j;
                }
            }
        }

        if (branch_var < 0) {
            if (try_incumbent(relax.x)) {
                // leaf; incumbent recorded (or matched an existing one)
                if (!plunge_stack.empty() && out.has_incumbent) {
                    // switch to best-bound: drain the stack into the queue
                    for (auto& nd : plunge_stack) open.push(std::move(nd));
                    plunge_stack.clear();
                }
                continue;
            }
            // relaxation integral within tolerance but not exactly fixable:
            // branch on the lowest-index free binary to make progress
            for (long j = 0; j < nb && branch_var < 0; ++j)
                if (node.fix[std::size_t(j)] < 0) branch_var = j;
            if (branch_var < 0) continue;  // fully fixed and infeasible: prune
        }

        double frac = relax.x[std::size_t(problem.n_continuous + branch_var)];
        int preferred = frac >= 0.5 ? 1 : 0;
        Node near{bound, next_id++, node.fix};
        near.fix[std::size_t(branch_var)] = (signed char)preferred;
        Node far{bound, next_id++, node.fix};
        far.fix[std::size_t(branch_var)] = (signed char)(1 - preferred);
        if (!out.has_incumbent) {
            plunge_stack.push_back(std::move(far));
            plunge_stack.push_back(std::move(near));  // popped first
        } else {
            open.push(std::move(near));
            open.push(std::move(far));
        }
    }

    if (hit_limit) {
        out.status = MilpStatus::node_limit;
        out.bound_gap = out.has_incumbent ? std::fabs(inc_value - best_open_bound()) : INF;
    } else {
        out.status = out.has_incumbent ? MilpStatus::optimal : MilpStatus::infeasible;
        out.bound_gap = 0.0;
    }
    if (out.has_incumbent) {
        out.value = maximize ? -inc_value : inc_value;
        out.assignment = inc_x;
    }
    return out;
}

// ============================================================================
// LP text round-trip
// ============================================================================

std::string format_double(double v) { return confreg::format_double(v); }

namespace {

void write_terms(std::ostream& out, const std::vector<double>& coeffs, long n_continuous) {
    bool first = true;
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
        double c = coeffs[j];
        if (c == 0.0) continue;
        if (first) {
            if (c < 0.0) out << "- ";
            first = false;
        } else {
            out << (c < 0.0 ? " - " : " + ");
        }
        out << format_double(std::fabs(c)) << ' ';
        if (long(j) < n_continuous)
            out << 'x' << j;
        else
            out << 'b' << (long(j) - n_continuous);
    }
    // an all-zero expression writes nothing; the reader yields zero coefficients
}

}  // namespace

void write_lp_text(std::ostream& out, const MilpProblem& p) {
    p.validate();
    out << (p.sense == Sense::minimize ? "Minimize\n" : "Maximize\n");
    out << " obj: ";
    write_terms(out, p.objective, p.n_continuous);
    out << "\nSubject To\n";
    for (std::size_t i = 0; i < p.constraints.size(); ++i) {
        const auto& row = p.constraints[i];
        out << " c" << i << ": ";
        write_terms(out, row.coeffs, p.n_continuous);
        switch (row.rel) {
            case Relation::le: out << " <= "; break;
            case Relation::ge: out << " >= "; break;
            case Relation::eq: out << " = "; break;
        }
        out << format_double(row.rhs) << '\n';
    }
    out << "Bounds\n";
    for (long j = 0; j < p.n_continuous; ++j) {
        out << ' ' << format_double(p.lower[std::size_t(j)]) << " <= x" << j
            << " <= " << format_double(p.upper[std::size_t(j)]) << '\n';
    }
    if (p.n_binary > 0) {
        out << "Binaries\n";
        for (long j = 0; j < p.n_binary; ++j) out << " b" << j;
        out << '\n';
    }
    out << "End\n";
}

namespace {

double parse_number(const std::string& tok) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw std::invalid_argument("lp parse: bad number '" + tok + "'");
    return v;
}

bool is_number_start(const std::string& tok) {
    char c = tok[0];
    return (c >= '0' && c <= '9') || c == '.' ||
           ((c == '-' || c == '+') && tok.size() > 1 &&
            ((tok[1] >= '0' && tok[1] <= '9') || tok[1] == '.'));
}

struct VarRef {
    bool binary;
    long index;
};

VarRef parse_var(const std::string& tok) {
    if (tok.size() < 2 || (tok[0] != 'x' && tok[0] != 'b'))
        throw std::invalid_argument("lp parse: bad variable '" + tok + "'");
    long idx = 0;
    auto res = std::from_chars(tok.data() + 1, tok.data() + tok.size(), idx);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw std::invalid_argument("lp parse: bad variable '" + tok + "'");
    return VarRef{tok[0] == 'b', idx};
}

}  // namespace

MilpProblem read_lp_text(std::istream& in) {
    // tokenize, keeping <= >= = + - as their own tokens
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '\\') continue;  // comment
        std::string cur;
        auto flush = [&]() {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        };
        for (std::size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (c == ' ' || c == '\t' || c == '\r') {
                flush();
            } else if (c == '<' || c == '>') {
                flush();
                std::string rel(1, c);
                if (i + 1 < line.size() && line[i + 1] == '=') {
                    rel += '=';
                    ++i;
                }
                tokens.push_back(rel);
            } else if (c == '=') {
                flush();
                tokens.push_back("=");
            } else if ((c == '+' || c == '-') && cur.empty() &&
                       !(i + 1 < line.size() &&
                         ((line[i + 1] >= '0' && line[i + 1] <= '9') || line[i + 1] == '.'))) {
                tokens.push_back(std::string(1, c));
            } else {
                cur += c;
            }
        }
        flush();
    }

    auto lower_eq = [](const std::string& a, const char* b) {
        std::string t;
        for (char c : a) t += char(std::tolower((unsigned char)c));
        return t == b;
    };

    MilpProblem p;
    std::size_t pos = 0;
    auto peek = [&]() -> const std::string& {
        static const std::string kEnd = "";
        return pos < tokens.size() ? tokens[pos] : kEnd;
    };
    auto next = [&]() -> std::string {
        if (pos >= tokens.size()) throw std::invalid_argument("lp parse: unexpected end");
        return tokens[pos++];
    };
    auto at_section = [&]() {
        const std::string& t = peek();
        return lower_eq(t, "subject") || lower_eq(t, "bounds") || lower_eq(t, "binaries") ||
               lower_eq(t, "binary") || lower_eq(t, "end") || lower_eq(t, "minimize") ||
               lower_eq(t, "maximize");
    };

    // expression parser: returns (name -> coefficient) pairs in order
    struct Term {
        VarRef var;
        double coeff;
    };
    auto parse_expr = [&](std::vector<Term>& terms) {
        double sign = 1.0;
        bool expect_term = true;
        while (pos < tokens.size() && !at_section()) {
            const std::string& t = peek();
            if (t == "<=" || t == ">=" || t == "=") break;
            if (t == "+") {
                next();
                expect_term = true;
                continue;
            }
            if (t == "-") {
                next();
                sign = -sign;
                expect_term = true;
                continue;
            }
            if (is_number_start(t)) {
                double num = parse_number(next());
                // may be followed by a variable
                if (pos < tokens.size() && !at_section() && peek() != "<=" && peek() != ">=" &&
                    peek() != "=" && peek() != "+" && peek() != "-" && !is_number_start(peek())) {
                    terms.push_back(Term{parse_var(next()), sign * num});
                } else {
                    terms.push_back(Term{VarRef{false, -1}, sign * num});  // constant
                }
            } else {
                terms.push_back(Term{parse_var(next()), sign});
            }
            sign = 1.0;
            expect_term = false;
        }
        (void)expect_term;
    };

    // first pass collects terms; variable universe is sized afterwards
    std::vector<Term> obj_terms;
    struct RawRow {
        std::vector<Term> terms;
        Relation rel;
        double rhs;
    };
    std::vector<RawRow> raw_rows;
    std::vector<std::pair<long, std::pair<double, double>>> xbounds;
    std::vector<long> binary_ids;
    long max_x = -1, max_b = -1;

    while (pos < tokens.size()) {
        std::string tok = next();
        if (lower_eq(tok, "minimize") || lower_eq(tok, "maximize")) {
            p.sense = lower_eq(tok, "minimize") ? Sense::minimize : Sense::maximize;
            if (peek() == "obj:" || peek() == "obj") {
                std::string label = next();
                if (label == "obj" && peek() == ":") next();
            }
            parse_expr(obj_terms);
        } else if (lower_eq(tok, "subject")) {
            if (lower_eq(peek(), "to")) next();
            while (pos < tokens.size() && !at_section()) {
                // optional row label "cN:"
                if (!peek().empty() && peek().back() == ':') next();
                RawRow row;
                parse_expr(row.terms);
                std::string rel = next();
                row.rel = rel == "<=" ? Relation::le : (rel == ">=" ? Relation::ge : Relation::eq);
                row.rhs = parse_number(next());
                raw_rows.push_back(std::move(row));
            }
        } else if (lower_eq(tok, "bounds")) {
            while (pos < tokens.size() && !at_section()) {
                double lo = parse_number(next());
                if (next() != "<=") throw std::invalid_argument("lp parse: bad bounds line");
                VarRef v = parse_var(next());
                if (next() != "<=") throw std::invalid_argument("lp parse: bad bounds line");
                double up = parse_number(next());
                if (v.binary) throw std::invalid_argument("lp parse: bounds on binary");
                xbounds.push_back({v.index, {lo, up}});
            }
        } else if (lower_eq(tok, "binaries") || lower_eq(tok, "binary")) {
            while (pos < tokens.size() && !at_section()) {
                VarRef v = parse_var(next());
                if (!v.binary) throw std::invalid_argument("lp parse: non-b name in binaries");
                binary_ids.push_back(v.index);
            }
        } else if (lower_eq(tok, "end")) {
            break;
        } else {
            throw std::invalid_argument("lp parse: unexpected token '" + tok + "'");
        }
    }

    auto scan_max = [&](const std::vector<Term>& ts) {
        for (const auto& t : ts) {
            if (t.var.index < 0) continue;
            (t.var.binary ? max_b : max_x) = std::max(t.var.binary ? max_b : max_x, t.var.index);
        }
    };
    scan_max(obj_terms);
    for (const auto& r : raw_rows) scan_max(r.terms);
    for (const auto& xb : xbounds) max_x = std::max(max_x, xb.first);
    for (long b : binary_ids) max_b = std::max(max_b, b);

    p.n_continuous = max_x + 1;
    p.n_binary = max_b + 1;
    p.objective.assign(std::size_t(p.n_vars()), 0.0);
    p.lower.assign(std::size_t(p.n_continuous), 0.0);
    p.upper.assign(std::size_t(p.n_continuous), 0.0);
    auto apply = [&](const std::vector<Term>& ts, std::vector<double>& dst) {
        for (const auto& t : ts) {
            if (t.var.index < 0) continue;
            long col = t.var.binary ? p.n_continuous + t.var.index : t.var.index;
            dst[std::size_t(col)] += t.coeff;
        }
    };
    apply(obj_terms, p.objective);
    for (const auto& xb : xbounds) {
        p.lower[std::size_t(xb.first)] = xb.second.first;
        p.upper[std::size_t(xb.first)] = xb.second.second;
    }
    for (const auto& r : raw_rows) {
        LinearConstraint row;
        row.coeffs.assign(std::size_t(p.n_vars()), 0.0);
        row.rel = r.rel;
        row.rhs = r.rhs;
        apply(r.terms, row.coeffs);
        p.constraints.push_back(std::move(row));
    }
    return p;
}

}  // namespace confreg::milp
