#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

// Small self-contained mixed-integer linear programming layer: a dense
// bounded-variable primal simplex wrapped by deterministic best-bound
// branch and bound over binary variables. Designed for the region problems
// this project produces (tens of binaries, a handful of continuous
// variables), not as a general-purpose solver.

namespace confreg::milp {

enum class Relation { le, ge, eq };
enum class Sense { minimize, maximize };

struct LinearConstraint {
    std::vector<double> coeffs;  // one per variable, continuous block first
    Relation rel = Relation::le;
    double rhs = 0.0;
};

struct MilpProblem {
    Sense sense = Sense::minimize;
    long n_continuous = 0;
    long n_binary = 0;                  // binaries live in [0, 1], integral
    std::vector<double> objective;      // size n_continuous + n_binary
    std::vector<double> lower, upper;   // finite bounds for continuous block
    std::vector<LinearConstraint> constraints;

    long n_vars() const { return n_continuous + n_binary; }
    void validate() const;  // throws std::invalid_argument on malformed input
};

// One shared record of the numeric tolerances; tests pin against these.
struct SolverTolerances {
    double feasibility = 1e-7;     // MILP-level constraint satisfaction
    double integrality = 1e-7;     // |x - round(x)| for binaries
    double pruning = 1e-9;         // incumbent +/- this prunes equal nodes
    double lp_feasibility = 1e-9;  // scaled residual at LP optimum
    double reduced_cost = 1e-9;    // dual feasibility threshold
};
const SolverTolerances& tolerances();

enum class LpStatus { optimal, infeasible };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> x;          // full assignment (continuous + binary)
    double infeasibility = 0.0;     // phase-1 residual when infeasible
};

// Solves the LP relaxation (binaries relaxed to their current bounds).
// bin_lower/bin_upper override the [0, 1] binary box when branching; pass
// empty vectors for the root relaxation.
LpSolution solve_lp(const MilpProblem& problem,
                    const std::vector<double>& bin_lower = {},
                    const std::vector<double>& bin_upper = {});

enum class MilpStatus { optimal, infeasible, node_limit };

struct MilpSolution {
    MilpStatus status = MilpStatus::infeasible;
    bool has_incumbent = false;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> assignment;  // binaries snapped to exact 0/1
    long node_count = 0;             // nodes whose relaxation was solved
    double bound_gap = 0.0;          // |incumbent - best open bound| at stop
};

// Deterministic branch and bound: most-fractional branching (ties to the
// lowest index), depth-first plunge until the first incumbent, best-bound
// afterwards. Every incumbent is re-verified against the original
// constraints before it is accepted.
MilpSolution solve_milp(const MilpProblem& problem, long node_limit = 200000);

// Fixed-format LP text (CPLEX LP dialect), full round-trip precision:
// numbers are written with shortest-exact formatting and reparse to
// bit-identical doubles.
void write_lp_text(std::ostream& out, const MilpProblem& problem);
MilpProblem read_lp_text(std::istream& in);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace confreg::milp
