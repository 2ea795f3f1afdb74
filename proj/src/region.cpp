#include "confreg/region.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace confreg::region {

namespace {

constexpr double INF = std::numeric_limits<double>::infinity();

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("region: ") + msg);
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

long n_rows(const RegionSpec& spec) { return long(spec.constraints.size()); }

// Rows voted for by a solver assignment (binaries are snapped to exact 0/1).
std::vector<std::size_t> claimed_rows(const RegionSpec& spec,
                                      const std::vector<double>& assignment) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < spec.constraints.size(); ++i)
        if (assignment[spec.dim + i] > 0.5) rows.push_back(i);
    return rows;
}

// Deepest point of a fixed vote set: maximize the common margin m with
// A_i + m <= theta . x_i <= B_i - m over the box. Moves the witness off
// interval boundaries so the exact closed-interval recount cannot lose a
// vote to last-ulp rounding; m degenerates to 0 only when the intersection
// is a single touching point.
Vector center_witness(const RegionSpec& spec, const std::vector<std::size_t>& rows,
                      const std::vector<double>& fallback_theta) {
    if (rows.empty()) {
        Vector mid(spec.dim);
        for (std::size_t j = 0; j < spec.dim; ++j)
            mid[j] = 0.5 * (spec.box.lower[j] + spec.box.upper[j]);
        return mid;
    }
    milp::MilpProblem lp;
    lp.sense = milp::Sense::maximize;
    lp.n_continuous = long(spec.dim) + 1;  // theta, then the margin
    lp.n_binary = 0;
    lp.objective.assign(spec.dim + 1, 0.0);
    lp.objective[spec.dim] = 1.0;
    lp.lower = spec.box.lower;
    lp.upper = spec.box.upper;
    double cap = 1.0;
    for (std::size_t i : rows)
        cap = std::max(cap, 0.5 * (spec.constraints[i].upper - spec.constraints[i].lower));
    lp.lower.push_back(0.0);
    lp.upper.push_back(cap);
    for (std::size_t i : rows) {
        const RegionConstraint& c = spec.constraints[i];
        milp::LinearConstraint lo, hi;
        lo.coeffs.assign(c.x.begin(), c.x.end());
        lo.coeffs.push_back(-1.0);
        lo.rel = milp::Relation::ge;
        lo.rhs = c.lower;
        hi.coeffs.assign(c.x.begin(), c.x.end());
        hi.coeffs.push_back(1.0);
        hi.rel = milp::Relation::le;
        hi.rhs = c.upper;
        lp.constraints.push_back(std::move(lo));
        lp.constraints.push_back(std::move(hi));
    }
    milp::LpSolution sol = milp::solve_lp(lp);
    if (sol.status != milp::LpStatus::optimal) return fallback_theta;
    return Vector(sol.x.begin(), sol.x.begin() + long(spec.dim));
}

// Big-M soundness audit at solver precision: votes recounted directly from
// theta with the MILP feasibility tolerance, independent of the binary
// assignment. Anything beyond that tolerance means the encoding (or M) is
// broken and must fail loudly.
long tolerant_votes(const RegionSpec& spec, std::span<const double> theta) {
    const double ftol = milp::tolerances().feasibility;
    long votes = 0;
    for (const RegionConstraint& c : spec.constraints) {
        const double v = dot(std::span<const double>(c.x), theta);
        const double tol = ftol * std::max({1.0, std::fabs(c.lower), std::fabs(c.upper)});
        if (v >= c.lower - tol && v <= c.upper + tol) ++votes;
    }
    return votes;
}

void audit_or_throw(const RegionSpec& spec, std::span<const double> theta, const char* what) {
    if (tolerant_votes(spec, theta) < spec.k)
        throw std::runtime_error(std::string("region: ") + what +
                                 " failed the vote-count audit; big_m is unsound");
}

double box_corner_value(const RegionSpec& spec, const Vector& c, milp::Sense sense) {
    double v = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
        const bool take_upper = (sense == milp::Sense::maximize) == (c[j] >= 0.0);
        v += c[j] * (take_upper ? spec.box.upper[j] : spec.box.lower[j]);
    }
    return v;
}

}  // namespace

ReferenceBox ReferenceBox::cube(std::size_t dim, double half_width) {
    require(dim >= 1, "box dimension must be positive");
    require(std::isfinite(half_width) && half_width > 0.0,
            "box half width must be positive and finite");
    ReferenceBox box;
    box.lower.assign(dim, -half_width);
    box.upper.assign(dim, half_width);
    return box;
}

void ReferenceBox::validate(std::size_t dim) const {
    require(lower.size() == dim && upper.size() == dim, "box bounds must match the dimension");
    require(all_finite(lower) && all_finite(upper), "box bounds must be finite");
    for (std::size_t j = 0; j < dim; ++j)
        require(lower[j] <= upper[j], "box lower bound exceeds upper bound");
}

void RegionSpec::validate() const {
    require(dim >= 1, "dimension must be positive");
    require(!constraints.empty(), "constraint list must not be empty");
    for (const RegionConstraint& c : constraints) {
        require(c.x.size() == dim, "constraint input dimension mismatch");
        require(all_finite(c.x), "constraint inputs must be finite");
        require(std::isfinite(c.lower) && std::isfinite(c.upper), "interval must be finite");
        require(c.lower <= c.upper, "interval lower end exceeds upper end");
    }
    require(k >= 0 && k <= long(constraints.size()), "vote threshold outside [0, n]");
    require(std::isfinite(big_m) && big_m > 0.0, "big_m must be positive and finite");
    box.validate(dim);
}

RegionSpec build_region(const std::vector<conformal::PredictionInterval>& intervals,
                        const conformal::UnlabelledDataset& inputs,
                        const bounds::KSelection& selection, const ReferenceBox& box) {
    inputs.validate();
    require(!intervals.empty(), "interval list must not be empty");
    require(intervals.size() == inputs.inputs.rows, "intervals and inputs must align");
    require(selection.k >= 0, "vote threshold must be nonnegative");
    require(selection.k <= long(intervals.size()), "vote threshold exceeds the row count");
    box.validate(inputs.inputs.cols);

    RegionSpec spec;
    spec.dim = inputs.inputs.cols;
    spec.k = selection.k;
    spec.box = box;
    spec.constraints.reserve(intervals.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        require(std::isfinite(intervals[i].lower) && std::isfinite(intervals[i].upper),
                "intervals must be finite");
        require(intervals[i].lower <= intervals[i].upper, "interval lower end exceeds upper end");
        RegionConstraint c;
        auto row = inputs.inputs.row(i);
        c.x.assign(row.begin(), row.end());
        c.lower = intervals[i].lower;
        c.upper = intervals[i].upper;
        // sup over the box of |theta . x| decomposes per coordinate.
        double reach = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j)
            reach += std::max(std::fabs(box.lower[j] * c.x[j]), std::fabs(box.upper[j] * c.x[j]));
        worst = std::max(worst, reach + std::max(std::fabs(c.lower), std::fabs(c.upper)));
        spec.constraints.push_back(std::move(c));
    }
    spec.big_m = std::max(1.0, 1.1 * worst);
    spec.validate();
    return spec;
}

RegionSpec build_region(const std::vector<conformal::PredictionInterval>& intervals,
                        const conformal::UnlabelledDataset& inputs,
                        const bounds::KSelection& selection, double box_half_width) {
    return build_region(intervals, inputs, selection,
                        ReferenceBox::cube(inputs.inputs.cols, box_half_width));
}

Membership membership(const RegionSpec& spec, std::span<const double> theta) {
    spec.validate();
    require(theta.size() == spec.dim, "theta dimension mismatch");
    Membership out;
    for (const RegionConstraint& c : spec.constraints) {
        const double v = dot(std::span<const double>(c.x), theta);
        if (v >= c.lower && v <= c.upper) ++out.votes;
    }
    out.member = out.votes >= spec.k;
    return out;
}

milp::MilpProblem region_milp(const RegionSpec& spec, const Vector& objective,
                              milp::Sense sense) {
    spec.validate();
    require(objective.size() == spec.dim, "objective dimension mismatch");
    require(all_finite(objective), "objective must be finite");

    const long n = n_rows(spec);
    milp::MilpProblem p;
    p.sense = sense;
    p.n_continuous = long(spec.dim);
    p.n_binary = n;
    p.objective.assign(objective.begin(), objective.end());
    p.objective.resize(spec.dim + std::size_t(n), 0.0);
    p.lower = spec.box.lower;
    p.upper = spec.box.upper;
    p.constraints.reserve(2 * std::size_t(n) + 1);
    for (long i = 0; i < n; ++i) {
        const RegionConstraint& c = spec.constraints[std::size_t(i)];
        // a_i = 1 forces lower_i <= theta . x_i <= upper_i; a_i = 0 relaxes
        // both sides by M, wide enough to free theta anywhere in the box.
        milp::LinearConstraint lo, hi;
        lo.coeffs.assign(spec.dim + std::size_t(n), 0.0);
        std::copy(c.x.begin(), c.x.end(), lo.coeffs.begin());
        hi.coeffs = lo.coeffs;
        lo.coeffs[spec.dim + std::size_t(i)] = -spec.big_m;
        lo.rel = milp::Relation::ge;
        lo.rhs = c.lower - spec.big_m;
        hi.coeffs[spec.dim + std::size_t(i)] = spec.big_m;
        hi.rel = milp::Relation::le;
        hi.rhs = c.upper + spec.big_m;
        p.constraints.push_back(std::move(lo));
        p.constraints.push_back(std::move(hi));
    }
    milp::LinearConstraint vote;
    vote.coeffs.assign(spec.dim + std::size_t(n), 0.0);
    for (long i = 0; i < n; ++i) vote.coeffs[spec.dim + std::size_t(i)] = 1.0;
    vote.rel = milp::Relation::ge;
    vote.rhs = double(spec.k);
    p.constraints.push_back(std::move(vote));
    return p;
}

milp::MilpProblem emptiness_milp(const RegionSpec& spec) {
    // Same encoding without the vote row; the objective asks for the best
    // achievable vote count, so emptiness is just optimum < k.
    milp::MilpProblem p = region_milp(spec, Vector(spec.dim, 0.0), milp::Sense::maximize);
    p.constraints.pop_back();
    for (long i = 0; i < p.n_binary; ++i) p.objective[spec.dim + std::size_t(i)] = 1.0;
    return p;
}

EmptinessCheck is_empty(const RegionSpec& spec, long node_limit) {
    milp::MilpSolution sol = milp::solve_milp(emptiness_milp(spec), node_limit);
    EmptinessCheck out;

    auto accept_witness = [&](const std::vector<double>& assignment) {
        Vector fallback(assignment.begin(), assignment.begin() + long(spec.dim));
        out.witness = center_witness(spec, claimed_rows(spec, assignment), fallback);
        if (!membership(spec, out.witness).member)
            throw std::runtime_error(
                "region: non-empty witness failed the exact membership audit");
    };

    switch (sol.status) {
        case milp::MilpStatus::optimal:
            out.max_votes = std::lround(sol.value);
            out.empty = out.max_votes < spec.k;
            if (!out.empty) accept_witness(sol.assignment);
            return out;
        case milp::MilpStatus::infeasible:
            // All-zero votes are feasible anywhere in the box by construction.
            throw std::runtime_error(
                "region: emptiness search reported infeasible; big_m is unsound");
        case milp::MilpStatus::node_limit:
            break;
    }

    if (sol.has_incumbent) {
        out.max_votes = std::lround(sol.value);
        if (out.max_votes >= spec.k) {  // incumbent already proves non-emptiness
            accept_witness(sol.assignment);
            return out;
        }
        // Votes are integral, so a fractional open bound below k still
        // certifies emptiness.
        if (std::floor(sol.value + sol.bound_gap + 1e-9) < double(spec.k)) {
            out.empty = true;
            return out;
        }
    } else if (spec.k == 0) {
        accept_witness(std::vector<double>(spec.dim + spec.constraints.size(), 0.0));
        return out;
    }
    out.indeterminate = true;
    return out;
}

OptimizeResult optimize(const RegionSpec& spec, const Vector& c, milp::Sense sense,
                        long node_limit) {
    require(std::any_of(c.begin(), c.end(), [](double v) { return v != 0.0; }),
            "objective must not be all zero");
    milp::MilpSolution sol = milp::solve_milp(region_milp(spec, c, sense), node_limit);

    OptimizeResult out;
    switch (sol.status) {
        case milp::MilpStatus::infeasible:
            out.status = RegionStatus::empty;
            out.value = std::numeric_limits<double>::quiet_NaN();
            return out;
        case milp::MilpStatus::node_limit:
            out.status = RegionStatus::indeterminate;
            if (sol.has_incumbent) {
                out.value = sol.value;
                out.argument.assign(sol.assignment.begin(),
                                    sol.assignment.begin() + long(spec.dim));
            }
            return out;
        case milp::MilpStatus::optimal:
            break;
    }

    out.value = sol.value;
    out.argument.assign(sol.assignment.begin(), sol.assignment.begin() + long(spec.dim));
    audit_or_throw(spec, out.argument, "optimizer");
    const double box_only = box_corner_value(spec, c, sense);
    const bool clamped = std::fabs(out.value - box_only) <= 1e-7 * std::max(1.0, std::fabs(box_only));
    out.status = clamped ? RegionStatus::box_clamped : RegionStatus::optimal;
    return out;
}

std::vector<CoordinateInterval> coordinate_intervals(const RegionSpec& spec, long node_limit) {
    spec.validate();
    std::vector<CoordinateInterval> out;
    out.reserve(spec.dim);
    for (std::size_t j = 0; j < spec.dim; ++j) {
        Vector c(spec.dim, 0.0);
        c[j] = 1.0;
        OptimizeResult lo = optimize(spec, c, milp::Sense::minimize, node_limit);
        OptimizeResult hi = optimize(spec, c, milp::Sense::maximize, node_limit);
        for (const OptimizeResult* r : {&lo, &hi}) {
            if (r->status == RegionStatus::empty)
                throw std::runtime_error("region: coordinate intervals of an empty region");
            if (r->status == RegionStatus::indeterminate)
                throw std::runtime_error(
                    "region: coordinate interval solve hit the node limit");
        }
        CoordinateInterval iv;
        iv.coordinate = long(j);
        iv.lower = lo.status == RegionStatus::box_clamped ? -INF : lo.value;
        iv.upper = hi.status == RegionStatus::box_clamped ? INF : hi.value;
        out.push_back(iv);
    }
    return out;
}

void write_region_json(std::ostream& out, const RegionSpec& spec) {
    spec.validate();
    nlohmann::json j;
    j["dim"] = spec.dim;
    j["k"] = spec.k;
    j["big_m"] = spec.big_m;
    j["box"]["lower"] = spec.box.lower;
    j["box"]["upper"] = spec.box.upper;
    j["constraints"] = nlohmann::json::array();
    for (const RegionConstraint& c : spec.constraints)
        j["constraints"].push_back({{"x", c.x}, {"lower", c.lower}, {"upper", c.upper}});
    out << j.dump(2) << '\n';
}

RegionSpec read_region_json(std::istream& in) {
    const nlohmann::json j = nlohmann::json::parse(in);
    RegionSpec spec;
    spec.dim = j.at("dim").get<std::size_t>();
    spec.k = j.at("k").get<long>();
    spec.big_m = j.at("big_m").get<double>();
    spec.box.lower = j.at("box").at("lower").get<Vector>();
    spec.box.upper = j.at("box").at("upper").get<Vector>();
    for (const nlohmann::json& c : j.at("constraints")) {
        RegionConstraint rc;
        rc.x = c.at("x").get<Vector>();
        rc.lower = c.at("lower").get<double>();
        rc.upper = c.at("upper").get<double>();
        spec.constraints.push_back(std::move(rc));
    }
    spec.validate();
    return spec;
}

}  // namespace confreg::region
