#pragma once

#include "confreg/bounds.hpp"
#include "confreg/conformal.hpp"
#include "confreg/core.hpp"
#include "confreg/milp.hpp"

#include <iosfwd>
#include <span>
#include <vector>

// Confidence region for the parameter of a linear model: the set of theta
// whose predictions land inside at least k of n per-input intervals. Encoded
// as a mixed-integer program with one indicator per interval; all
// optimization happens inside a finite reference box because the region
// itself is unbounded whenever d > 1.

namespace confreg::region {

struct RegionConstraint {
    Vector x;      // input row, length dim
    double lower;  // interval for theta . x, closed on both ends
    double upper;
};

struct ReferenceBox {
    Vector lower;
    Vector upper;

    static ReferenceBox cube(std::size_t dim, double half_width = 100.0);
    void validate(std::size_t dim) const;
};

struct RegionSpec {
    std::vector<RegionConstraint> constraints;
    long k = 0;
    double big_m = 0.0;
    std::size_t dim = 0;
    ReferenceBox box;

    void validate() const;
};

// Assembles the region from aligned intervals and inputs. big_m is derived
// from the reference box: 1.1 * max over constraints of
// (sup over the box of |theta . x_i| + max(|lower_i|, |upper_i|)), floored
// at 1. Every solve re-audits its incumbent against exact vote counting, so
// an undersized M cannot silently corrupt results.
RegionSpec build_region(const std::vector<conformal::PredictionInterval>& intervals,
                        const conformal::UnlabelledDataset& inputs,
                        const bounds::KSelection& selection,
                        const ReferenceBox& box);
RegionSpec build_region(const std::vector<conformal::PredictionInterval>& intervals,
                        const conformal::UnlabelledDataset& inputs,
                        const bounds::KSelection& selection,
                        double box_half_width = 100.0);

struct Membership {
    bool member = false;
    long votes = 0;
};

// Exact vote count: closed-interval checks on theta . x_i, no tolerance.
Membership membership(const RegionSpec& spec, std::span<const double> theta);

enum class RegionStatus { optimal, empty, box_clamped, indeterminate };

struct EmptinessCheck {
    bool empty = false;  // meaningful only when !indeterminate
    bool indeterminate = false;
    long max_votes = 0;  // best vote count found (a lower bound if indeterminate)
    Vector witness;      // member point when the region is non-empty
};

// Maximizes the achievable vote count over the box; the region is empty iff
// that optimum falls short of k. A node-limited search still decides the
// question when its incumbent already reaches k (non-empty) or its best
// open bound cannot (empty); otherwise the check is indeterminate.
EmptinessCheck is_empty(const RegionSpec& spec, long node_limit = 200000);

struct OptimizeResult {
    RegionStatus status = RegionStatus::indeterminate;
    double value = 0.0;  // meaningful for optimal and box_clamped
    Vector argument;     // optimizer, meaningful for optimal and box_clamped
};

// Optimum of c . theta over the region intersected with the box.
// box_clamped means the value coincides (within 1e-7 relative) with the
// box-only optimum: the region does not constrain this direction inside the
// box, so the true region optimum lies at or beyond the box edge.
OptimizeResult optimize(const RegionSpec& spec, const Vector& c, milp::Sense sense,
                        long node_limit = 200000);

struct CoordinateInterval {
    long coordinate = 0;
    double lower = 0.0;  // -infinity when the region is unbounded below
    double upper = 0.0;  // +infinity when unbounded above
};

// Per-coordinate min and max over the region: 2 * dim optimize calls.
// box_clamped endpoints are reported as infinities. Throws when the region
// is empty or any solve is indeterminate.
std::vector<CoordinateInterval> coordinate_intervals(const RegionSpec& spec,
                                                     long node_limit = 200000);

// The underlying mixed-integer encodings, exposed for external-solver
// cross-validation through the LP-format writer.
milp::MilpProblem region_milp(const RegionSpec& spec, const Vector& objective,
                              milp::Sense sense);
milp::MilpProblem emptiness_milp(const RegionSpec& spec);

void write_region_json(std::ostream& out, const RegionSpec& spec);
RegionSpec read_region_json(std::istream& in);

}  // namespace confreg::region
