#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include "confreg/core.hpp"

// Split conformal prediction with the absolute-residual score: fit a linear
// predictor on a random training split, take calibration scores
// |y - f(x)| on the rest, and widen point predictions by the calibrated
// quantile radius.

namespace confreg::conformal {

struct LabelledDataset {
    Matrix inputs;   // n_obs x d
    Vector outputs;  // n_obs
    void validate() const;  // throws std::invalid_argument
};

struct UnlabelledDataset {
    Matrix inputs;  // n x d
    void validate() const;
};

struct SplitCalibration {
    Vector predictor;           // d coefficients, then the intercept if fitted
    bool intercept = false;
    Vector calibration_scores;  // ascending
    double alpha = 0.1;
    double quantile_radius = 0.0;

    long d() const { return long(predictor.size()) - (intercept ? 1 : 0); }
};

struct PredictionInterval {
    double lower = 0.0;
    double upper = 0.0;
    double width() const { return upper - lower; }
};

// Least squares through a rank-revealing column-pivoted QR. Throws
// SingularDesignError when the design (plus intercept column, if requested)
// is rank deficient at relative threshold 1e-10.
Vector fit_least_squares(const LabelledDataset& data, bool intercept = false);

// 1-indexed calibration rank ceil((1-alpha)(n_cal+1)). Throws
// InfeasibleQuantileError when the rank exceeds n_cal; the error carries the
// minimal workable n_cal = ceil((1-alpha)/alpha).
long quantile_rank(double alpha, long n_cal);

// Uniformly random train/calibration partition under the seed: the first
// floor(split_fraction * n_obs) entries of a Fisher-Yates shuffle train the
// predictor, the rest produce scores.
SplitCalibration split_calibrate(const LabelledDataset& data, double alpha,
                                 double split_fraction = 0.5, std::uint64_t seed = 0,
                                 bool intercept = false);

double predict_value(const SplitCalibration& cal, std::span<const double> x);

// [f(x) - q, f(x) + q]
PredictionInterval predict_interval(const SplitCalibration& cal, std::span<const double> x);

std::vector<PredictionInterval> intervals_for(const SplitCalibration& cal,
                                              const UnlabelledDataset& data);

// CSV: one header row; every column is numeric; for labelled data the last
// column is the output. Values are written in shortest-exact form and
// round-trip bit-identically.
LabelledDataset read_labelled_csv(std::istream& in);
UnlabelledDataset read_unlabelled_csv(std::istream& in);
void write_labelled_csv(std::ostream& out, const LabelledDataset& data);
void write_unlabelled_csv(std::ostream& out, const UnlabelledDataset& data);

}  // namespace confreg::conformal
