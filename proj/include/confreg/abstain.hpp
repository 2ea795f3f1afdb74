#pragma once

#include "confreg/bounds.hpp"
#include "confreg/conformal.hpp"
#include "confreg/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

// Prediction with a rejection option: predict when the conformal interval is
// narrow, abstain when it is wide. The interval width doubles as a certified
// uncertainty estimate, which yields a finite-sample bound on how far the
// noisy output can sit from the noise-free regression value on any input.

namespace confreg::abstain {

struct AbstentionRule {
    conformal::SplitCalibration calibration;
    double width_threshold = 0.0;  // nonnegative; +infinity accepts everything
};

struct Decision {
    bool predict = false;
    double value = std::numeric_limits<double>::quiet_NaN();  // midpoint when predicting
    double interval_width = 0.0;                              // reported either way
};

// Predicts the interval midpoint when the conformal width is <= the
// threshold, abstains otherwise. Pure function of (rule, x).
Decision decide(const AbstentionRule& rule, std::span<const double> x);

struct ErrorBoundCheck {
    double empirical_rate = 0.0;  // frequency of |Y - f*| <= interval width
    double bound = 0.0;           // 1 - (1 + 1/b) alpha, clamped at 0
    long n_test = 0;
};

// Checks the abstention guarantee on synthetic data where the noise-free
// values f* are known: whenever the interval captures both the noisy output
// and f*, their distance is at most the interval width, so the event holds
// with probability >= 1 - alpha - alpha/b.
ErrorBoundCheck error_bound_check(const conformal::SplitCalibration& cal,
                                  const bounds::NoiseAssumption& noise,
                                  const conformal::LabelledDataset& test,
                                  const Vector& noise_free_outputs);

struct SweepRow {
    double threshold = 0.0;
    double rejection_rate = 0.0;
    double mse_accepted = std::numeric_limits<double>::quiet_NaN();  // NaN when all rejected
    long n_points = 0;
    long n_accepted = 0;
};

// Applies one threshold to every row of a test set; accepted midpoint
// predictions are scored against the set's outputs.
SweepRow evaluate_threshold(const conformal::SplitCalibration& cal,
                            const conformal::LabelledDataset& test, double threshold);

std::vector<SweepRow> threshold_sweep(const conformal::SplitCalibration& cal,
                                      const conformal::LabelledDataset& test,
                                      const Vector& thresholds);

// CSV with header threshold,rejection_rate,mse_accepted.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// Heteroskedastic sine benchmark: x ~ Unif[-3, 3] and
// y = sin(x) + (pi |x| / 20) xi with xi standard normal, so the noise level
// grows away from the origin. The base predictor is least squares on the
// (x, sin x) feature pair. Draw order: train x, test x, train xi, test xi.
struct SineScenario {
    conformal::LabelledDataset train;  // features (x, sin x)
    conformal::LabelledDataset test;
    Vector test_noise_free;  // sin(x) on the test rows
};

SineScenario sample_sine_scenario(long n_train, long n_test, std::uint64_t seed);

}  // namespace confreg::abstain
