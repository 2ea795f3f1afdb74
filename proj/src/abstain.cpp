#include "confreg/abstain.hpp"

#include "confreg/rng.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace confreg::abstain {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("abstain: ") + msg);
}

void check_noise(const bounds::NoiseAssumption& noise) {
    require(std::isfinite(noise.b) && noise.b > 0.0 && noise.b <= 0.5,
            "noise split mass must lie in (0, 0.5]");
}

}  // namespace

Decision decide(const AbstentionRule& rule, std::span<const double> x) {
    require(rule.width_threshold >= 0.0, "width threshold must be nonnegative");
    conformal::PredictionInterval interval = conformal::predict_interval(rule.calibration, x);
    Decision d;
    d.interval_width = interval.width();
    if (d.interval_width <= rule.width_threshold) {
        d.predict = true;
        d.value = 0.5 * (interval.lower + interval.upper);
    }
    return d;
}

ErrorBoundCheck error_bound_check(const conformal::SplitCalibration& cal,
                                  const bounds::NoiseAssumption& noise,
                                  const conformal::LabelledDataset& test,
                                  const Vector& noise_free_outputs) {
    check_noise(noise);
    test.validate();
    require(noise_free_outputs.size() == test.outputs.size(),
            "noise-free outputs must align with the test set");
    const long n = long(test.outputs.size());

    long hits = 0;
    for (long i = 0; i < n; ++i) {
        const double width =
            conformal::predict_interval(cal, test.inputs.row(std::size_t(i))).width();
        hits += std::fabs(test.outputs[std::size_t(i)] - noise_free_outputs[std::size_t(i)]) <=
                width;
    }

    ErrorBoundCheck out;
    out.n_test = n;
    out.empirical_rate = double(hits) / double(n);
    out.bound = std::max(0.0, 1.0 - (1.0 + 1.0 / noise.b) * cal.alpha);
    return out;
}

SweepRow evaluate_threshold(const conformal::SplitCalibration& cal,
                            const conformal::LabelledDataset& test, double threshold) {
    test.validate();
    AbstentionRule rule{cal, threshold};
    SweepRow row;
    row.threshold = threshold;
    row.n_points = long(test.outputs.size());
    double sq_sum = 0.0;
    for (long i = 0; i < row.n_points; ++i) {
        Decision d = decide(rule, test.inputs.row(std::size_t(i)));
        if (!d.predict) continue;
        ++row.n_accepted;
        const double err = d.value - test.outputs[std::size_t(i)];
        sq_sum += err * err;
    }
    row.rejection_rate = double(row.n_points - row.n_accepted) / double(row.n_points);
    if (row.n_accepted > 0) row.mse_accepted = sq_sum / double(row.n_accepted);
    return row;
}

std::vector<SweepRow> threshold_sweep(const conformal::SplitCalibration& cal,
                                      const conformal::LabelledDataset& test,
                                      const Vector& thresholds) {
    std::vector<SweepRow> rows;
    rows.reserve(thresholds.size());
    for (double t : thresholds) rows.push_back(evaluate_threshold(cal, test, t));
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "threshold,rejection_rate,mse_accepted\n";
    for (const SweepRow& r : rows)
        out << format_double(r.threshold) << ',' << format_double(r.rejection_rate) << ','
            << format_double(r.mse_accepted) << '\n';
}

SineScenario sample_sine_scenario(long n_train, long n_test, std::uint64_t seed) {
    require(n_train >= 1 && n_test >= 1, "scenario sizes must be positive");
    SplitMix64 rng(seed);
    SineScenario sc;
    sc.train.inputs = Matrix(std::size_t(n_train), 2);
    sc.train.outputs.resize(std::size_t(n_train));
    sc.test.inputs = Matrix(std::size_t(n_test), 2);
    sc.test.outputs.resize(std::size_t(n_test));
    sc.test_noise_free.resize(std::size_t(n_test));

    Vector train_x(static_cast<std::size_t>(n_train));
    Vector test_x(static_cast<std::size_t>(n_test));
    for (double& x : train_x) x = rng.uniform(-3.0, 3.0);
    for (double& x : test_x) x = rng.uniform(-3.0, 3.0);

    constexpr double pi = 3.14159265358979323846;
    for (long i = 0; i < n_train; ++i) {
        const double x = train_x[std::size_t(i)];
        sc.train.inputs(std::size_t(i), 0) = x;
        sc.train.inputs(std::size_t(i), 1) = std::sin(x);
        sc.train.outputs[std::size_t(i)] = std::sin(x) + pi * std::fabs(x) / 20.0 * rng.normal();
    }
    for (long i = 0; i < n_test; ++i) {
        const double x = test_x[std::size_t(i)];
        sc.test.inputs(std::size_t(i), 0) = x;
        sc.test.inputs(std::size_t(i), 1) = std::sin(x);
        sc.test_noise_free[std::size_t(i)] = std::sin(x);
        sc.test.outputs[std::size_t(i)] = std::sin(x) + pi * std::fabs(x) / 20.0 * rng.normal();
    }
    return sc;
}

}  // namespace confreg::abstain
