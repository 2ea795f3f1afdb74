#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "confreg/abstain.hpp"
#include "confreg/bounds.hpp"
#include "confreg/conformal.hpp"
#include "confreg/core.hpp"
#include "confreg/synthetic.hpp"

// Seeded Monte Carlo experiment harness. Trials are independent units pulled
// from an atomic counter by a small worker pool; every random quantity in
// trial t derives from mix_seed(master_seed, t), so trials.csv and
// summary.csv are byte-identical for any worker count. Wall-clock
// measurements go to a separate timings.csv, which carries no such promise.

namespace confreg::experiments {

enum class ExperimentKind {
    coverage_table,
    width_table,
    rejection_test,
    noise_free_vs_noisy,
    coverage_curve,
    abstention_sweep,
};

std::string kind_name(ExperimentKind kind);
ExperimentKind kind_from_name(const std::string& name);
std::string noise_name(synthetic::NoiseKind kind);
synthetic::NoiseKind noise_from_name(const std::string& name);
bounds::KMethod method_from_name(const std::string& name);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::coverage_table;
    // theta_seed / data_seed inside the scenario config are ignored: every
    // trial reseeds them from (seed, trial index).
    synthetic::ScenarioConfig scenario;
    std::vector<bounds::KMethod> methods = {
        bounds::KMethod::markov, bounds::KMethod::worst_case,
        bounds::KMethod::split, bounds::KMethod::pac};
    double alpha = 0.1;
    double beta = 0.1;
    double delta = 0.1;
    bounds::NoiseAssumption noise_assumption{0.5, true};
    long trials = 100;
    long workers = 1;
    std::uint64_t seed = 1;
    double split_fraction = 0.5;
    double box_half_width = 100.0;
    long test_points = 1000;  // fresh-batch size for noise_free / abstention runs
    Vector thresholds;        // abstention grid; empty means 0, 0.25, ..., 3
    Vector pac_deltas;        // curve delta sweep; empty means .01 .05 .1 .2 .5
    long node_limit = 200000;
    std::string out_dir = "out";

    // Calibration rows left after the training split.
    long n_cal() const;
    void validate() const;  // throws std::invalid_argument
};

// One JSON document per experiment; unknown keys are rejected. Every field
// is optional and defaults as above. The bookkeeping fields the runner adds
// to meta.json (version, records, failures) are accepted and ignored, so a
// finished run's meta.json replays directly as a config.
ExperimentSpec read_experiment_json(std::istream& in);
void write_experiment_json(std::ostream& out, const ExperimentSpec& spec);

// One coverage/width measurement: method applied to the trial's scenario.
// votes counts interval memberships of the true parameter directly from the
// calibrated intervals, never from a solver, so covered == (votes >= k) by
// construction and any solver output can be audited against it.
struct TrialRecord {
    long trial = 0;
    std::uint64_t seed = 0;
    bounds::KMethod method = bounds::KMethod::split;
    long k = 0;
    long votes = 0;
    bool covered = false;
    Vector widths;  // per-coordinate region widths; empty when never solved for
    double solve_seconds = 0.0;
};

// One emptiness check of the region built from augmented-feature intervals.
struct RejectionRecord {
    long trial = 0;
    std::uint64_t seed = 0;
    bool null_control = false;  // true: data generated exactly linear
    bounds::KMethod method = bounds::KMethod::split;
    long k = 0;
    bool rejected = false;  // region empty; meaningful when !indeterminate
    bool indeterminate = false;
    long max_votes = 0;  // best vote count the search certified
    double solve_seconds = 0.0;
};

// Coverage of one calibration by one fresh batch, measured twice: against
// the noisy outputs and against the noise-free regression values.
struct PairedCoverageRecord {
    long trial = 0;
    std::uint64_t seed = 0;
    double noisy = 0.0;
    double noise_free = 0.0;
    bool noisy_win = false;  // noisy strictly beat noise-free (the anomaly)
};

// One sine-benchmark calibration. The absolute-residual interval has one
// width for every input, so the whole threshold sweep folds from these rows.
struct AbstentionRecord {
    long trial = 0;
    std::uint64_t seed = 0;
    double interval_width = 0.0;
    double mse = 0.0;         // mean squared midpoint error over the test batch
    double error_rate = 0.0;  // empirical P(|Y - f*(X)| <= interval width)
};

struct MethodSummary {
    bounds::KMethod method = bounds::KMethod::split;
    long trials = 0;
    double mean_k = 0.0;
    double coverage = 0.0;           // fraction of trials with covered set
    double mean_width = 0.0;         // mean over finite widths; NaN when none
    double clamp_rate = 0.0;         // fraction of coordinates box-clamped
    double mean_solve_seconds = 0.0;
};

struct RejectionSummary {
    bool null_control = false;
    bounds::KMethod method = bounds::KMethod::split;
    long trials = 0;
    long decided = 0;
    double rejection_rate = 0.0;  // among decided trials; NaN when none decided
    double indeterminate_rate = 0.0;
};

struct NoiseFreeSummary {
    long trials = 0;
    double mean_noisy = 0.0;
    double mean_noise_free = 0.0;
    long losses = 0;  // trials where noisy coverage strictly beat noise-free
};

// Pure folds from persisted rows to summary rows; the runners use exactly
// these, so every summary number is recomputable from trials.csv.
std::vector<MethodSummary> summarize_trials(const std::vector<TrialRecord>& records);
std::vector<RejectionSummary> summarize_rejections(const std::vector<RejectionRecord>& records);
NoiseFreeSummary summarize_paired(const std::vector<PairedCoverageRecord>& records);
std::vector<abstain::SweepRow> sweep_from_records(const std::vector<AbstentionRecord>& records,
                                                  const Vector& thresholds, long points_per_trial);

struct CoverageTableResult {
    std::vector<TrialRecord> records;
    std::vector<MethodSummary> summary;
    long failures = 0;  // trials dropped whole when any step threw
    std::string first_error;
};

struct WidthTableResult {
    std::vector<TrialRecord> records;
    std::vector<MethodSummary> summary;
    long failures = 0;
    std::string first_error;
};

struct RejectionResult {
    std::vector<RejectionRecord> records;
    std::vector<RejectionSummary> summary;
    long failures = 0;
    std::string first_error;
};

struct NoiseFreeResult {
    std::vector<PairedCoverageRecord> records;
    NoiseFreeSummary summary;
    long failures = 0;
    std::string first_error;
};

struct AbstentionResult {
    std::vector<AbstentionRecord> records;
    std::vector<abstain::SweepRow> sweep;
    double error_bound = 0.0;      // 1 - (1 + 1/b) alpha, floored at 0
    double mean_error_rate = 0.0;
    long failures = 0;
    std::string first_error;
};

struct CurveResult {
    std::vector<bounds::CurveRow> curve;  // all methods at the spec's delta
    struct DeltaRow {
        double delta = 0.0;
        long k = 0;
        double coverage = 0.0;
    };
    std::vector<DeltaRow> pac_sweep;  // pac rows per delta in pac_deltas
};

// Per trial: sample a scenario, split-calibrate on the labelled rows, count
// the true parameter's interval votes over the unlabelled batch, and compare
// against each method's threshold. No region is ever built.
CoverageTableResult run_coverage_table(const ExperimentSpec& spec);

// Per trial and method: assemble the region and measure its coordinate
// intervals over the reference box. Widths of box-clamped coordinates are
// infinite and excluded from mean_width.
WidthTableResult run_width_table(const ExperimentSpec& spec);

// Linearity test: outputs follow the sine-perturbed model, the predictor is
// fit on inputs augmented with the sine feature, and the region is built
// over the original coordinates. Rejects when the region is empty. Runs the
// exactly-linear null control alongside with the same seeds; its rejection
// rate is bounded by beta. Throws when more than 5% of the emptiness checks
// come back indeterminate.
RejectionResult run_rejection_test(const ExperimentSpec& spec);

// Per trial: calibrate once, then score a fresh test batch twice, against
// noisy outputs and against the noise-free values, with the same intervals.
NoiseFreeResult run_noise_free_vs_noisy(const ExperimentSpec& spec);

// Guaranteed-coverage curves for k = 0..n, plus the pac curve re-run at each
// delta in pac_deltas. Deterministic; no trials.
CurveResult run_coverage_curve(const ExperimentSpec& spec);

// Sine-benchmark abstention: per trial, calibrate and record the interval
// width, test-batch mse, and empirical noise-proximity rate, then fold the
// threshold sweep across trials.
AbstentionResult run_abstention_sweep(const ExperimentSpec& spec);

// Fraction of rows whose noisy / noise-free output lands in the calibrated
// interval at the row's input. weights, when given, hold one nonnegative
// mass per row; empty means uniform.
struct PairedCoverage {
    double noisy = 0.0;
    double noise_free = 0.0;
};
PairedCoverage paired_coverage(const conformal::SplitCalibration& cal,
                               const conformal::UnlabelledDataset& inputs,
                               const Vector& noisy, const Vector& noise_free,
                               const Vector& weights = {});

// CSV emitters. Booleans print as 0/1, doubles in shortest-exact form,
// infinities as inf. Width columns appear only when dim > 0.
void write_trials_csv(std::ostream& out, const std::vector<TrialRecord>& records, long dim);
void write_rejections_csv(std::ostream& out, const std::vector<RejectionRecord>& records);
void write_paired_csv(std::ostream& out, const std::vector<PairedCoverageRecord>& records);
void write_abstention_csv(std::ostream& out, const std::vector<AbstentionRecord>& records);

struct RunOutput {
    std::vector<std::string> files;  // names written under out_dir
    std::string summary_csv;         // contents of the summary artifact
    std::string summary_json;        // same rows as a JSON array
};

// Runs the spec's experiment and writes its artifacts under out_dir,
// creating the directory if needed: meta.json (resolved config + version +
// failure counts) plus per kind trials.csv, summary.csv, timings.csv,
// curve.csv, pac_deltas.csv, sweep.csv. emit == "json" additionally writes
// summary.json.
RunOutput run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                         const std::string& emit = "csv");

}  // namespace confreg::experiments
