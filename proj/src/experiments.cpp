#include "confreg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "confreg/region.hpp"
#include "confreg/rng.hpp"

namespace confreg::experiments {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("experiments: " + msg);
}

// Sub-stream indices hung off each trial seed. The values are arbitrary but
// frozen: changing them reshuffles every published artifact.
enum SeedSlot : std::uint64_t {
    slot_theta = 1,
    slot_data = 2,
    slot_split = 3,
    slot_markov = 4,
    slot_test_batch = 5,
    slot_sine = 6,
};

std::uint64_t trial_seed(const ExperimentSpec& spec, long t) {
    return mix_seed(spec.seed, std::uint64_t(t));
}

// Runs body(t) for t in [0, trials) on min(workers, trials) threads pulling
// trial indices from a shared counter. body must not throw: each trial
// catches into its own slot.
template <typename Body>
void parallel_trials(long trials, long workers, Body&& body) {
    workers = std::max(1L, std::min(workers, trials));
    if (workers == 1) {
        for (long t = 0; t < trials; ++t) body(t);
        return;
    }
    std::atomic<long> next{0};
    auto loop = [&] {
        for (;;) {
            long t = next.fetch_add(1, std::memory_order_relaxed);
            if (t >= trials) return;
            body(t);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (long w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& th : pool) th.join();
}

// One preallocated slot per trial; workers never touch each other's slot,
// so the fold below reads them in trial order without synchronization.
template <typename Row>
struct TrialSlot {
    std::vector<Row> rows;
    std::string error;
    bool failed = false;
};

template <typename Row>
long fold_slots(std::vector<TrialSlot<Row>>& slots, std::vector<Row>& out,
                std::string& first_error) {
    long failures = 0;
    for (auto& slot : slots) {
        if (slot.failed) {
            ++failures;
            if (first_error.empty()) first_error = slot.error;
            continue;
        }
        for (auto& row : slot.rows) out.push_back(std::move(row));
    }
    return failures;
}

// More than 1% of trials failing voids the run.
void check_failures(long failures, long trials, const std::string& first_error) {
    if (failures * 100 > trials) {
        throw std::runtime_error("experiments: " + std::to_string(failures) + " of " +
                                 std::to_string(trials) +
                                 " trials failed; first error: " + first_error);
    }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Thresholds that do not depend on trial randomness, computed once per run.
std::map<bounds::KMethod, bounds::KSelection> static_selections(const ExperimentSpec& spec) {
    std::map<bounds::KMethod, bounds::KSelection> out;
    const long n = spec.scenario.n;
    const long n_cal = spec.n_cal();
    const double alpha_prime = bounds::noise_free_alpha(spec.alpha, spec.noise_assumption);
    for (auto m : spec.methods) {
        switch (m) {
            case bounds::KMethod::markov:
                break;  // randomized per trial
            case bounds::KMethod::worst_case:
                out.emplace(m, bounds::k_worst_case(n, alpha_prime, spec.beta));
                break;
            case bounds::KMethod::split:
                out.emplace(m, bounds::k_split(n, n_cal, spec.alpha, spec.beta,
                                               spec.noise_assumption));
                break;
            case bounds::KMethod::pac:
                out.emplace(m, bounds::k_pac(n, n_cal, spec.alpha, spec.beta, spec.delta,
                                             spec.noise_assumption, false));
                break;
        }
    }
    return out;
}

bounds::KSelection selection_for(const ExperimentSpec& spec,
                                 const std::map<bounds::KMethod, bounds::KSelection>& cached,
                                 bounds::KMethod m, std::uint64_t markov_seed) {
    if (m == bounds::KMethod::markov) {
        const double alpha_prime = bounds::noise_free_alpha(spec.alpha, spec.noise_assumption);
        return bounds::k_markov(spec.scenario.n, alpha_prime, spec.beta, markov_seed);
    }
    return cached.at(m);
}

synthetic::Scenario trial_scenario(const ExperimentSpec& spec, std::uint64_t tseed,
                                   bool nonlinear) {
    synthetic::ScenarioConfig cfg = spec.scenario;
    cfg.nonlinear = nonlinear;
    cfg.theta_seed = mix_seed(tseed, slot_theta);
    cfg.data_seed = mix_seed(tseed, slot_data);
    return synthetic::sample_scenario(cfg);
}

conformal::SplitCalibration calibrate(const ExperimentSpec& spec, Matrix inputs, Vector outputs,
                                      std::uint64_t tseed) {
    conformal::LabelledDataset train{std::move(inputs), std::move(outputs)};
    return conformal::split_calibrate(train, spec.alpha, spec.split_fraction,
                                      mix_seed(tseed, slot_split));
}

// Interval-membership votes of theta over a batch. The interval at row i is
// centered on the calibrated prediction at predict_rows.row(i) while theta
// votes through vote_rows.row(i); the two matrices differ only when the
// predictor runs on augmented features.
long truth_votes(const conformal::SplitCalibration& cal, const Matrix& predict_rows,
                 const Matrix& vote_rows, const Vector& theta) {
    long votes = 0;
    for (std::size_t i = 0; i < vote_rows.rows; ++i) {
        const auto interval = conformal::predict_interval(cal, predict_rows.row(i));
        const double value = dot(theta, vote_rows.row(i));
        if (value >= interval.lower && value <= interval.upper) ++votes;
    }
    return votes;
}

// Appends the sine feature to every row.
Matrix augment_rows(const Matrix& x) {
    Matrix z(x.rows, x.cols + 1);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const Vector row = synthetic::augmented_features(x.row(i));
        std::copy(row.begin(), row.end(), z.row(i).begin());
    }
    return z;
}

Vector default_thresholds() {
    Vector out;
    for (int i = 0; i <= 12; ++i) out.push_back(0.25 * i);
    return out;
}

Vector default_pac_deltas() { return {0.01, 0.05, 0.1, 0.2, 0.5}; }

const char* variant_name(bool null_control) { return null_control ? "linear" : "sine"; }

}  // namespace

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::coverage_table: return "coverage_table";
        case ExperimentKind::width_table: return "width_table";
        case ExperimentKind::rejection_test: return "rejection_test";
        case ExperimentKind::noise_free_vs_noisy: return "noise_free_vs_noisy";
        case ExperimentKind::coverage_curve: return "coverage_curve";
        case ExperimentKind::abstention_sweep: return "abstention_sweep";
    }
    throw std::logic_error("kind_name: unknown experiment kind");
}

ExperimentKind kind_from_name(const std::string& name) {
    static const ExperimentKind all[] = {
        ExperimentKind::coverage_table,    ExperimentKind::width_table,
        ExperimentKind::rejection_test,    ExperimentKind::noise_free_vs_noisy,
        ExperimentKind::coverage_curve,    ExperimentKind::abstention_sweep,
    };
    for (auto kind : all)
        if (kind_name(kind) == name) return kind;
    throw std::invalid_argument("experiments: unknown experiment name: " + name);
}

std::string noise_name(synthetic::NoiseKind kind) {
    switch (kind) {
        case synthetic::NoiseKind::additive_gaussian: return "additive_gaussian";
        case synthetic::NoiseKind::multiplicative_gaussian: return "multiplicative_gaussian";
        case synthetic::NoiseKind::outliers: return "outliers";
        case synthetic::NoiseKind::discrete: return "discrete";
    }
    throw std::logic_error("noise_name: unknown noise kind");
}

synthetic::NoiseKind noise_from_name(const std::string& name) {
    static const synthetic::NoiseKind all[] = {
        synthetic::NoiseKind::additive_gaussian,
        synthetic::NoiseKind::multiplicative_gaussian,
        synthetic::NoiseKind::outliers,
        synthetic::NoiseKind::discrete,
    };
    for (auto kind : all)
        if (noise_name(kind) == name) return kind;
    throw std::invalid_argument("experiments: unknown noise name: " + name);
}

bounds::KMethod method_from_name(const std::string& name) {
    static const bounds::KMethod all[] = {
        bounds::KMethod::markov,
        bounds::KMethod::worst_case,
        bounds::KMethod::split,
        bounds::KMethod::pac,
    };
    for (auto m : all)
        if (bounds::method_name(m) == name) return m;
    throw std::invalid_argument("experiments: unknown method name: " + name);
}

long ExperimentSpec::n_cal() const {
    // Mirrors the calibration split: the first floor(fraction * n_obs) rows
    // of the shuffle train, the rest calibrate.
    const long train = long(std::floor(split_fraction * double(scenario.n_obs)));
    return scenario.n_obs - train;
}

void ExperimentSpec::validate() const {
    require(scenario.d >= 1, "scenario.d must be >= 1");
    require(scenario.n_obs >= 2, "scenario.n_obs must be >= 2");
    require(scenario.n >= 1, "scenario.n must be >= 1");
    require(std::isfinite(alpha) && alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    require(std::isfinite(beta) && beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
    require(std::isfinite(delta) && delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    require(std::isfinite(noise_assumption.b) && noise_assumption.b > 0.0 &&
                noise_assumption.b <= 0.5,
            "b must lie in (0, 1/2]");
    require(!methods.empty(), "methods must not be empty");
    auto sorted = methods;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            "methods must not repeat");
    require(trials >= 1, "trials must be >= 1");
    require(workers >= 1, "workers must be >= 1");
    require(std::isfinite(split_fraction) && split_fraction > 0.0 && split_fraction < 1.0,
            "split_fraction must lie in (0,1)");
    require(n_cal() >= 1, "the split must leave at least one calibration row");
    require(scenario.n_obs - n_cal() >= 1, "the split must leave at least one training row");
    require(std::isfinite(box_half_width) && box_half_width > 0.0,
            "box_half_width must be positive and finite");
    require(test_points >= 1, "test_points must be >= 1");
    require(node_limit >= 1, "node_limit must be >= 1");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        require(std::isfinite(thresholds[i]) && thresholds[i] >= 0.0,
                "thresholds must be finite and nonnegative");
        require(i == 0 || thresholds[i - 1] < thresholds[i], "thresholds must ascend strictly");
    }
    for (std::size_t i = 0; i < pac_deltas.size(); ++i) {
        require(std::isfinite(pac_deltas[i]) && pac_deltas[i] > 0.0 && pac_deltas[i] < 1.0,
                "pac_deltas must lie in (0,1)");
        require(i == 0 || pac_deltas[i - 1] < pac_deltas[i], "pac_deltas must ascend strictly");
    }
    require(!out_dir.empty(), "out_dir must not be empty");
}

namespace {

json spec_to_json(const ExperimentSpec& spec) {
    json methods = json::array();
    for (auto m : spec.methods) methods.push_back(bounds::method_name(m));
    json doc{
        {"name", kind_name(spec.kind)},
        {"scenario",
         {{"d", spec.scenario.d},
          {"n_obs", spec.scenario.n_obs},
          {"n", spec.scenario.n},
          {"noise", noise_name(spec.scenario.noise)},
          {"nonlinear", spec.scenario.nonlinear}}},
        {"methods", methods},
        {"alpha", spec.alpha},
        {"beta", spec.beta},
        {"delta", spec.delta},
        {"b", spec.noise_assumption.b},
        {"assumption3", spec.noise_assumption.assumption3},
        {"trials", spec.trials},
        {"workers", spec.workers},
        {"seed", spec.seed},
        {"split_fraction", spec.split_fraction},
        {"box_half_width", spec.box_half_width},
        {"test_points", spec.test_points},
        {"thresholds", spec.thresholds},
        {"pac_deltas", spec.pac_deltas},
        {"node_limit", spec.node_limit},
        {"out_dir", spec.out_dir},
    };
    return doc;
}

void reject_unknown_keys(const json& doc, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& item : doc.items())
        require(known.count(item.key()) > 0, "unknown " + where + " key: " + item.key());
}

}  // namespace

ExperimentSpec read_experiment_json(std::istream& in) {
    json doc = json::parse(in);
    require(doc.is_object(), "config must be a JSON object");
    static const std::set<std::string> known = {
        "name",        "scenario",      "methods",        "alpha",       "beta",
        "delta",       "b",             "assumption3",    "trials",      "workers",
        "seed",        "split_fraction", "box_half_width", "test_points", "thresholds",
        "pac_deltas",  "node_limit",    "out_dir",
        // bookkeeping fields the runner adds to meta.json, accepted and
        // ignored so any run's meta.json replays directly as a config
        "version",     "records",       "failures",
    };
    reject_unknown_keys(doc, known, "config");
    ExperimentSpec spec;
    if (doc.contains("name")) spec.kind = kind_from_name(doc.at("name").get<std::string>());
    if (doc.contains("scenario")) {
        const json& sc = doc.at("scenario");
        require(sc.is_object(), "scenario must be a JSON object");
        static const std::set<std::string> scenario_known = {"d", "n_obs", "n", "noise",
                                                             "nonlinear"};
        reject_unknown_keys(sc, scenario_known, "scenario");
        if (sc.contains("d")) spec.scenario.d = sc.at("d").get<long>();
        if (sc.contains("n_obs")) spec.scenario.n_obs = sc.at("n_obs").get<long>();
        if (sc.contains("n")) spec.scenario.n = sc.at("n").get<long>();
        if (sc.contains("noise"))
            spec.scenario.noise = noise_from_name(sc.at("noise").get<std::string>());
        if (sc.contains("nonlinear")) spec.scenario.nonlinear = sc.at("nonlinear").get<bool>();
    }
    if (doc.contains("methods")) {
        spec.methods.clear();
        for (const auto& name : doc.at("methods"))
            spec.methods.push_back(method_from_name(name.get<std::string>()));
    }
    if (doc.contains("alpha")) spec.alpha = doc.at("alpha").get<double>();
    if (doc.contains("beta")) spec.beta = doc.at("beta").get<double>();
    if (doc.contains("delta")) spec.delta = doc.at("delta").get<double>();
    if (doc.contains("b")) spec.noise_assumption.b = doc.at("b").get<double>();
    if (doc.contains("assumption3"))
        spec.noise_assumption.assumption3 = doc.at("assumption3").get<bool>();
    if (doc.contains("trials")) spec.trials = doc.at("trials").get<long>();
    if (doc.contains("workers")) spec.workers = doc.at("workers").get<long>();
    if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("split_fraction"))
        spec.split_fraction = doc.at("split_fraction").get<double>();
    if (doc.contains("box_half_width"))
        spec.box_half_width = doc.at("box_half_width").get<double>();
    if (doc.contains("test_points")) spec.test_points = doc.at("test_points").get<long>();
    if (doc.contains("thresholds")) spec.thresholds = doc.at("thresholds").get<Vector>();
    if (doc.contains("pac_deltas")) spec.pac_deltas = doc.at("pac_deltas").get<Vector>();
    if (doc.contains("node_limit")) spec.node_limit = doc.at("node_limit").get<long>();
    if (doc.contains("out_dir")) spec.out_dir = doc.at("out_dir").get<std::string>();
    spec.validate();
    return spec;
}

void write_experiment_json(std::ostream& out, const ExperimentSpec& spec) {
    out << spec_to_json(spec).dump(2) << '\n';
}

std::vector<MethodSummary> summarize_trials(const std::vector<TrialRecord>& records) {
    std::vector<bounds::KMethod> order;
    for (const auto& rec : records)
        if (std::find(order.begin(), order.end(), rec.method) == order.end())
            order.push_back(rec.method);
    std::vector<MethodSummary> out;
    for (auto m : order) {
        MethodSummary s;
        s.method = m;
        long covered = 0, finite_coords = 0, coords = 0, clamped = 0;
        double k_sum = 0.0, width_sum = 0.0, seconds_sum = 0.0;
        for (const auto& rec : records) {
            if (rec.method != m) continue;
            ++s.trials;
            k_sum += double(rec.k);
            covered += rec.covered ? 1 : 0;
            seconds_sum += rec.solve_seconds;
            for (double w : rec.widths) {
                ++coords;
                if (std::isinf(w)) {
                    ++clamped;
                } else {
                    width_sum += w;
                    ++finite_coords;
                }
            }
        }
        s.mean_k = k_sum / double(s.trials);
        s.coverage = double(covered) / double(s.trials);
        s.mean_width = finite_coords > 0 ? width_sum / double(finite_coords) : kNaN;
        s.clamp_rate = coords > 0 ? double(clamped) / double(coords) : 0.0;
        s.mean_solve_seconds = seconds_sum / double(s.trials);
        out.push_back(s);
    }
    return out;
}

std::vector<RejectionSummary> summarize_rejections(const std::vector<RejectionRecord>& records) {
    std::vector<std::pair<bool, bounds::KMethod>> order;
    for (const auto& rec : records) {
        std::pair<bool, bounds::KMethod> key{rec.null_control, rec.method};
        if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
    }
    std::vector<RejectionSummary> out;
    for (const auto& key : order) {
        RejectionSummary s;
        s.null_control = key.first;
        s.method = key.second;
        long rejected = 0, indeterminate = 0;
        for (const auto& rec : records) {
            if (rec.null_control != key.first || rec.method != key.second) continue;
            ++s.trials;
            if (rec.indeterminate) {
                ++indeterminate;
            } else if (rec.rejected) {
                ++rejected;
            }
        }
        s.decided = s.trials - indeterminate;
        s.rejection_rate = s.decided > 0 ? double(rejected) / double(s.decided) : kNaN;
        s.indeterminate_rate = double(indeterminate) / double(s.trials);
        out.push_back(s);
    }
    return out;
}

NoiseFreeSummary summarize_paired(const std::vector<PairedCoverageRecord>& records) {
    NoiseFreeSummary s;
    double noisy_sum = 0.0, free_sum = 0.0;
    for (const auto& rec : records) {
        ++s.trials;
        noisy_sum += rec.noisy;
        free_sum += rec.noise_free;
        if (rec.noisy_win) ++s.losses;
    }
    s.mean_noisy = s.trials > 0 ? noisy_sum / double(s.trials) : kNaN;
    s.mean_noise_free = s.trials > 0 ? free_sum / double(s.trials) : kNaN;
    return s;
}

std::vector<abstain::SweepRow> sweep_from_records(const std::vector<AbstentionRecord>& records,
                                                  const Vector& thresholds,
                                                  long points_per_trial) {
    require(points_per_trial >= 1, "sweep_from_records: points_per_trial must be >= 1");
    std::vector<abstain::SweepRow> out;
    for (double threshold : thresholds) {
        require(std::isfinite(threshold) && threshold >= 0.0,
                "sweep_from_records: thresholds must be finite and nonnegative");
        long accepted = 0;
        double mse_sum = 0.0;
        for (const auto& rec : records) {
            // The interval width is constant across inputs, so a trial's
            // whole test batch is accepted or rejected at once.
            if (rec.interval_width <= threshold) {
                ++accepted;
                mse_sum += rec.mse;
            }
        }
        abstain::SweepRow row;
        row.threshold = threshold;
        row.n_points = long(records.size()) * points_per_trial;
        row.n_accepted = accepted * points_per_trial;
        row.rejection_rate =
            records.empty() ? 1.0 : double(long(records.size()) - accepted) / double(records.size());
        row.mse_accepted = accepted > 0 ? mse_sum / double(accepted) : kNaN;
        out.push_back(row);
    }
    return out;
}

CoverageTableResult run_coverage_table(const ExperimentSpec& spec) {
    spec.validate();
    const auto cached = static_selections(spec);
    std::vector<TrialSlot<TrialRecord>> slots(std::size_t(spec.trials));
    parallel_trials(spec.trials, spec.workers, [&](long t) {
        auto& slot = slots[std::size_t(t)];
        const std::uint64_t tseed = trial_seed(spec, t);
        try {
            const auto sc = trial_scenario(spec, tseed, spec.scenario.nonlinear);
            const auto cal = calibrate(spec, sc.X, sc.y, tseed);
            const long votes = truth_votes(cal, sc.X_unlabelled, sc.X_unlabelled, sc.theta_star);
            for (auto m : spec.methods) {
                const auto sel = selection_for(spec, cached, m, mix_seed(tseed, slot_markov));
                TrialRecord rec;
                rec.trial = t;
                rec.seed = tseed;
                rec.method = m;
                rec.k = sel.k;
                rec.votes = votes;
                rec.covered = votes >= sel.k;
                slot.rows.push_back(std::move(rec));
            }
        } catch (const std::exception& e) {
            slot.rows.clear();
            slot.failed = true;
            slot.error = e.what();
        }
    });
    CoverageTableResult out;
    out.failures = fold_slots(slots, out.records, out.first_error);
    check_failures(out.failures, spec.trials, out.first_error);
    out.summary = summarize_trials(out.records);
    return out;
}

WidthTableResult run_width_table(const ExperimentSpec& spec) {
    spec.validate();
    const auto cached = static_selections(spec);
    const auto box = region::ReferenceBox::cube(spec.scenario.d, spec.box_half_width);
    std::vector<TrialSlot<TrialRecord>> slots(std::size_t(spec.trials));
    parallel_trials(spec.trials, spec.workers, [&](long t) {
        auto& slot = slots[std::size_t(t)];
        const std::uint64_t tseed = trial_seed(spec, t);
        try {
            const auto sc = trial_scenario(spec, tseed, spec.scenario.nonlinear);
            const auto cal = calibrate(spec, sc.X, sc.y, tseed);
            conformal::UnlabelledDataset batch{sc.X_unlabelled};
            const auto intervals = conformal::intervals_for(cal, batch);
            const long votes = truth_votes(cal, sc.X_unlabelled, sc.X_unlabelled, sc.theta_star);
            for (auto m : spec.methods) {
                const auto sel = selection_for(spec, cached, m, mix_seed(tseed, slot_markov));
                const auto rspec = region::build_region(intervals, batch, sel, box);
                const auto start = std::chrono::steady_clock::now();
                const auto coords = region::coordinate_intervals(rspec, spec.node_limit);
                TrialRecord rec;
                rec.solve_seconds = seconds_since(start);
                rec.trial = t;
                rec.seed = tseed;
                rec.method = m;
                rec.k = sel.k;
                rec.votes = votes;
                rec.covered = votes >= sel.k;
                rec.widths.reserve(coords.size());
                for (const auto& ci : coords) rec.widths.push_back(ci.upper - ci.lower);
                slot.rows.push_back(std::move(rec));
            }
        } catch (const std::exception& e) {
            slot.rows.clear();
            slot.failed = true;
            slot.error = e.what();
        }
    });
    WidthTableResult out;
    out.failures = fold_slots(slots, out.records, out.first_error);
    check_failures(out.failures, spec.trials, out.first_error);
    out.summary = summarize_trials(out.records);
    return out;
}

RejectionResult run_rejection_test(const ExperimentSpec& spec) {
    spec.validate();
    const auto cached = static_selections(spec);
    const auto box = region::ReferenceBox::cube(spec.scenario.d, spec.box_half_width);
    std::vector<TrialSlot<RejectionRecord>> slots(std::size_t(spec.trials));
    parallel_trials(spec.trials, spec.workers, [&](long t) {
        auto& slot = slots[std::size_t(t)];
        const std::uint64_t tseed = trial_seed(spec, t);
        try {
            for (bool null_control : {false, true}) {
                // Same seeds either way: the variants differ only in the
                // sine term added to the regression mean.
                const auto sc = trial_scenario(spec, tseed, !null_control);
                const auto cal = calibrate(spec, augment_rows(sc.X), sc.y, tseed);
                conformal::UnlabelledDataset augmented{augment_rows(sc.X_unlabelled)};
                conformal::UnlabelledDataset original{sc.X_unlabelled};
                const auto intervals = conformal::intervals_for(cal, augmented);
                for (auto m : spec.methods) {
                    const auto sel = selection_for(spec, cached, m, mix_seed(tseed, slot_markov));
                    const auto rspec = region::build_region(intervals, original, sel, box);
                    const auto start = std::chrono::steady_clock::now();
                    const auto check = region::is_empty(rspec, spec.node_limit);
                    RejectionRecord rec;
                    rec.solve_seconds = seconds_since(start);
                    rec.trial = t;
                    rec.seed = tseed;
                    rec.null_control = null_control;
                    rec.method = m;
                    rec.k = sel.k;
                    rec.rejected = !check.indeterminate && check.empty;
                    rec.indeterminate = check.indeterminate;
                    rec.max_votes = check.max_votes;
                    slot.rows.push_back(std::move(rec));
                }
            }
        } catch (const std::exception& e) {
            slot.rows.clear();
            slot.failed = true;
            slot.error = e.what();
        }
    });
    RejectionResult out;
    out.failures = fold_slots(slots, out.records, out.first_error);
    check_failures(out.failures, spec.trials, out.first_error);
    long indeterminate = 0;
    for (const auto& rec : out.records)
        if (rec.indeterminate) ++indeterminate;
    // More than 5% undecided emptiness checks voids the run.
    if (!out.records.empty() && indeterminate * 20 > long(out.records.size())) {
        throw std::runtime_error("experiments: " + std::to_string(indeterminate) + " of " +
                                 std::to_string(out.records.size()) +
                                 " emptiness checks were indeterminate; raise node_limit");
    }
    out.summary = summarize_rejections(out.records);
    return out;
}

NoiseFreeResult run_noise_free_vs_noisy(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<TrialSlot<PairedCoverageRecord>> slots(std::size_t(spec.trials));
    parallel_trials(spec.trials, spec.workers, [&](long t) {
        auto& slot = slots[std::size_t(t)];
        const std::uint64_t tseed = trial_seed(spec, t);
        try {
            const auto sc = trial_scenario(spec, tseed, spec.scenario.nonlinear);
            const auto cal = calibrate(spec, sc.X, sc.y, tseed);
            // Fresh labelled batch from the same true parameter.
            synthetic::ScenarioConfig test_cfg = spec.scenario;
            test_cfg.theta_seed = mix_seed(tseed, slot_theta);
            test_cfg.data_seed = mix_seed(tseed, slot_test_batch);
            test_cfg.n_obs = spec.test_points;
            test_cfg.n = 1;
            const auto test = synthetic::sample_scenario(test_cfg);
            const auto paired =
                paired_coverage(cal, conformal::UnlabelledDataset{test.X}, test.y,
                                test.noise_free);
            PairedCoverageRecord rec;
            rec.trial = t;
            rec.seed = tseed;
            rec.noisy = paired.noisy;
            rec.noise_free = paired.noise_free;
            rec.noisy_win = paired.noisy > paired.noise_free;
            slot.rows.push_back(rec);
        } catch (const std::exception& e) {
            slot.rows.clear();
            slot.failed = true;
            slot.error = e.what();
        }
    });
    NoiseFreeResult out;
    out.failures = fold_slots(slots, out.records, out.first_error);
    check_failures(out.failures, spec.trials, out.first_error);
    out.summary = summarize_paired(out.records);
    return out;
}

CurveResult run_coverage_curve(const ExperimentSpec& spec) {
    spec.validate();
    CurveResult out;
    const long n = spec.scenario.n;
    const long n_cal = spec.n_cal();
    out.curve = bounds::coverage_curve(n, n_cal, spec.alpha, spec.noise_assumption, spec.methods,
                                       spec.delta);
    const Vector deltas = spec.pac_deltas.empty() ? default_pac_deltas() : spec.pac_deltas;
    for (double delta : deltas) {
        const auto rows = bounds::coverage_curve(n, n_cal, spec.alpha, spec.noise_assumption,
                                                 {bounds::KMethod::pac}, delta);
        for (const auto& row : rows)
            out.pac_sweep.push_back(CurveResult::DeltaRow{delta, row.k, row.coverage});
    }
    return out;
}

AbstentionResult run_abstention_sweep(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<TrialSlot<AbstentionRecord>> slots(std::size_t(spec.trials));
    parallel_trials(spec.trials, spec.workers, [&](long t) {
        auto& slot = slots[std::size_t(t)];
        const std::uint64_t tseed = trial_seed(spec, t);
        try {
            const auto sine = abstain::sample_sine_scenario(spec.scenario.n_obs, spec.test_points,
                                                            mix_seed(tseed, slot_sine));
            const auto cal = calibrate(spec, sine.train.inputs, sine.train.outputs, tseed);
            double squared = 0.0;
            for (std::size_t i = 0; i < sine.test.inputs.rows; ++i) {
                const double err =
                    conformal::predict_value(cal, sine.test.inputs.row(i)) - sine.test.outputs[i];
                squared += err * err;
            }
            const auto bound =
                abstain::error_bound_check(cal, spec.noise_assumption, sine.test,
                                           sine.test_noise_free);
            AbstentionRecord rec;
            rec.trial = t;
            rec.seed = tseed;
            rec.interval_width = 2.0 * cal.quantile_radius;
            rec.mse = squared / double(sine.test.inputs.rows);
            rec.error_rate = bound.empirical_rate;
            slot.rows.push_back(rec);
        } catch (const std::exception& e) {
            slot.rows.clear();
            slot.failed = true;
            slot.error = e.what();
        }
    });
    AbstentionResult out;
    out.failures = fold_slots(slots, out.records, out.first_error);
    check_failures(out.failures, spec.trials, out.first_error);
    const Vector thresholds = spec.thresholds.empty() ? default_thresholds() : spec.thresholds;
    out.sweep = sweep_from_records(out.records, thresholds, spec.test_points);
    // Matches abstain::error_bound_check's certificate.
    out.error_bound = std::max(0.0, 1.0 - (1.0 + 1.0 / spec.noise_assumption.b) * spec.alpha);
    double rate_sum = 0.0;
    for (const auto& rec : out.records) rate_sum += rec.error_rate;
    out.mean_error_rate = out.records.empty() ? kNaN : rate_sum / double(out.records.size());
    return out;
}

PairedCoverage paired_coverage(const conformal::SplitCalibration& cal,
                               const conformal::UnlabelledDataset& inputs, const Vector& noisy,
                               const Vector& noise_free, const Vector& weights) {
    inputs.validate();
    const std::size_t rows = inputs.inputs.rows;
    require(noisy.size() == rows && noise_free.size() == rows,
            "paired_coverage: outputs must align with inputs");
    require(weights.empty() || weights.size() == rows,
            "paired_coverage: weights must align with inputs");
    double total = 0.0, noisy_hits = 0.0, free_hits = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        require(std::isfinite(w) && w >= 0.0, "paired_coverage: weights must be nonnegative");
        const auto interval = conformal::predict_interval(cal, inputs.inputs.row(i));
        total += w;
        if (noisy[i] >= interval.lower && noisy[i] <= interval.upper) noisy_hits += w;
        if (noise_free[i] >= interval.lower && noise_free[i] <= interval.upper) free_hits += w;
    }
    require(total > 0.0, "paired_coverage: weights must not all be zero");
    return {noisy_hits / total, free_hits / total};
}

void write_trials_csv(std::ostream& out, const std::vector<TrialRecord>& records, long dim) {
    out << "trial,seed,method,k,votes,covered";
    for (long j = 0; j < dim; ++j) out << ",width_" << j;
    out << '\n';
    for (const auto& rec : records) {
        require(long(rec.widths.size()) == dim,
                "write_trials_csv: record width count must match dim");
        out << rec.trial << ',' << rec.seed << ',' << bounds::method_name(rec.method) << ','
            << rec.k << ',' << rec.votes << ',' << (rec.covered ? 1 : 0);
        for (double w : rec.widths) out << ',' << format_double(w);
        out << '\n';
    }
}

void write_rejections_csv(std::ostream& out, const std::vector<RejectionRecord>& records) {
    out << "trial,seed,scenario,method,k,rejected,indeterminate,max_votes\n";
    for (const auto& rec : records) {
        out << rec.trial << ',' << rec.seed << ',' << variant_name(rec.null_control) << ','
            << bounds::method_name(rec.method) << ',' << rec.k << ',' << (rec.rejected ? 1 : 0)
            << ',' << (rec.indeterminate ? 1 : 0) << ',' << rec.max_votes << '\n';
    }
}

void write_paired_csv(std::ostream& out, const std::vector<PairedCoverageRecord>& records) {
    out << "trial,seed,noisy_coverage,noise_free_coverage,noisy_win\n";
    for (const auto& rec : records) {
        out << rec.trial << ',' << rec.seed << ',' << format_double(rec.noisy) << ','
            << format_double(rec.noise_free) << ',' << (rec.noisy_win ? 1 : 0) << '\n';
    }
}

void write_abstention_csv(std::ostream& out, const std::vector<AbstentionRecord>& records) {
    out << "trial,seed,interval_width,mse,error_rate\n";
    for (const auto& rec : records) {
        out << rec.trial << ',' << rec.seed << ',' << format_double(rec.interval_width) << ','
            << format_double(rec.mse) << ',' << format_double(rec.error_rate) << '\n';
    }
}

namespace {

json json_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

}  // namespace

RunOutput run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                         const std::string& emit) {
    require(emit == "csv" || emit == "json", "emit must be csv or json");
    spec.validate();
    std::filesystem::create_directories(out_dir);

    RunOutput out;
    auto write_file = [&](const std::string& name, const std::string& text) {
        const auto path = out_dir / name;
        std::ofstream file(path, std::ios::binary);
        if (!file) throw std::runtime_error("experiments: cannot open " + path.string());
        file << text;
        file.flush();
        if (!file) throw std::runtime_error("experiments: cannot write " + path.string());
        out.files.push_back(name);
    };

    json meta = spec_to_json(spec);
    meta["version"] = kVersion;
    std::ostringstream trials_text, timings_text, summary_text;
    json summary_rows = json::array();

    switch (spec.kind) {
        case ExperimentKind::coverage_table: {
            const auto res = run_coverage_table(spec);
            write_trials_csv(trials_text, res.records, 0);
            summary_text << "method,trials,mean_k,coverage\n";
            for (const auto& s : res.summary) {
                summary_text << bounds::method_name(s.method) << ',' << s.trials << ','
                             << format_double(s.mean_k) << ',' << format_double(s.coverage)
                             << '\n';
                summary_rows.push_back({{"method", bounds::method_name(s.method)},
                                        {"trials", s.trials},
                                        {"mean_k", s.mean_k},
                                        {"coverage", s.coverage}});
            }
            meta["failures"] = res.failures;
            meta["records"] = res.records.size();
            write_file("trials.csv", trials_text.str());
            write_file("summary.csv", summary_text.str());
            break;
        }
        case ExperimentKind::width_table: {
            const auto res = run_width_table(spec);
            write_trials_csv(trials_text, res.records, spec.scenario.d);
            timings_text << "trial,method,seconds\n";
            for (const auto& rec : res.records)
                timings_text << rec.trial << ',' << bounds::method_name(rec.method) << ','
                             << format_double(rec.solve_seconds) << '\n';
            summary_text << "method,trials,mean_k,coverage,mean_width,clamp_rate\n";
            for (const auto& s : res.summary) {
                summary_text << bounds::method_name(s.method) << ',' << s.trials << ','
                             << format_double(s.mean_k) << ',' << format_double(s.coverage) << ','
                             << format_double(s.mean_width) << ',' << format_double(s.clamp_rate)
                             << '\n';
                summary_rows.push_back({{"method", bounds::method_name(s.method)},
                                        {"trials", s.trials},
                                        {"mean_k", s.mean_k},
                                        {"coverage", s.coverage},
                                        {"mean_width", json_or_null(s.mean_width)},
                                        {"clamp_rate", s.clamp_rate},
                                        {"mean_solve_seconds", s.mean_solve_seconds}});
            }
            meta["failures"] = res.failures;
            meta["records"] = res.records.size();
            write_file("trials.csv", trials_text.str());
            write_file("timings.csv", timings_text.str());
            write_file("summary.csv", summary_text.str());
            break;
        }
        case ExperimentKind::rejection_test: {
            const auto res = run_rejection_test(spec);
            write_rejections_csv(trials_text, res.records);
            timings_text << "trial,scenario,method,seconds\n";
            for (const auto& rec : res.records)
                timings_text << rec.trial << ',' << variant_name(rec.null_control) << ','
                             << bounds::method_name(rec.method) << ','
                             << format_double(rec.solve_seconds) << '\n';
            summary_text << "scenario,method,trials,decided,rejection_rate,indeterminate_rate\n";
            for (const auto& s : res.summary) {
                summary_text << variant_name(s.null_control) << ','
                             << bounds::method_name(s.method) << ',' << s.trials << ','
                             << s.decided << ',' << format_double(s.rejection_rate) << ','
                             << format_double(s.indeterminate_rate) << '\n';
                summary_rows.push_back({{"scenario", variant_name(s.null_control)},
                                        {"method", bounds::method_name(s.method)},
                                        {"trials", s.trials},
                                        {"decided", s.decided},
                                        {"rejection_rate", json_or_null(s.rejection_rate)},
                                        {"indeterminate_rate", s.indeterminate_rate}});
            }
            meta["failures"] = res.failures;
            meta["records"] = res.records.size();
            write_file("trials.csv", trials_text.str());
            write_file("timings.csv", timings_text.str());
            write_file("summary.csv", summary_text.str());
            break;
        }
        case ExperimentKind::noise_free_vs_noisy: {
            const auto res = run_noise_free_vs_noisy(spec);
            write_paired_csv(trials_text, res.records);
            summary_text << "trials,mean_noisy,mean_noise_free,losses\n";
            summary_text << res.summary.trials << ',' << format_double(res.summary.mean_noisy)
                         << ',' << format_double(res.summary.mean_noise_free) << ','
                         << res.summary.losses << '\n';
            summary_rows.push_back({{"trials", res.summary.trials},
                                    {"mean_noisy", json_or_null(res.summary.mean_noisy)},
                                    {"mean_noise_free", json_or_null(res.summary.mean_noise_free)},
                                    {"losses", res.summary.losses}});
            meta["failures"] = res.failures;
            meta["records"] = res.records.size();
            write_file("trials.csv", trials_text.str());
            write_file("summary.csv", summary_text.str());
            break;
        }
        case ExperimentKind::coverage_curve: {
            const auto res = run_coverage_curve(spec);
            bounds::write_coverage_curve_csv(summary_text, res.curve);
            std::ostringstream deltas_text;
            deltas_text << "delta,k,coverage\n";
            for (const auto& row : res.pac_sweep) {
                deltas_text << format_double(row.delta) << ',' << row.k << ','
                            << format_double(row.coverage) << '\n';
            }
            for (const auto& row : res.curve)
                summary_rows.push_back(
                    {{"method", row.method}, {"k", row.k}, {"coverage", row.coverage}});
            meta["records"] = res.curve.size() + res.pac_sweep.size();
            write_file("curve.csv", summary_text.str());
            write_file("pac_deltas.csv", deltas_text.str());
            break;
        }
        case ExperimentKind::abstention_sweep: {
            const auto res = run_abstention_sweep(spec);
            write_abstention_csv(trials_text, res.records);
            std::ostringstream sweep_text;
            abstain::write_sweep_csv(sweep_text, res.sweep);
            double width_sum = 0.0;
            for (const auto& rec : res.records) width_sum += rec.interval_width;
            const double mean_width =
                res.records.empty() ? kNaN : width_sum / double(res.records.size());
            summary_text << "trials,mean_interval_width,mean_error_rate,error_bound\n";
            summary_text << res.records.size() << ',' << format_double(mean_width) << ','
                         << format_double(res.mean_error_rate) << ','
                         << format_double(res.error_bound) << '\n';
            summary_rows.push_back({{"trials", res.records.size()},
                                    {"mean_interval_width", json_or_null(mean_width)},
                                    {"mean_error_rate", json_or_null(res.mean_error_rate)},
                                    {"error_bound", res.error_bound}});
            meta["failures"] = res.failures;
            meta["records"] = res.records.size();
            write_file("trials.csv", trials_text.str());
            write_file("sweep.csv", sweep_text.str());
            write_file("summary.csv", summary_text.str());
            break;
        }
    }

    out.summary_csv = summary_text.str();
    out.summary_json = summary_rows.dump(2) + "\n";
    if (emit == "json") write_file("summary.json", out.summary_json);
    write_file("meta.json", meta.dump(2) + "\n");
    return out;
}

}  // namespace confreg::experiments
