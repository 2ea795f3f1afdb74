#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "confreg/bounds.hpp"
#include "confreg/conformal.hpp"
#include "confreg/experiments.hpp"
#include "confreg/rng.hpp"
#include "confreg/synthetic.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace confreg;
using namespace confreg::experiments;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream file(path, std::ios::binary);
    REQUIRE(bool(file));
    std::ostringstream text;
    text << file.rdbuf();
    return text.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "confreg_experiments" / name;
    fs::remove_all(dir);
    return dir;
}

ExperimentSpec small_coverage_spec() {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::coverage_table;
    spec.scenario.d = 2;
    spec.scenario.n_obs = 44;
    spec.scenario.n = 12;
    spec.trials = 14;
    spec.seed = 1234;
    return spec;
}

long count_lines(const std::string& text) {
    long lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

}  // namespace

TEST_CASE("experiment configs round-trip through json and reject malformed input") {
    SUBCASE("defaults survive a full round trip") {
        ExperimentSpec spec;
        std::ostringstream out;
        write_experiment_json(out, spec);
        std::istringstream in(out.str());
        const ExperimentSpec back = read_experiment_json(in);
        CHECK(back.kind == spec.kind);
        CHECK(back.scenario.d == spec.scenario.d);
        CHECK(back.scenario.n_obs == spec.scenario.n_obs);
        CHECK(back.scenario.n == spec.scenario.n);
        CHECK(back.scenario.noise == spec.scenario.noise);
        CHECK(back.scenario.nonlinear == spec.scenario.nonlinear);
        CHECK(back.methods == spec.methods);
        CHECK(back.alpha == spec.alpha);
        CHECK(back.beta == spec.beta);
        CHECK(back.delta == spec.delta);
        CHECK(back.noise_assumption.b == spec.noise_assumption.b);
        CHECK(back.noise_assumption.assumption3 == spec.noise_assumption.assumption3);
        CHECK(back.trials == spec.trials);
        CHECK(back.workers == spec.workers);
        CHECK(back.seed == spec.seed);
        CHECK(back.split_fraction == spec.split_fraction);
        CHECK(back.box_half_width == spec.box_half_width);
        CHECK(back.test_points == spec.test_points);
        CHECK(back.thresholds == spec.thresholds);
        CHECK(back.pac_deltas == spec.pac_deltas);
        CHECK(back.node_limit == spec.node_limit);
        CHECK(back.out_dir == spec.out_dir);
    }

    SUBCASE("every field survives with non-default values") {
        ExperimentSpec spec;
        spec.kind = ExperimentKind::width_table;
        spec.scenario.d = 4;
        spec.scenario.n_obs = 37;
        spec.scenario.n = 9;
        spec.scenario.noise = synthetic::NoiseKind::outliers;
        spec.scenario.nonlinear = true;
        spec.methods = {bounds::KMethod::split, bounds::KMethod::markov};
        spec.alpha = 0.2;
        spec.beta = 0.05;
        spec.delta = 0.02;
        spec.noise_assumption = {0.25, false};
        spec.trials = 3;
        spec.workers = 7;
        spec.seed = 0xFEEDFACEULL;
        spec.split_fraction = 0.4;
        spec.box_half_width = 55.0;
        spec.test_points = 77;
        spec.thresholds = {0.0, 0.5, 2.5};
        spec.pac_deltas = {0.05, 0.25};
        spec.node_limit = 5000;
        spec.out_dir = "elsewhere";
        std::ostringstream out;
        write_experiment_json(out, spec);
        std::istringstream in(out.str());
        const ExperimentSpec back = read_experiment_json(in);
        CHECK(back.kind == ExperimentKind::width_table);
        CHECK(back.scenario.noise == synthetic::NoiseKind::outliers);
        CHECK(back.scenario.nonlinear);
        CHECK(back.methods == spec.methods);
        CHECK(back.noise_assumption.b == 0.25);
        CHECK_FALSE(back.noise_assumption.assumption3);
        CHECK(back.seed == spec.seed);
        CHECK(back.thresholds == spec.thresholds);
        CHECK(back.pac_deltas == spec.pac_deltas);
        CHECK(back.out_dir == "elsewhere");
    }

    SUBCASE("name tables cover every enumerator both ways") {
        for (const char* name :
             {"coverage_table", "width_table", "rejection_test", "noise_free_vs_noisy",
              "coverage_curve", "abstention_sweep"}) {
            CHECK(kind_name(kind_from_name(name)) == name);
        }
        for (const char* name : {"additive_gaussian", "multiplicative_gaussian", "outliers",
                                 "discrete"}) {
            CHECK(noise_name(noise_from_name(name)) == name);
        }
        for (const char* name : {"markov", "worst_case", "split", "pac"}) {
            CHECK(bounds::method_name(method_from_name(name)) == name);
        }
        CHECK_THROWS_AS(kind_from_name("tables"), std::invalid_argument);
        CHECK_THROWS_AS(noise_from_name("gaussian"), std::invalid_argument);
        CHECK_THROWS_AS(method_from_name("pac_refined"), std::invalid_argument);
    }

    SUBCASE("unknown keys and invalid values are rejected") {
        auto read = [](const std::string& text) {
            std::istringstream in(text);
            return read_experiment_json(in);
        };
        CHECK_THROWS_AS(read("{\"alphas\": 0.1}"), std::invalid_argument);
        // meta.json bookkeeping keys are the one sanctioned exception
        CHECK(read("{\"version\": \"0.1.0\", \"records\": 12, \"failures\": 0}").trials == 100);
        CHECK_THROWS_AS(read("{\"scenario\": {\"dim\": 3}}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"methods\": [\"bonferroni\"]}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"noise\": 1}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"trials\": 0}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"alpha\": 1.0}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"b\": 0.7}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"methods\": [\"split\", \"split\"]}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"thresholds\": [1.0, 0.5]}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"pac_deltas\": [0.5, 1.5]}"), std::invalid_argument);
        CHECK_THROWS_AS(read("{\"split_fraction\": 1.0}"), std::invalid_argument);
        CHECK_THROWS(read("not json"));
        CHECK_THROWS(read("[1,2,3]"));
    }

    SUBCASE("the calibration row count mirrors the training split") {
        ExperimentSpec spec;
        spec.scenario.n_obs = 100;
        CHECK(spec.n_cal() == 50);
        spec.scenario.n_obs = 41;
        CHECK(spec.n_cal() == 21);
        spec.split_fraction = 0.25;
        spec.scenario.n_obs = 10;
        CHECK(spec.n_cal() == 8);
    }
}

TEST_CASE("artifacts are byte-identical for any worker count") {
    ExperimentSpec spec = small_coverage_spec();
    const fs::path dir_serial = fresh_dir("workers_serial");
    const fs::path dir_pool = fresh_dir("workers_pool");

    spec.workers = 1;
    run_experiment(spec, dir_serial);
    spec.workers = 5;
    run_experiment(spec, dir_pool);
    CHECK(read_file(dir_serial / "trials.csv") == read_file(dir_pool / "trials.csv"));
    CHECK(read_file(dir_serial / "summary.csv") == read_file(dir_pool / "summary.csv"));

    // More workers than trials clamps to one worker per trial.
    ExperimentSpec paired = spec;
    paired.kind = ExperimentKind::noise_free_vs_noisy;
    paired.trials = 6;
    paired.test_points = 120;
    const fs::path dir_a = fresh_dir("workers_paired_serial");
    const fs::path dir_b = fresh_dir("workers_paired_wide");
    paired.workers = 1;
    run_experiment(paired, dir_a);
    paired.workers = 16;
    run_experiment(paired, dir_b);
    CHECK(read_file(dir_a / "trials.csv") == read_file(dir_b / "trials.csv"));
    CHECK(read_file(dir_a / "summary.csv") == read_file(dir_b / "summary.csv"));
}

TEST_CASE("coverage table honors the paired-seed threshold ordering") {
    ExperimentSpec spec;
    spec.scenario.d = 2;
    spec.scenario.n_obs = 60;
    spec.scenario.n = 20;
    spec.trials = 80;
    spec.workers = 4;
    spec.seed = 2024;
    const auto result = run_coverage_table(spec);
    CHECK(result.failures == 0);
    CHECK(long(result.records.size()) == spec.trials * long(spec.methods.size()));

    // covered is definitionally votes >= k, and all methods within a trial
    // share one vote count because they share one scenario.
    std::map<long, long> votes_by_trial;
    for (const auto& rec : result.records) {
        CHECK(rec.covered == (rec.votes >= rec.k));
        CHECK(rec.k >= 0);
        CHECK(rec.k <= spec.scenario.n);
        CHECK(rec.widths.empty());
        auto [it, fresh] = votes_by_trial.emplace(rec.trial, rec.votes);
        if (!fresh) CHECK(it->second == rec.votes);
        CHECK(rec.seed == mix_seed(spec.seed, std::uint64_t(rec.trial)));
    }
    CHECK(long(votes_by_trial.size()) == spec.trials);

    // Aggregate ordering: the worst-case threshold never exceeds the markov
    // base, so its region is a superset trial by trial in aggregate.
    std::map<bounds::KMethod, MethodSummary> by_method;
    for (const auto& s : result.summary) by_method[s.method] = s;
    REQUIRE(by_method.size() == 4);
    CHECK(by_method.at(bounds::KMethod::worst_case).coverage >=
          by_method.at(bounds::KMethod::markov).coverage);

    // Each certified level holds with slack at assumption-3 settings.
    for (const auto& s : result.summary) {
        CHECK(s.trials == spec.trials);
        CHECK(s.coverage >= 0.8);
        CHECK(s.coverage <= 1.0);
    }

    // The summary is the pure fold of the records.
    const auto refolded = summarize_trials(result.records);
    REQUIRE(refolded.size() == result.summary.size());
    for (std::size_t i = 0; i < refolded.size(); ++i) {
        CHECK(refolded[i].method == result.summary[i].method);
        CHECK(refolded[i].coverage == result.summary[i].coverage);
        CHECK(refolded[i].mean_k == result.summary[i].mean_k);
    }

    // A near-vacuous budget keeps the run well-formed; the guarantee level
    // 1 - beta = 0.001 is trivially met by every observed coverage.
    ExperimentSpec vacuous = spec;
    vacuous.beta = 0.999;
    vacuous.trials = 20;
    const auto loose = run_coverage_table(vacuous);
    CHECK(loose.failures == 0);
    for (const auto& s : loose.summary) {
        CHECK(s.coverage >= 0.001 - 1e-12);
        CHECK(s.mean_k <= double(vacuous.scenario.n));
    }
}

TEST_CASE("width table nests regions across thresholds and persists timings") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::width_table;
    spec.scenario.d = 2;
    spec.scenario.n_obs = 40;
    spec.scenario.n = 10;
    spec.methods = {bounds::KMethod::markov, bounds::KMethod::split};
    spec.trials = 20;
    spec.workers = 4;
    spec.seed = 303;
    spec.box_half_width = 50.0;
    const auto result = run_width_table(spec);
    CHECK(result.failures == 0);
    REQUIRE(long(result.records.size()) == spec.trials * 2);

    std::map<long, const TrialRecord*> markov_rows, split_rows;
    for (const auto& rec : result.records) {
        REQUIRE(rec.widths.size() == 2);
        CHECK(rec.covered == (rec.votes >= rec.k));
        CHECK(rec.solve_seconds >= 0.0);
        for (double w : rec.widths) CHECK(w >= 0.0);
        if (rec.method == bounds::KMethod::markov) markov_rows[rec.trial] = &rec;
        if (rec.method == bounds::KMethod::split) split_rows[rec.trial] = &rec;
    }

    // A lower threshold keeps a superset region, so widths can only grow.
    long nested_trials = 0;
    for (const auto& [trial, markov_rec] : markov_rows) {
        const auto* split_rec = split_rows.at(trial);
        if (markov_rec->k > split_rec->k) continue;
        ++nested_trials;
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(markov_rec->widths[j] >= split_rec->widths[j] - 1e-6);
    }
    CHECK(nested_trials >= spec.trials / 2);

    // Artifacts: width columns, a timing row per record, fold equality.
    const fs::path dir = fresh_dir("width_artifacts");
    run_experiment(spec, dir);
    const std::string trials_text = read_file(dir / "trials.csv");
    CHECK(trials_text.rfind("trial,seed,method,k,votes,covered,width_0,width_1\n", 0) == 0);
    CHECK(count_lines(trials_text) == 1 + long(result.records.size()));
    const std::string timing_text = read_file(dir / "timings.csv");
    CHECK(timing_text.rfind("trial,method,seconds\n", 0) == 0);
    CHECK(count_lines(timing_text) == 1 + long(result.records.size()));

    const auto refolded = summarize_trials(result.records);
    for (std::size_t i = 0; i < refolded.size(); ++i) {
        CHECK(refolded[i].mean_width == result.summary[i].mean_width);
        CHECK(refolded[i].clamp_rate == result.summary[i].clamp_rate);
    }
}

TEST_CASE("rejection test keeps the null control valid") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::rejection_test;
    spec.scenario.d = 2;
    spec.scenario.n_obs = 40;
    spec.scenario.n = 10;
    spec.methods = {bounds::KMethod::split, bounds::KMethod::worst_case};
    spec.trials = 40;
    spec.workers = 4;
    spec.seed = 555;
    spec.box_half_width = 50.0;
    const auto result = run_rejection_test(spec);
    CHECK(result.failures == 0);
    REQUIRE(long(result.records.size()) == spec.trials * 2 * 2);

    std::map<std::pair<long, int>, std::pair<long, long>> k_by_trial_method;
    for (const auto& rec : result.records) {
        CHECK_FALSE(rec.indeterminate);
        if (rec.rejected) {
            CHECK(rec.max_votes < rec.k);
        } else {
            CHECK(rec.max_votes >= rec.k);
        }
        const std::pair<long, int> key{rec.trial, int(rec.method)};
        auto [it, fresh] = k_by_trial_method.emplace(key, std::pair<long, long>{rec.k, 1});
        if (!fresh) {
            // Sine and null variants share the trial's threshold draw.
            CHECK(it->second.first == rec.k);
            ++it->second.second;
        }
    }
    for (const auto& [key, value] : k_by_trial_method) CHECK(value.second == 2);

    REQUIRE(result.summary.size() == 4);
    const double sigma = std::sqrt(spec.beta * (1.0 - spec.beta) / double(spec.trials));
    for (const auto& s : result.summary) {
        CHECK(s.decided == s.trials);
        CHECK(s.indeterminate_rate == 0.0);
        if (s.null_control) CHECK(s.rejection_rate <= spec.beta + 3.0 * sigma);
    }

    const auto refolded = summarize_rejections(result.records);
    REQUIRE(refolded.size() == result.summary.size());
    for (std::size_t i = 0; i < refolded.size(); ++i) {
        CHECK(refolded[i].null_control == result.summary[i].null_control);
        CHECK(refolded[i].method == result.summary[i].method);
        CHECK(refolded[i].rejection_rate == result.summary[i].rejection_rate);
    }

    // Deterministic rows under a different worker count.
    ExperimentSpec again = spec;
    again.workers = 1;
    const auto rerun = run_rejection_test(again);
    std::ostringstream first_csv, second_csv;
    write_rejections_csv(first_csv, result.records);
    write_rejections_csv(second_csv, rerun.records);
    CHECK(first_csv.str() == second_csv.str());
}

TEST_CASE("noise-free comparison: paired coverage is exact and dominates in aggregate") {
    SUBCASE("the discrete two-point fixture reproduces 0.95 vs 0.90 exactly") {
        conformal::SplitCalibration cal;
        cal.predictor = {1.0};
        cal.intercept = false;
        cal.calibration_scores = {0.99};
        cal.alpha = 0.1;
        cal.quantile_radius = 0.99;
        conformal::UnlabelledDataset inputs;
        inputs.inputs = Matrix(4, 1);
        inputs.inputs(0, 0) = 0.0;
        inputs.inputs(1, 0) = 0.0;
        inputs.inputs(2, 0) = 1.0;
        inputs.inputs(3, 0) = 1.0;
        const Vector noisy{0.02, -0.02, 0.02, -0.02};
        const Vector noise_free{0.0, 0.0, 0.0, 0.0};
        const auto paired = paired_coverage(cal, inputs, noisy, noise_free, {9.0, 9.0, 1.0, 1.0});
        CHECK(paired.noisy == 19.0 / 20.0);
        CHECK(paired.noise_free == 18.0 / 20.0);

        const auto uniform = paired_coverage(cal, inputs, noisy, noise_free);
        CHECK(uniform.noisy == 0.75);
        CHECK(uniform.noise_free == 0.5);

        CHECK_THROWS_AS(paired_coverage(cal, inputs, {0.0, 0.0}, noise_free),
                        std::invalid_argument);
        CHECK_THROWS_AS(paired_coverage(cal, inputs, noisy, noise_free, {1.0, 1.0}),
                        std::invalid_argument);
        CHECK_THROWS_AS(paired_coverage(cal, inputs, noisy, noise_free, {-1.0, 1.0, 1.0, 1.0}),
                        std::invalid_argument);
        CHECK_THROWS_AS(paired_coverage(cal, inputs, noisy, noise_free, {0.0, 0.0, 0.0, 0.0}),
                        std::invalid_argument);
    }

    SUBCASE("gaussian noise: the noise-free value is covered more often") {
        ExperimentSpec spec;
        spec.kind = ExperimentKind::noise_free_vs_noisy;
        spec.scenario.d = 2;
        spec.scenario.n_obs = 50;
        spec.trials = 50;
        spec.workers = 4;
        spec.seed = 888;
        spec.test_points = 400;
        const auto result = run_noise_free_vs_noisy(spec);
        CHECK(result.failures == 0);
        REQUIRE(long(result.records.size()) == spec.trials);
        for (const auto& rec : result.records) {
            CHECK(rec.noisy >= 0.0);
            CHECK(rec.noisy <= 1.0);
            CHECK(rec.noise_free >= 0.0);
            CHECK(rec.noise_free <= 1.0);
            CHECK(rec.noisy_win == (rec.noisy > rec.noise_free));
        }
        CHECK(result.summary.trials == spec.trials);
        CHECK(result.summary.mean_noise_free >= result.summary.mean_noisy + 0.01);
        CHECK(result.summary.losses <= 1);

        const auto refolded = summarize_paired(result.records);
        CHECK(refolded.mean_noisy == result.summary.mean_noisy);
        CHECK(refolded.mean_noise_free == result.summary.mean_noise_free);
        CHECK(refolded.losses == result.summary.losses);
    }

    SUBCASE("outlier noise never favors the noisy output in aggregate") {
        ExperimentSpec spec;
        spec.kind = ExperimentKind::noise_free_vs_noisy;
        spec.scenario.d = 2;
        spec.scenario.n_obs = 50;
        spec.scenario.noise = synthetic::NoiseKind::outliers;
        spec.trials = 30;
        spec.workers = 4;
        spec.seed = 889;
        spec.test_points = 300;
        const auto result = run_noise_free_vs_noisy(spec);
        CHECK(result.summary.mean_noise_free >= result.summary.mean_noisy);
    }
}

TEST_CASE("coverage curve runner matches the bound curves and orders the delta sweep") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::coverage_curve;
    spec.scenario.n = 30;
    spec.scenario.n_obs = 100;
    const auto result = run_coverage_curve(spec);

    const auto direct = bounds::coverage_curve(30, 50, spec.alpha, spec.noise_assumption,
                                               spec.methods, spec.delta);
    REQUIRE(result.curve.size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(result.curve[i].method == direct[i].method);
        CHECK(result.curve[i].k == direct[i].k);
        CHECK(result.curve[i].coverage == direct[i].coverage);
    }

    // Default sweep: five deltas, each a full k = 0..n pac curve.
    REQUIRE(result.pac_sweep.size() == 5 * 31);
    std::map<double, std::vector<double>> by_delta;
    for (const auto& row : result.pac_sweep) {
        auto& curve = by_delta[row.delta];
        CHECK(row.k == long(curve.size()));
        curve.push_back(row.coverage);
    }
    REQUIRE(by_delta.size() == 5);
    const std::vector<double> deltas{0.01, 0.05, 0.1, 0.2, 0.5};
    for (double d : deltas) REQUIRE(by_delta.count(d) == 1);
    for (const auto& [delta, curve] : by_delta) {
        CHECK(curve.front() == 1.0);
        for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k] <= curve[k - 1] + 1e-12);
    }
    // A looser certificate tolerance can only raise the guaranteed curve.
    for (std::size_t i = 1; i < deltas.size(); ++i) {
        const auto& lo = by_delta.at(deltas[i - 1]);
        const auto& hi = by_delta.at(deltas[i]);
        for (std::size_t k = 0; k < lo.size(); ++k) CHECK(hi[k] >= lo[k] - 1e-12);
    }

    const fs::path dir = fresh_dir("curve_artifacts");
    const auto output = run_experiment(spec, dir);
    std::ostringstream expected;
    bounds::write_coverage_curve_csv(expected, result.curve);
    CHECK(read_file(dir / "curve.csv") == expected.str());
    const std::string deltas_text = read_file(dir / "pac_deltas.csv");
    CHECK(deltas_text.rfind("delta,k,coverage\n", 0) == 0);
    CHECK(count_lines(deltas_text) == 1 + long(result.pac_sweep.size()));
    CHECK(output.summary_csv == expected.str());
}

TEST_CASE("abstention sweep folds exactly from its persisted records") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::abstention_sweep;
    spec.scenario.n_obs = 60;
    spec.trials = 40;
    spec.workers = 4;
    spec.seed = 999;
    spec.test_points = 250;
    const auto result = run_abstention_sweep(spec);
    CHECK(result.failures == 0);
    REQUIRE(long(result.records.size()) == spec.trials);
    REQUIRE(result.sweep.size() == 13);

    CHECK(result.sweep.front().threshold == 0.0);
    CHECK(result.sweep.front().rejection_rate == 1.0);
    CHECK(result.sweep.back().rejection_rate < 0.5);
    for (std::size_t i = 1; i < result.sweep.size(); ++i)
        CHECK(result.sweep[i].rejection_rate <= result.sweep[i - 1].rejection_rate);
    for (const auto& row : result.sweep) {
        CHECK(row.n_points == spec.trials * spec.test_points);
        CHECK(row.n_accepted <= row.n_points);
        if (row.n_accepted == 0) {
            CHECK(std::isnan(row.mse_accepted));
        } else {
            CHECK(std::isfinite(row.mse_accepted));
        }
    }

    CHECK(result.error_bound == doctest::Approx(0.7));
    CHECK(result.mean_error_rate >= 0.6);

    // The sweep is a pure fold of the per-trial rows.
    Vector thresholds;
    for (int i = 0; i <= 12; ++i) thresholds.push_back(0.25 * i);
    const auto refolded = sweep_from_records(result.records, thresholds, spec.test_points);
    REQUIRE(refolded.size() == result.sweep.size());
    for (std::size_t i = 0; i < refolded.size(); ++i) {
        CHECK(refolded[i].threshold == result.sweep[i].threshold);
        CHECK(refolded[i].rejection_rate == result.sweep[i].rejection_rate);
        const bool both_nan =
            std::isnan(refolded[i].mse_accepted) && std::isnan(result.sweep[i].mse_accepted);
        CHECK((both_nan || refolded[i].mse_accepted == result.sweep[i].mse_accepted));
    }

    // One row recounted by hand.
    const double threshold = thresholds[6];
    long accepted = 0;
    for (const auto& rec : result.records)
        if (rec.interval_width <= threshold) ++accepted;
    CHECK(result.sweep[6].n_accepted == accepted * spec.test_points);

    const fs::path dir = fresh_dir("abstain_artifacts");
    run_experiment(spec, dir);
    std::ostringstream expected;
    abstain::write_sweep_csv(expected, result.sweep);
    CHECK(read_file(dir / "sweep.csv") == expected.str());
    CHECK(count_lines(read_file(dir / "trials.csv")) == 1 + spec.trials);
}

TEST_CASE("run_experiment writes the documented artifact set per kind") {
    using Files = std::vector<std::string>;
    ExperimentSpec spec = small_coverage_spec();
    spec.trials = 6;

    SUBCASE("coverage artifacts") {
        const fs::path dir = fresh_dir("files_coverage");
        const auto output = run_experiment(spec, dir);
        CHECK(output.files == Files{"trials.csv", "summary.csv", "meta.json"});
        for (const auto& name : output.files) CHECK(fs::exists(dir / name));
        const auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
        CHECK(meta.at("version").get<std::string>() == kVersion);
        CHECK(meta.at("name").get<std::string>() == "coverage_table");
        CHECK(meta.at("failures").get<long>() == 0);
        CHECK(meta.at("records").get<long>() == 24);
        CHECK(meta.at("seed").get<std::uint64_t>() == spec.seed);
    }

    SUBCASE("json emission adds a parseable summary.json") {
        const fs::path dir = fresh_dir("files_json");
        const auto output = run_experiment(spec, dir, "json");
        CHECK(output.files == Files{"trials.csv", "summary.csv", "summary.json", "meta.json"});
        const auto summary = nlohmann::json::parse(output.summary_json);
        REQUIRE(summary.is_array());
        CHECK(summary.size() == spec.methods.size());
        CHECK(summary.at(0).at("method").get<std::string>() == "markov");
        CHECK(nlohmann::json::parse(read_file(dir / "summary.json")) == summary);
        CHECK_THROWS_AS(run_experiment(spec, dir, "yaml"), std::invalid_argument);
    }

    SUBCASE("width, rejection, noise-free, curve, and abstention sets") {
        ExperimentSpec width = spec;
        width.kind = ExperimentKind::width_table;
        width.scenario.n = 8;
        width.methods = {bounds::KMethod::split};
        CHECK(run_experiment(width, fresh_dir("files_width")).files ==
              Files{"trials.csv", "timings.csv", "summary.csv", "meta.json"});

        ExperimentSpec reject = width;
        reject.kind = ExperimentKind::rejection_test;
        CHECK(run_experiment(reject, fresh_dir("files_reject")).files ==
              Files{"trials.csv", "timings.csv", "summary.csv", "meta.json"});

        ExperimentSpec paired = spec;
        paired.kind = ExperimentKind::noise_free_vs_noisy;
        paired.test_points = 50;
        CHECK(run_experiment(paired, fresh_dir("files_paired")).files ==
              Files{"trials.csv", "summary.csv", "meta.json"});

        ExperimentSpec curve = spec;
        curve.kind = ExperimentKind::coverage_curve;
        curve.scenario.n = 12;
        curve.pac_deltas = {0.1, 0.2};
        CHECK(run_experiment(curve, fresh_dir("files_curve")).files ==
              Files{"curve.csv", "pac_deltas.csv", "meta.json"});

        ExperimentSpec sweep = spec;
        sweep.kind = ExperimentKind::abstention_sweep;
        sweep.test_points = 60;
        CHECK(run_experiment(sweep, fresh_dir("files_sweep")).files ==
              Files{"trials.csv", "sweep.csv", "summary.csv", "meta.json"});
    }
}
