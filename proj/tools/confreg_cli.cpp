// Experiment runner. Each subcommand maps to one experiment kind; flags
// override fields of the JSON config when both are given. Artifacts land in
// the output directory: trials.csv (one row per trial measurement),
// summary.csv (a pure fold of trials.csv), meta.json (resolved config), and
// per kind timings.csv / curve.csv / pac_deltas.csv / sweep.csv. trials.csv
// and summary.csv depend only on the master seed, never on --workers;
// timings.csv carries the wall-clock measurements and does not.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "confreg/bounds.hpp"
#include "confreg/conformal.hpp"
#include "confreg/experiments.hpp"
#include "confreg/milp.hpp"
#include "confreg/region.hpp"
#include "confreg/rng.hpp"

namespace {

namespace exp = confreg::experiments;

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<long> trials, workers, d, n_obs, n, test_points, node_limit;
    std::optional<double> alpha, beta, delta, b, split_fraction, box_half_width;
    std::optional<std::string> noise, out, methods;
    std::optional<bool> assumption3, nonlinear;
    std::string emit = "csv";
};

void add_common_options(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config, "JSON experiment config; flags below override it");
    sub->add_option("--seed", o.seed, "master seed; trial t reseeds from (seed, t)");
    sub->add_option("--trials", o.trials, "Monte Carlo trials");
    sub->add_option("--workers", o.workers, "worker threads (never changes trials.csv)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--emit", o.emit, "stdout summary format")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--alpha", o.alpha, "interval miscoverage level");
    sub->add_option("--beta", o.beta, "region miscoverage budget");
    sub->add_option("--delta", o.delta, "pac certificate tolerance");
    sub->add_option("--b", o.b, "noise sign-split mass lower bound, in (0, 1/2]");
    sub->add_flag("--assumption3,!--no-assumption3", o.assumption3,
                  "noise-free value inherits interval coverage (skips the 1/b inflation)");
    sub->add_option("--d", o.d, "feature dimension");
    sub->add_option("--n-obs", o.n_obs, "labelled rows per trial");
    sub->add_option("--n", o.n, "unlabelled voting rows per trial");
    sub->add_option("--noise", o.noise,
                    "noise law: additive_gaussian | multiplicative_gaussian | outliers | discrete");
    sub->add_flag("--nonlinear,!--no-nonlinear", o.nonlinear,
                  "add the sine term to the regression mean");
    sub->add_option("--split-fraction", o.split_fraction, "fraction of rows used for training");
    sub->add_option("--box", o.box_half_width, "reference box half width");
    sub->add_option("--test-points", o.test_points, "fresh test rows per trial");
    sub->add_option("--node-limit", o.node_limit, "branch and bound node budget per solve");
    sub->add_option("--methods", o.methods,
                    "comma list from markov,worst_case,split,pac");
}

std::vector<confreg::bounds::KMethod> parse_methods(const std::string& text) {
    std::vector<confreg::bounds::KMethod> out;
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, ',')) {
        if (!token.empty()) out.push_back(exp::method_from_name(token));
    }
    if (out.empty()) throw std::invalid_argument("--methods must name at least one method");
    return out;
}

exp::ExperimentSpec resolve_spec(exp::ExperimentKind kind, const Overrides& o) {
    exp::ExperimentSpec spec;
    if (o.config) {
        std::ifstream file(*o.config);
        if (!file) throw std::runtime_error("cannot open config " + *o.config);
        spec = exp::read_experiment_json(file);
    }
    spec.kind = kind;  // the subcommand wins over the config's name field
    if (o.seed) spec.seed = *o.seed;
    if (o.trials) spec.trials = *o.trials;
    if (o.workers) spec.workers = *o.workers;
    if (o.out) spec.out_dir = *o.out;
    if (o.alpha) spec.alpha = *o.alpha;
    if (o.beta) spec.beta = *o.beta;
    if (o.delta) spec.delta = *o.delta;
    if (o.b) spec.noise_assumption.b = *o.b;
    if (o.assumption3) spec.noise_assumption.assumption3 = *o.assumption3;
    if (o.d) spec.scenario.d = *o.d;
    if (o.n_obs) spec.scenario.n_obs = *o.n_obs;
    if (o.n) spec.scenario.n = *o.n;
    if (o.noise) spec.scenario.noise = exp::noise_from_name(*o.noise);
    if (o.nonlinear) spec.scenario.nonlinear = *o.nonlinear;
    if (o.split_fraction) spec.split_fraction = *o.split_fraction;
    if (o.box_half_width) spec.box_half_width = *o.box_half_width;
    if (o.test_points) spec.test_points = *o.test_points;
    if (o.node_limit) spec.node_limit = *o.node_limit;
    if (o.methods) spec.methods = parse_methods(*o.methods);
    spec.validate();
    return spec;
}

int run_kind(exp::ExperimentKind kind, const Overrides& o) {
    const auto spec = resolve_spec(kind, o);
    const auto result = exp::run_experiment(spec, spec.out_dir, o.emit);
    std::cout << (o.emit == "json" ? result.summary_json : result.summary_csv);
    std::cerr << "wrote";
    for (const auto& name : result.files) std::cerr << ' ' << spec.out_dir << '/' << name;
    std::cerr << '\n';
    return 0;
}

// Fast pinned smoke checks across the library; exits nonzero on any failure.
int run_selftest() {
    using confreg::Vector;
    namespace bounds = confreg::bounds;
    namespace conformal = confreg::conformal;
    namespace region = confreg::region;
    namespace milp = confreg::milp;

    struct Check {
        const char* name;
        std::function<bool()> fn;
    };
    const bounds::NoiseAssumption a3{0.5, true};
    std::vector<Check> checks = {
        {"calibration quantile rank",
         [] { return conformal::quantile_rank(0.1, 50) == 46; }},
        {"split threshold and its bound",
         [&] {
             const auto sel = bounds::k_split(30, 50, 0.1, 0.1, a3);
             const double h = bounds::split_bound_H(30, 24, 50, 0.1, a3);
             return sel.k == 24 && std::abs(h - 0.942482937478) < 1e-9;
         }},
        {"pac thresholds, plain and refined",
         [&] {
             return bounds::k_pac(30, 50, 0.1, 0.1, 0.1, a3, false).k == 17 &&
                    bounds::k_pac(30, 50, 0.1, 0.1, 0.1, a3, true).k == 23;
         }},
        {"markov threshold determinism",
         [&] {
             const auto a = bounds::k_markov(30, 0.1, 0.1, 42);
             const auto b = bounds::k_markov(30, 0.1, 0.1, 42);
             return a.k == b.k && a.k >= 1 && a.k <= 30;
         }},
        {"one-dimensional region optimization",
         [&] {
             std::vector<conformal::PredictionInterval> intervals{{2.0, 4.0}, {3.0, 5.0}};
             conformal::UnlabelledDataset inputs;
             inputs.inputs = confreg::Matrix(2, 1);
             inputs.inputs(0, 0) = 1.0;
             inputs.inputs(1, 0) = 1.0;
             bounds::KSelection sel;
             sel.k = 2;
             sel.n = 2;
             const auto spec = region::build_region(intervals, inputs, sel, 10.0);
             const auto lo = region::optimize(spec, {1.0}, milp::Sense::minimize);
             const auto hi = region::optimize(spec, {1.0}, milp::Sense::maximize);
             return lo.status == region::RegionStatus::optimal &&
                    hi.status == region::RegionStatus::optimal &&
                    std::abs(lo.value - 3.0) < 1e-7 && std::abs(hi.value - 4.0) < 1e-7 &&
                    !region::is_empty(spec).empty;
         }},
        {"knapsack against enumeration",
         [] {
             milp::MilpProblem p;
             p.sense = milp::Sense::maximize;
             p.n_binary = 4;
             p.objective = {8.0, 11.0, 6.0, 4.0};
             p.constraints.push_back({{5.0, 7.0, 4.0, 3.0}, milp::Relation::le, 14.0});
             const auto sol = milp::solve_milp(p);
             double best = 0.0;
             for (int mask = 0; mask < 16; ++mask) {
                 double value = 0.0, load = 0.0;
                 for (int j = 0; j < 4; ++j)
                     if (mask & (1 << j)) {
                         value += p.objective[std::size_t(j)];
                         load += p.constraints[0].coeffs[std::size_t(j)];
                     }
                 if (load <= 14.0) best = std::max(best, value);
             }
             return sol.status == milp::MilpStatus::optimal && std::abs(sol.value - best) < 1e-9;
         }},
        {"paired coverage fixture",
         [] {
             conformal::SplitCalibration cal;
             cal.predictor = {1.0};
             cal.calibration_scores = {0.99};
             cal.alpha = 0.1;
             cal.quantile_radius = 0.99;
             conformal::UnlabelledDataset inputs;
             inputs.inputs = confreg::Matrix(4, 1);
             inputs.inputs(0, 0) = 0.0;
             inputs.inputs(1, 0) = 0.0;
             inputs.inputs(2, 0) = 1.0;
             inputs.inputs(3, 0) = 1.0;
             const auto paired = exp::paired_coverage(cal, inputs, {0.02, -0.02, 0.02, -0.02},
                                                      {0.0, 0.0, 0.0, 0.0}, {9.0, 9.0, 1.0, 1.0});
             return paired.noisy == 19.0 / 20.0 && paired.noise_free == 18.0 / 20.0;
         }},
        {"sine benchmark determinism",
         [] {
             const auto a = confreg::abstain::sample_sine_scenario(16, 8, 7);
             const auto b = confreg::abstain::sample_sine_scenario(16, 8, 7);
             return a.train.outputs == b.train.outputs && a.test_noise_free == b.test_noise_free;
         }},
    };

    int failures = 0;
    for (const auto& check : checks) {
        bool ok = false;
        std::string detail;
        try {
            ok = check.fn();
        } catch (const std::exception& e) {
            detail = e.what();
        }
        if (ok) {
            std::cout << "PASS " << check.name << '\n';
        } else {
            ++failures;
            std::cout << "FAIL " << check.name;
            if (!detail.empty()) std::cout << " (" << detail << ')';
            std::cout << '\n';
        }
    }
    return failures;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Confidence regions for linear-model parameters from aggregated conformal "
        "intervals: Monte Carlo experiment runner"};
    app.require_subcommand(1);

    struct SubSpec {
        const char* command;
        const char* help;
        exp::ExperimentKind kind;
    };
    const std::vector<SubSpec> subs = {
        {"coverage", "How often the voted region captures the true parameter",
         exp::ExperimentKind::coverage_table},
        {"widths", "Coordinate interval widths of the region over the reference box",
         exp::ExperimentKind::width_table},
        {"reject", "Linearity test: how often the region is empty on sine-perturbed data",
         exp::ExperimentKind::rejection_test},
        {"noisefree", "Interval coverage of noisy outputs vs noise-free values",
         exp::ExperimentKind::noise_free_vs_noisy},
        {"curve", "Guaranteed coverage of every vote threshold, plus a pac delta sweep",
         exp::ExperimentKind::coverage_curve},
        {"abstain", "Abstention trade-off on the heteroskedastic sine benchmark",
         exp::ExperimentKind::abstention_sweep},
    };

    Overrides overrides;
    std::vector<std::pair<CLI::App*, exp::ExperimentKind>> parsed;
    for (const auto& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.command, sub.help);
        add_common_options(cmd, overrides);
        parsed.emplace_back(cmd, sub.kind);
    }
    CLI::App* selftest = app.add_subcommand("selftest", "Run fast pinned smoke checks and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (selftest->parsed()) return run_selftest();
        for (const auto& [cmd, kind] : parsed)
            if (cmd->parsed()) return run_kind(kind, overrides);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
