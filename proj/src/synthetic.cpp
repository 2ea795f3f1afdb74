#include "confreg/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "confreg/rng.hpp"

namespace confreg::synthetic {

namespace {

double sine_term(std::span<const double> x) {
    double sq = 0.0;
    for (double v : x) sq += v * v;
    return std::sin(8.0 * std::numbers::pi * std::sqrt(sq));
}

double draw_noise(SplitMix64& rng, NoiseKind kind, double linear_mean) {
    switch (kind) {
        case NoiseKind::additive_gaussian:
            return rng.normal();
        case NoiseKind::multiplicative_gaussian:
            return rng.normal() * std::fabs(linear_mean);
        case NoiseKind::outliers: {
            double scale = rng.uniform() < 0.9 ? 10.0 : 0.05;
            return rng.normal() * scale;
        }
        case NoiseKind::discrete:
            return rng.uniform() < 0.5 ? -0.5 : 0.5;
    }
    return 0.0;
}

}  // namespace

Scenario sample_scenario(const ScenarioConfig& config) {
    if (config.d <= 0 || config.n_obs <= 0 || config.n < 0)
        throw std::invalid_argument("sample_scenario: counts must be positive");

    Scenario sc;
    SplitMix64 theta_rng(config.theta_seed);
    sc.theta_star.resize(std::size_t(config.d));
    for (double& v : sc.theta_star) v = theta_rng.normal();

    SplitMix64 rng(config.data_seed);
    sc.X = Matrix(config.n_obs, config.d);
    for (double& v : sc.X.data) v = rng.uniform();
    sc.X_unlabelled = Matrix(config.n, config.d);
    for (double& v : sc.X_unlabelled.data) v = rng.uniform();

    sc.y.resize(std::size_t(config.n_obs));
    sc.noise_free.resize(std::size_t(config.n_obs));
    for (long i = 0; i < config.n_obs; ++i) {
        auto xi = sc.X.row(i);
        double linear = dot(sc.theta_star, xi);
        double mean = linear;
        if (config.nonlinear) mean += 0.5 * sine_term(xi);
        sc.noise_free[std::size_t(i)] = mean;
        sc.y[std::size_t(i)] = mean + draw_noise(rng, config.noise, linear);
    }
    return sc;
}

Vector augmented_features(std::span<const double> x) {
    Vector out(x.begin(), x.end());
    out.push_back(sine_term(x));
    return out;
}

}  // namespace confreg::synthetic
