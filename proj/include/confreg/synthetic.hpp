#pragma once

#include <cstdint>
#include <span>

#include "confreg/core.hpp"

// Synthetic benchmark generator: linear responses under four symmetric noise
// laws, plus a sine-perturbed nonlinear variant used by the specification
// test. Everything is a pure function of the two seeds.

namespace confreg::synthetic {

enum class NoiseKind { additive_gaussian, multiplicative_gaussian, outliers, discrete };

struct ScenarioConfig {
    long d = 3;
    long n_obs = 100;  // labelled rows
    long n = 30;       // unlabelled rows (the voting batch)
    NoiseKind noise = NoiseKind::additive_gaussian;
    bool nonlinear = false;  // adds 0.5 sin(8 pi ||x||_2) to the regression mean
    std::uint64_t theta_seed = 1;
    std::uint64_t data_seed = 2;
};

struct Scenario {
    Vector theta_star;    // d true coefficients, from theta_seed only
    Matrix X;             // n_obs x d, entries Unif[0,1]
    Vector y;             // noisy outputs
    Vector noise_free;    // outputs with the noise term removed
    Matrix X_unlabelled;  // n x d
};

// Draw order is part of the reproducibility contract: theta_star from its own
// generator; then, from the data generator, all X rows, all unlabelled rows,
// and finally one noise draw per labelled row.
Scenario sample_scenario(const ScenarioConfig& config);

// Appends sin(8 pi ||x||_2) as an extra feature.
Vector augmented_features(std::span<const double> x);

// Every noise law above is conditionally symmetric about zero, so the mass on
// either side of zero is at least 1/2 at every x.
inline constexpr double noise_split_mass = 0.5;

}  // namespace confreg::synthetic
