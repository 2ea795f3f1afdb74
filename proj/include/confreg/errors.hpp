#pragma once

#include <stdexcept>
#include <string>

namespace confreg {

// Design matrix does not have full column rank (up to tolerance).
class SingularDesignError : public std::runtime_error {
public:
    SingularDesignError(std::string msg, long deficient)
        : std::runtime_error(std::move(msg)), deficient_columns(deficient) {}
    long deficient_columns;
};

// Calibration set too small for the requested miscoverage level.
class InfeasibleQuantileError : public std::runtime_error {
public:
    InfeasibleQuantileError(std::string msg, long minimal_n_cal)
        : std::runtime_error(std::move(msg)), minimal_n_cal(minimal_n_cal) {}
    long minimal_n_cal;
};

// Effective miscoverage level reached or exceeded 1; no nontrivial guarantee exists.
class VacuousGuaranteeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// No vote threshold k (including k = 0 where applicable) meets the requested confidence.
class NoValidKError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace confreg
