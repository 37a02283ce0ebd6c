#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hipass/autodiff.hpp"

namespace hipass::nn {

struct ScheduleConfig {
    double initial_lr = 2e-4;
    double min_lr = 1e-7;
    std::size_t period = 2000;  // steps between warm restarts
};

/// min + (init - min)/2 * (1 + cos(pi * (step mod P) / P)).
double cosine_restart_lr(std::size_t step, const ScheduleConfig& cfg);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainState {
    std::size_t step = 0;
    double learning_rate = 2e-4;
    ScheduleConfig schedule;
    AdamConfig adam;
    std::vector<Tensor> m;  // first moments, parallel to ParameterSet::all()
    std::vector<Tensor> v;  // second moments
};

/// One bias-corrected Adam update at the scheduled rate for `state.step`,
/// then advances the step counter. Moments are allocated on first use.
void adam_step(TrainState& state, ParameterSet& params);

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_gradient = 0.0;
    bool frozen = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;

    bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

/// Compares the tape gradient of `loss` with respect to each tensor in
/// `inputs` against central differences with step h. `loss` must rebuild its
/// graph from the current values on every call. Inputs that do not require
/// a gradient are reported as frozen with their (zero) tape gradient.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Var()>& loss, const std::vector<Var>& inputs, double h = 1e-5,
                           double floor = 1e-6);

}  // namespace hipass::nn
