#include "hipass/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hipass::nn {

double cosine_restart_lr(std::size_t step, const ScheduleConfig& cfg) {
    const std::size_t period = std::max<std::size_t>(cfg.period, 1);
    const double phase = static_cast<double>(step % period) / static_cast<double>(period);
    return cfg.min_lr + 0.5 * (cfg.initial_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * phase));
}

void adam_step(TrainState& state, ParameterSet& params) {
    const auto& ps = params.all();
    if (state.m.size() != ps.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& p : ps) {
            state.m.emplace_back(p.shape());
            state.v.emplace_back(p.shape());
        }
    }
    state.learning_rate = cosine_restart_lr(state.step, state.schedule);
    const auto t = static_cast<double>(state.step + 1);
    const double b1 = state.adam.beta1, b2 = state.adam.beta2;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t n = 0; n < ps.size(); ++n) {
        Var p = ps[n];
        const Tensor& g = p.node()->grad;
        if (g.empty()) continue;
        Tensor& value = p.mutable_value();
        Tensor& m = state.m[n];
        Tensor& v = state.v[n];
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / c1, vhat = v[i] / c2;
            value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.adam.eps);
        }
    }
    ++state.step;
}

GradCheckReport grad_check(const std::function<Var()>& loss, const std::vector<Var>& inputs, double h, double floor) {
    for (auto v : inputs) v.zero_grad();
    Var root = loss();
    backward(root);

    GradCheckReport report;
    for (auto in : inputs) {
        GradCheckEntry entry;
        entry.name = in.name().empty() ? "<unnamed>" : in.name();
        const Tensor analytic = in.grad();
        entry.max_abs_gradient = analytic.max_abs();
        if (!in.requires_grad()) {
            entry.frozen = true;
            report.entries.push_back(entry);
            continue;
        }
        Tensor& value = in.mutable_value();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            value[i] = orig + h;
            const double fp = loss().value()[0];
            value[i] = orig - h;
            const double fm = loss().value()[0];
            value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
            ++entry.checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(entry);
    }
    return report;
}

}  // namespace hipass::nn
