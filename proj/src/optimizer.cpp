#include "consplat/optimizer.hpp"

#include "consplat/error.hpp"

#include <cmath>
#include <string>

namespace consplat {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state,
               double lr, std::string_view group) {
    if (params.size() != grads.size()) {
        throw DimensionError("adam_step: " + std::string(group) + " has " +
                             std::to_string(params.size()) + " params but " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NonFiniteError("adam_step: non-finite gradient in group '" + std::string(group) +
                                 "' at index " + std::to_string(i));
        }
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

} // namespace consplat
