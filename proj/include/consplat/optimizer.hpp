#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace consplat {

// Bias-corrected Adam moments for one parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update in place. Moments are lazily sized on first use. Throws
// NonFiniteError naming `group` if any gradient entry is not finite (params and state
// are left untouched in that case).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state,
               double lr, std::string_view group = "params");

} // namespace consplat
