#include "consplat/schedule.hpp"

#include "consplat/error.hpp"

#include <cmath>
#include <string>

namespace consplat {

std::vector<double> alpha_bar_table(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 1) throw InvalidArgument("total diffusion steps must be positive");
    std::vector<double> table(total_steps + 1, 1.0);
    for (int t = 1; t <= total_steps; ++t) {
        const double beta = total_steps == 1
                                ? beta_start
                                : beta_start + (beta_end - beta_start) * (t - 1) / (total_steps - 1);
        table[t] = table[t - 1] * (1.0 - beta);
    }
    return table;
}

TimestepSchedule make_schedule(int total_steps, int count, double beta_start, double beta_end) {
    if (count < 2) throw InvalidArgument("schedule needs at least 2 timesteps");
    if (count > total_steps) {
        throw InvalidArgument("cannot sample " + std::to_string(count) + " timesteps from " +
                              std::to_string(total_steps));
    }
    const auto alpha_bar = alpha_bar_table(total_steps, beta_start, beta_end);
    TimestepSchedule schedule;
    schedule.total_steps = total_steps;
    const double stride = static_cast<double>(total_steps - 1) / (count - 1);
    for (int i = 0; i < count; ++i) {
        const int t = static_cast<int>(std::lround(total_steps - i * stride));
        if (!schedule.entries.empty() && schedule.entries.back().t == t) continue;
        schedule.entries.push_back({t, alpha_bar[t]});
    }
    return schedule;
}

} // namespace consplat
