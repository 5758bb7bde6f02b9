#pragma once

#include <vector>

namespace consplat {

struct TimestepEntry {
    int t = 0;
    double alpha_bar = 1.0; // cumulative product of (1 - beta) up to t
};

// Descending diffusion timesteps from T to 1.
struct TimestepSchedule {
    int total_steps = 1000;
    std::vector<TimestepEntry> entries;

    std::size_t size() const { return entries.size(); }
    const TimestepEntry &operator[](std::size_t i) const { return entries[i]; }
};

// alpha_bar[t] for t = 0..T (alpha_bar[0] = 1) under a linear beta ramp.
std::vector<double> alpha_bar_table(int total_steps, double beta_start = 1e-4, double beta_end = 0.02);

// N evenly spaced timesteps t_i = round(T - (i-1)(T-1)/(N-1)); duplicates collapse.
// Throws InvalidArgument unless 2 <= N <= T.
TimestepSchedule make_schedule(int total_steps, int count, double beta_start = 1e-4,
                               double beta_end = 0.02);

} // namespace consplat
