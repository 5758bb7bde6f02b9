#include "consplat/error.hpp"
#include "consplat/latent.hpp"
#include "consplat/schedule.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace consplat;

namespace {

// The published sampling recipe, written out independently.
std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double reference_sample(std::uint64_t seed, std::uint64_t stream, std::size_t i) {
    const std::uint64_t key = mix(mix(seed) ^ stream);
    auto u = [&](std::uint64_t j) { return static_cast<double>((mix(key ^ j) >> 11) + 1) * 0x1.0p-53; };
    const std::size_t p = i / 2;
    const double r = std::sqrt(-2.0 * std::log(u(2 * p)));
    const double theta = 2.0 * std::numbers::pi * u(2 * p + 1);
    return i % 2 == 0 ? r * std::cos(theta) : r * std::sin(theta);
}

Image filled(double v, int c = 3) { return Image(4, 3, c, v); }

} // namespace

TEST_CASE("noise samples follow the counter-based recipe") {
    const auto s = gaussian_samples(42, 7, 11);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == reference_sample(42, 7, i));
    // Prefix property: a longer draw starts with the shorter one.
    const auto longer = gaussian_samples(42, 7, 30);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(longer[i] == s[i]);
    CHECK(gaussian_samples(42, 8, 1)[0] != s[0]);
}

TEST_CASE("noise moments are standard normal") {
    const auto s = gaussian_samples(1, 0, 200000);
    double m = 0.0, v = 0.0;
    for (double x : s) m += x;
    m /= s.size();
    for (double x : s) v += (x - m) * (x - m);
    v /= s.size();
    CHECK(std::abs(m) < 0.01);
    CHECK(std::abs(v - 1.0) < 0.01);
    const auto u = uniform_samples(1, 0, 100000);
    double mu = 0.0;
    for (double x : u) {
        CHECK(x > 0.0);
        CHECK(x <= 1.0);
        mu += x;
    }
    CHECK(std::abs(mu / u.size() - 0.5) < 0.005);
}

TEST_CASE("noise offset inverts add_noise") {
    const Image z = gaussian_noise_image(3, 0, 8, 8, 4);
    const Image eps = gaussian_noise_image(3, 1, 8, 8, 4);
    for (double abar : {0.999, 0.5, 0.01}) {
        const Image zt = add_noise(z, abar, eps);
        CHECK(max_abs_difference(noise_offset(zt, z, abar), eps) < 1e-12);
    }
    CHECK_THROWS_AS(noise_offset(z, z, 1.0), DegenerateScheduleError);
}

TEST_CASE("denoise_edit follows its closed form") {
    const double abar = 0.36;
    const Image z = filled(1.0), tgt = filled(0.5), src = filled(0.2), delta = filled(0.1);
    const Image out = denoise_edit(z, tgt, src, delta, abar);
    CHECK(out.at(0, 0, 0) == doctest::Approx((1.0 - 0.8 * (0.5 - 0.2 + 0.1)) / 0.6));
    // Identical predictions and the true offset return the clean latent.
    const Image clean = gaussian_noise_image(9, 0, 4, 3, 3);
    const Image eps = gaussian_noise_image(9, 1, 4, 3, 3);
    const Image zt = add_noise(clean, abar, eps);
    CHECK(max_abs_difference(denoise_edit(zt, eps, eps, eps, abar), clean) < 1e-12);
}

TEST_CASE("local blend mixes by mask and rejects masks outside [0, 1]") {
    const Image a = filled(1.0), b = filled(0.0);
    Image mask(4, 3, 1, 0.25);
    CHECK(local_blend(mask, a, b).at(1, 1, 2) == doctest::Approx(0.25));
    CHECK(local_blend(mask, a, b, BlendMode::Threshold, 0.3).at(1, 1, 2) == 0.0);
    CHECK(local_blend(mask, a, b, BlendMode::Threshold, 0.2).at(1, 1, 2) == 1.0);
    mask.at(0, 0, 0) = 1.5;
    CHECK_THROWS_AS(local_blend(mask, a, b), InvalidArgument);
    CHECK_THROWS_AS(local_blend(Image(2, 2, 1, 0.5), a, b), DimensionError);
    // Per-channel masks are accepted as well.
    CHECK(local_blend(filled(1.0), a, b) == a);
}

TEST_CASE("step seeds differ across iterations and steps") {
    CHECK(step_seed(1, 0, 0) != step_seed(1, 0, 1));
    CHECK(step_seed(1, 0, 0) != step_seed(1, 1, 0));
    CHECK(step_seed(1, 0, 0) != step_seed(2, 0, 0));
    CHECK(step_seed(1, 2, 3) == step_seed(1, 2, 3));
}

TEST_CASE("alpha bar table is a decreasing cumulative product") {
    const auto table = alpha_bar_table(1000);
    REQUIRE(table.size() == 1001);
    CHECK(table[0] == 1.0);
    CHECK(table[1] == doctest::Approx(1.0 - 1e-4));
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) {
        prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
        CHECK(table[t] == doctest::Approx(prod).epsilon(1e-12));
        CHECK(table[t] < table[t - 1]);
    }
}

TEST_CASE("schedule spacing and validation") {
    const TimestepSchedule s = make_schedule(1000, 12);
    REQUIRE(s.size() == 12);
    CHECK(s[0].t == 1000);
    CHECK(s[11].t == 1);
    for (std::size_t i = 1; i < s.size(); ++i) {
        CHECK(s[i].t < s[i - 1].t);
        CHECK(s[i].alpha_bar > s[i - 1].alpha_bar);
    }
    CHECK(s[1].t == static_cast<int>(std::lround(1000 - 999.0 / 11)));
    const auto table = alpha_bar_table(1000);
    CHECK(s[5].alpha_bar == table[s[5].t]);
    CHECK(make_schedule(3, 3).size() == 3);
    CHECK_THROWS_AS(make_schedule(10, 1), InvalidArgument);
    CHECK_THROWS_AS(make_schedule(10, 11), InvalidArgument);
}
