#pragma once

#include "consplat/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace consplat {

enum class LatentRole { Source, Original, Noisy, Edited, Consistent, Blended, Noise };

const char *role_name(LatentRole role);

// Per-view latent arrays sharing one shape.
struct LatentStack {
    LatentRole role = LatentRole::Source;
    std::vector<Image> views;

    std::size_t size() const { return views.size(); }
    void validate() const;
};

// z_t = sqrt(abar) z + sqrt(1 - abar) eps
Image add_noise(const Image &z, double alpha_bar, const Image &eps);

// (z_ori_t - sqrt(abar) z_ori) / sqrt(1 - abar). Throws DegenerateScheduleError when
// abar >= 1.
Image noise_offset(const Image &z_ori_t, const Image &z_ori, double alpha_bar);

// (z - sqrt(1 - abar)(eps_tgt - eps_src + delta)) / sqrt(abar), where z is the noisy
// latent z_t (or the clean source latent under the literal variant).
Image denoise_edit(const Image &z, const Image &eps_tgt, const Image &eps_src, const Image &delta,
                   double alpha_bar);

enum class BlendMode { Soft, Threshold };

// mask * z_con + (1 - mask) * z_src. A single-channel mask broadcasts over latent
// channels. Threshold mode binarizes the mask at `threshold` first. Throws
// InvalidArgument if the mask leaves [0, 1].
Image local_blend(const Image &mask, const Image &z_con, const Image &z_src,
                  BlendMode mode = BlendMode::Soft, double threshold = 0.3);

// Counter-based standard normal samples. Sample i of stream s under seed k is a pure
// function of (k, s, i), so any implementation of the same recipe reproduces it:
//   key    = splitmix64(splitmix64(k) ^ s)
//   u(j)   = ((splitmix64(key ^ j) >> 11) + 1) * 2^-53          in (0, 1]
//   pair p = (u(2p), u(2p + 1)) -> sqrt(-2 ln u0) * (cos, sin)(2 pi u1)
//   sample 2p takes the cos branch, sample 2p + 1 the sin branch.
std::uint64_t splitmix64(std::uint64_t x);
std::vector<double> gaussian_samples(std::uint64_t seed, std::uint64_t stream, std::size_t count);
Image gaussian_noise_image(std::uint64_t seed, std::uint64_t stream, int width, int height, int channels);

// Seed for one (iteration, step) of the editing loop.
std::uint64_t step_seed(std::uint64_t seed, int iteration, int step);

} // namespace consplat

namespace consplat {

// Uniform samples in (0, 1] from the same counter-based recipe as gaussian_samples.
std::vector<double> uniform_samples(std::uint64_t seed, std::uint64_t stream, std::size_t count);

} // namespace consplat
