#include "consplat/latent.hpp"

#include "consplat/error.hpp"

#include <cmath>
#include <numbers>

namespace consplat {

const char *role_name(LatentRole role) {
    switch (role) {
    case LatentRole::Source: return "src";
    case LatentRole::Original: return "ori";
    case LatentRole::Noisy: return "noisy";
    case LatentRole::Edited: return "edit";
    case LatentRole::Consistent: return "con";
    case LatentRole::Blended: return "bld";
    case LatentRole::Noise: return "noise";
    }
    return "unknown";
}

void LatentStack::validate() const {
    for (std::size_t v = 0; v < views.size(); ++v) {
        require_same_shape(views[v], views.front(), std::string("latent stack '") + role_name(role) + "'");
        for (double x : views[v].data()) {
            if (!std::isfinite(x)) {
                throw NonFiniteError(std::string("latent stack '") + role_name(role) +
                                     "' has non-finite values in view " + std::to_string(v));
            }
        }
    }
}

Image add_noise(const Image &z, double alpha_bar, const Image &eps) {
    require_same_shape(z, eps, "add_noise");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    Image out(z.width(), z.height(), z.channels());
    for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = a * z.data()[i] + b * eps.data()[i];
    return out;
}

Image noise_offset(const Image &z_ori_t, const Image &z_ori, double alpha_bar) {
    require_same_shape(z_ori_t, z_ori, "noise_offset");
    if (!(alpha_bar < 1.0)) throw DegenerateScheduleError("noise_offset needs alpha_bar < 1");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    Image out(z_ori.width(), z_ori.height(), z_ori.channels());
    for (std::size_t i = 0; i < z_ori.size(); ++i) {
        out.data()[i] = (z_ori_t.data()[i] - a * z_ori.data()[i]) / b;
    }
    return out;
}

Image denoise_edit(const Image &z, const Image &eps_tgt, const Image &eps_src, const Image &delta,
                   double alpha_bar) {
    require_same_shape(z, eps_tgt, "denoise_edit (eps_tgt)");
    require_same_shape(z, eps_src, "denoise_edit (eps_src)");
    require_same_shape(z, delta, "denoise_edit (delta)");
    if (!(alpha_bar > 0.0)) throw DegenerateScheduleError("denoise_edit needs alpha_bar > 0");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    Image out(z.width(), z.height(), z.channels());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out.data()[i] =
            (z.data()[i] - b * (eps_tgt.data()[i] - eps_src.data()[i] + delta.data()[i])) / a;
    }
    return out;
}

Image local_blend(const Image &mask, const Image &z_con, const Image &z_src, BlendMode mode,
                  double threshold) {
    require_same_shape(z_con, z_src, "local_blend");
    if (mask.width() != z_con.width() || mask.height() != z_con.height() ||
        (mask.channels() != 1 && mask.channels() != z_con.channels())) {
        throw DimensionError("local_blend: mask is not broadcastable to the latent shape");
    }
    Image out(z_con.width(), z_con.height(), z_con.channels());
    const int C = z_con.channels();
    for (int y = 0; y < z_con.height(); ++y) {
        for (int x = 0; x < z_con.width(); ++x) {
            for (int c = 0; c < C; ++c) {
                double m = mask.at(x, y, mask.channels() == 1 ? 0 : c);
                if (!(m >= 0.0 && m <= 1.0)) throw InvalidArgument("local_blend: mask value outside [0, 1]");
                if (mode == BlendMode::Threshold) m = m >= threshold ? 1.0 : 0.0;
                out.at(x, y, c) = m * z_con.at(x, y, c) + (1.0 - m) * z_src.at(x, y, c);
            }
        }
    }
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::vector<double> gaussian_samples(std::uint64_t seed, std::uint64_t stream, std::size_t count) {
    const std::uint64_t key = splitmix64(splitmix64(seed) ^ stream);
    auto uniform = [key](std::uint64_t j) {
        return static_cast<double>((splitmix64(key ^ j) >> 11) + 1) * 0x1.0p-53;
    };
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; i += 2) {
        const std::uint64_t pair = i / 2;
        const double r = std::sqrt(-2.0 * std::log(uniform(2 * pair)));
        const double theta = 2.0 * std::numbers::pi * uniform(2 * pair + 1);
        out[i] = r * std::cos(theta);
        if (i + 1 < count) out[i + 1] = r * std::sin(theta);
    }
    return out;
}

Image gaussian_noise_image(std::uint64_t seed, std::uint64_t stream, int width, int height, int channels) {
    Image out(width, height, channels);
    out.storage() = gaussian_samples(seed, stream, out.size());
    return out;
}

std::uint64_t step_seed(std::uint64_t seed, int iteration, int step) {
    return splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(iteration) << 32)) ^
                      static_cast<std::uint64_t>(step));
}

} // namespace consplat

namespace consplat {

std::vector<double> uniform_samples(std::uint64_t seed, std::uint64_t stream, std::size_t count) {
    const std::uint64_t key = splitmix64(splitmix64(seed) ^ stream);
    std::vector<double> out(count);
    for (std::size_t j = 0; j < count; ++j) {
        out[j] = static_cast<double>((splitmix64(key ^ j) >> 11) + 1) * 0x1.0p-53;
    }
    return out;
}

} // namespace consplat
