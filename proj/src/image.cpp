#include "consplat/image.hpp"

#include "consplat/error.hpp"

#include <algorithm>
#include <cmath>

namespace consplat {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 0) throw DimensionError("negative image dimensions");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

void require_same_shape(const Image &a, const Image &b, const std::string &what) {
    if (!a.same_shape(b)) {
        throw DimensionError(what + ": shape " + std::to_string(a.width()) + "x" +
                             std::to_string(a.height()) + "x" + std::to_string(a.channels()) +
                             " does not match " + std::to_string(b.width()) + "x" +
                             std::to_string(b.height()) + "x" + std::to_string(b.channels()));
    }
}

Image extract_channel(const Image &src, int channel) {
    if (channel < 0 || channel >= src.channels()) throw DimensionError("channel index out of range");
    Image out(src.width(), src.height(), 1);
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) out.at(x, y, 0) = src.at(x, y, channel);
    return out;
}

Image resample_bilinear(const Image &src, int width, int height) {
    if (src.width() == 0 || src.height() == 0) throw DimensionError("cannot resample an empty image");
    Image out(width, height, src.channels());
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double tx = fx - x0;
            for (int c = 0; c < src.channels(); ++c) {
                const double top = (1.0 - tx) * src.at(x0, y0, c) + tx * src.at(x1, y0, c);
                const double bottom = (1.0 - tx) * src.at(x0, y1, c) + tx * src.at(x1, y1, c);
                out.at(x, y, c) = (1.0 - ty) * top + ty * bottom;
            }
        }
    }
    return out;
}

Image downsample_area(const Image &src, int width, int height) {
    if (width > src.width() || height > src.height()) {
        throw DimensionError("area downsampling cannot enlarge an image");
    }
    Image out(width, height, src.channels());
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double y_lo = y * sy, y_hi = (y + 1) * sy;
        for (int x = 0; x < width; ++x) {
            const double x_lo = x * sx, x_hi = (x + 1) * sx;
            double area = 0.0;
            for (int sy_i = static_cast<int>(std::floor(y_lo));
                 sy_i < std::min(src.height(), static_cast<int>(std::ceil(y_hi))); ++sy_i) {
                const double wy = std::min<double>(sy_i + 1, y_hi) - std::max<double>(sy_i, y_lo);
                if (wy <= 0.0) continue;
                for (int sx_i = static_cast<int>(std::floor(x_lo));
                     sx_i < std::min(src.width(), static_cast<int>(std::ceil(x_hi))); ++sx_i) {
                    const double wx = std::min<double>(sx_i + 1, x_hi) - std::max<double>(sx_i, x_lo);
                    if (wx <= 0.0) continue;
                    const double w = wx * wy;
                    area += w;
                    for (int c = 0; c < src.channels(); ++c) out.at(x, y, c) += w * src.at(sx_i, sy_i, c);
                }
            }
            for (int c = 0; c < src.channels(); ++c) out.at(x, y, c) /= area;
        }
    }
    return out;
}

Image resample_to(const Image &src, int width, int height) {
    if (src.width() == width && src.height() == height) return src;
    if (width <= src.width() && height <= src.height()) return downsample_area(src, width, height);
    return resample_bilinear(src, width, height);
}

double mean_abs_difference(const Image &a, const Image &b) {
    require_same_shape(a, b, "mean_abs_difference");
    if (a.size() == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a.data()[i] - b.data()[i]);
    return sum / static_cast<double>(a.size());
}

double max_abs_difference(const Image &a, const Image &b) {
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

} // namespace consplat
