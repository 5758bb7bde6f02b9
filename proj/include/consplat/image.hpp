#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace consplat {

// Dense H x W x C array of doubles, row-major with interleaved channels. Used for
// rendered images, attention maps and latents alike.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double &at(int x, int y, int c) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[index(x, y, c)]; }
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double> &storage() { return data_; }
    const std::vector<double> &storage() const { return data_; }

    bool same_shape(const Image &other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    bool operator==(const Image &other) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

// Throws DimensionError naming `what` when shapes differ.
void require_same_shape(const Image &a, const Image &b, const std::string &what);

// Channel `channel` of `src` as a single-channel image.
Image extract_channel(const Image &src, int channel);

// Bilinear resampling with pixel-center alignment and edge clamping.
Image resample_bilinear(const Image &src, int width, int height);
// Box-filter area averaging onto a coarser (or equal) grid with fractional overlaps.
Image downsample_area(const Image &src, int width, int height);
// Bilinear when enlarging, area averaging when shrinking, copy when equal.
Image resample_to(const Image &src, int width, int height);

double mean_abs_difference(const Image &a, const Image &b);
double max_abs_difference(const Image &a, const Image &b);

} // namespace consplat
