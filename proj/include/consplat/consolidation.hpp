#pragma once

#include "consplat/camera.hpp"
#include "consplat/gaussian.hpp"
#include "consplat/image.hpp"
#include "consplat/renderer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace consplat {

// Per-view K-channel token maps aligned with a CameraSet. Maps may be coarser than the
// cameras; they are resampled to camera resolution where needed.
struct ViewMaps {
    std::vector<Image> maps;
    std::vector<std::string> labels; // one per channel; may be empty

    std::size_t size() const { return maps.size(); }
    int channels() const { return maps.empty() ? 0 : maps.front().channels(); }
    // Throws DimensionError on mixed shapes, NonFiniteError on non-finite values.
    void validate() const;
    std::vector<std::string> channel_labels() const;
};

enum class Normalization {
    Count,  // divide by the number of contribution records
    Weight, // divide by the summed compositing weight
};

// Per-Gaussian consolidation of a ViewMaps set.
struct Map3D {
    ScalarAttachment values;
    std::vector<double> weight_sum;
    std::vector<std::uint32_t> count;

    bool observed(std::size_t j) const { return count[j] > 0; }
};

// Projects every map onto the Gaussians through their contribution weights and
// normalizes per Gaussian. Unobserved Gaussians receive 0.
Map3D inverse_render(const GaussianCloud &cloud, const CameraSet &cameras, const ViewMaps &maps,
                     Normalization normalization = Normalization::Weight,
                     const RenderConfig &config = {});

// inverse_render followed by render_scalar into every view, returned at the input map
// resolution.
ViewMaps consolidate(const GaussianCloud &cloud, const CameraSet &cameras, const ViewMaps &maps,
                     Normalization normalization = Normalization::Weight,
                     const RenderConfig &config = {});

struct VarianceReport {
    // Variance across views of each Gaussian's weighted map readout, averaged over
    // channels. Gaussians seen in fewer than two views hold NaN.
    std::vector<double> per_gaussian;
    std::vector<std::uint32_t> views_observed;
    std::size_t included = 0;
    double mean = 0.0;
};

VarianceReport cross_view_variance(const GaussianCloud &cloud, const CameraSet &cameras,
                                   const ViewMaps &maps, const RenderConfig &config = {});

// Convenience: treat RGB images as 3-channel maps.
ViewMaps as_view_maps(const std::vector<Image> &images);

} // namespace consplat
