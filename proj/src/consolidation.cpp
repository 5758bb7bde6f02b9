#include "consplat/consolidation.hpp"

#include "consplat/error.hpp"
#include "consplat/parallel.hpp"

#include <cmath>
#include <limits>

namespace consplat {

namespace {

void require_aligned(const CameraSet &cameras, const ViewMaps &maps) {
    if (cameras.size() != maps.size()) {
        throw AlignmentError("got " + std::to_string(maps.size()) + " maps for " +
                             std::to_string(cameras.size()) + " cameras");
    }
    maps.validate();
}

struct ViewAccumulation {
    std::vector<double> sums;  // gaussian x channel
    std::vector<double> weight;
    std::vector<std::uint32_t> count;
};

ViewAccumulation accumulate_view(const GaussianCloud &cloud, const Camera &camera,
                                 const Image &map, const RenderConfig &config) {
    const Image full = resample_to(map, camera.width, camera.height);
    const int K = full.channels();
    const RenderOutput out = render_with_contributions(cloud, camera, Vec3::Zero(), config);
    ViewAccumulation acc{std::vector<double>(cloud.size() * K, 0.0),
                         std::vector<double>(cloud.size(), 0.0),
                         std::vector<std::uint32_t>(cloud.size(), 0)};
    for (std::size_t p = 0; p < full.pixel_count(); ++p) {
        const double *value = full.data().data() + p * K;
        for (const ContributionRecord &r : out.records_at(p)) {
            for (int k = 0; k < K; ++k) acc.sums[r.gaussian_index * K + k] += r.weight * value[k];
            acc.weight[r.gaussian_index] += r.weight;
            acc.count[r.gaussian_index] += 1;
        }
    }
    return acc;
}

std::vector<ViewAccumulation> accumulate_all(const GaussianCloud &cloud, const CameraSet &cameras,
                                             const ViewMaps &maps, const RenderConfig &config) {
    std::vector<ViewAccumulation> views(cameras.size());
    parallel_for(cameras.size(), [&](std::size_t v) {
        views[v] = accumulate_view(cloud, cameras[v], maps.maps[v], config);
    });
    return views;
}

} // namespace

void ViewMaps::validate() const {
    for (std::size_t v = 0; v < maps.size(); ++v) {
        if (!maps[v].same_shape(maps.front())) {
            throw DimensionError("view map " + std::to_string(v) + " differs in shape from view 0");
        }
        for (double x : maps[v].data()) {
            if (!std::isfinite(x)) throw NonFiniteError("view map " + std::to_string(v) + " has non-finite values");
        }
    }
    if (!labels.empty() && !maps.empty() && labels.size() != static_cast<std::size_t>(channels())) {
        throw DimensionError("token label count does not match map channels");
    }
}

std::vector<std::string> ViewMaps::channel_labels() const {
    if (!labels.empty()) return labels;
    std::vector<std::string> out;
    for (int k = 0; k < channels(); ++k) out.push_back("channel_" + std::to_string(k));
    return out;
}

Map3D inverse_render(const GaussianCloud &cloud, const CameraSet &cameras, const ViewMaps &maps,
                     Normalization normalization, const RenderConfig &config) {
    require_aligned(cameras, maps);
    const int K = maps.channels();
    Map3D out;
    out.values = make_attachment("consolidated", maps.channel_labels(), cloud.size());
    out.weight_sum.assign(cloud.size(), 0.0);
    out.count.assign(cloud.size(), 0);
    if (maps.size() == 0) return out;

    const auto views = accumulate_all(cloud, cameras, maps, config);
    std::vector<double> sums(cloud.size() * K, 0.0);
    for (const auto &view : views) {
        for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += view.sums[i];
        for (std::size_t j = 0; j < cloud.size(); ++j) {
            out.weight_sum[j] += view.weight[j];
            out.count[j] += view.count[j];
        }
    }
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        if (out.count[j] == 0) continue;
        const double denom = normalization == Normalization::Count
                                 ? static_cast<double>(out.count[j])
                                 : out.weight_sum[j];
        for (int k = 0; k < K; ++k) out.values.at(j, k) = sums[j * K + k] / denom;
    }
    return out;
}

ViewMaps consolidate(const GaussianCloud &cloud, const CameraSet &cameras, const ViewMaps &maps,
                     Normalization normalization, const RenderConfig &config) {
    const Map3D map3d = inverse_render(cloud, cameras, maps, normalization, config);
    ViewMaps out;
    out.labels = maps.labels;
    out.maps.resize(maps.size());
    parallel_for(maps.size(), [&](std::size_t v) {
        const Image rendered = render_scalar(cloud, map3d.values, cameras[v], config);
        out.maps[v] = resample_to(rendered, maps.maps[v].width(), maps.maps[v].height());
    });
    return out;
}

VarianceReport cross_view_variance(const GaussianCloud &cloud, const CameraSet &cameras,
                                   const ViewMaps &maps, const RenderConfig &config) {
    require_aligned(cameras, maps);
    const int K = std::max(1, maps.channels());
    const auto views = accumulate_all(cloud, cameras, maps, config);

    VarianceReport report;
    report.per_gaussian.assign(cloud.size(), std::numeric_limits<double>::quiet_NaN());
    report.views_observed.assign(cloud.size(), 0);
    double total = 0.0;
    std::vector<double> readouts;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        double variance_sum = 0.0;
        std::uint32_t observed = 0;
        for (int k = 0; k < K; ++k) {
            readouts.clear();
            for (const auto &view : views) {
                if (view.weight[j] > 0.0) readouts.push_back(view.sums[j * K + k] / view.weight[j]);
            }
            observed = static_cast<std::uint32_t>(readouts.size());
            if (readouts.size() < 2) break;
            double mean = 0.0;
            for (double r : readouts) mean += r;
            mean /= readouts.size();
            double var = 0.0;
            for (double r : readouts) var += (r - mean) * (r - mean);
            variance_sum += var / readouts.size();
        }
        report.views_observed[j] = observed;
        if (observed < 2) continue;
        report.per_gaussian[j] = variance_sum / K;
        total += report.per_gaussian[j];
        ++report.included;
    }
    report.mean = report.included ? total / report.included : 0.0;
    return report;
}

ViewMaps as_view_maps(const std::vector<Image> &images) {
    ViewMaps maps;
    maps.maps = images;
    if (!images.empty() && images.front().channels() == 3) maps.labels = {"r", "g", "b"};
    return maps;
}

} // namespace consplat
