#pragma once

#include "consplat/calibrator.hpp"
#include "consplat/camera.hpp"
#include "consplat/consolidation.hpp"
#include "consplat/gaussian.hpp"
#include "consplat/image.hpp"
#include "consplat/mock_predictor.hpp"
#include "consplat/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace consplat {

namespace fs = std::filesystem;

// Degree-0 spherical-harmonic constant: color = 0.5 + kSH0 * f_dc.
inline constexpr double kSH0 = 0.282094791773878;

double sh0_to_color(double f_dc);
double color_to_sh0(double color);

// Non-fatal findings while parsing (skipped properties, dropped SH bands).
using Warnings = std::vector<std::string>;

// ---- scenes ---------------------------------------------------------------------------

// Binary little-endian point file with x, y, z, f_dc_0..2, opacity (logit),
// scale_0..2 (log) and rot_0..3 (w, x, y, z). Unknown vertex properties are skipped with
// a warning; missing required ones, truncation and trailing bytes raise ParseError.
GaussianCloud read_ply(std::istream &in, Warnings *warnings = nullptr);
void write_ply(std::ostream &out, const GaussianCloud &cloud);

// Structured-text scene with activated values, raw optimizer values and attachments.
nlohmann::json scene_to_json(const GaussianCloud &cloud);
GaussianCloud scene_from_json(const nlohmann::json &doc);

// Dispatch on extension: ".ply" standard, ".json" native.
GaussianCloud load_scene(const fs::path &path, Warnings *warnings = nullptr);
void save_scene(const GaussianCloud &cloud, const fs::path &path);

// ---- cameras --------------------------------------------------------------------------

nlohmann::json cameras_to_json(const CameraSet &cameras);
CameraSet cameras_from_json(const nlohmann::json &doc);
CameraSet load_cameras(const fs::path &path);
void save_cameras(const CameraSet &cameras, const fs::path &path);

// ---- images and maps ------------------------------------------------------------------

// ".ppm": 8-bit binary RGB (values clamped to [0, 1], rounded to 1/255).
// ".pfm": 32-bit float, 1 or 3 channels, little-endian.
Image load_image(const fs::path &path);
void save_image(const Image &image, const fs::path &path);

// ".fmap": any channel count, float32 little-endian, token labels in the header.
struct LabeledMap {
    Image map;
    std::vector<std::string> labels;
};
LabeledMap read_map(std::istream &in);
void write_map(std::ostream &out, const Image &map, const std::vector<std::string> &labels);
LabeledMap load_map(const fs::path &path);
void save_map(const Image &map, const std::vector<std::string> &labels, const fs::path &path);

// One file per view, named view_000.<ext>, view_001.<ext>, ...
std::vector<fs::path> save_views(const std::vector<Image> &images, const fs::path &dir,
                                 const std::string &extension = ".pfm");
// Every .pfm / .ppm file in `dir`, in file-name order.
std::vector<Image> load_views(const fs::path &dir);
void save_view_maps(const ViewMaps &maps, const fs::path &dir);
// Every .fmap file in `dir` in file-name order; falls back to images when there are none.
ViewMaps load_view_maps(const fs::path &dir);

// ---- configuration --------------------------------------------------------------------

// Settings of the in-process mock editor when a run names it.
struct MockSettings {
    double drift_rate = 0.15;
    double bias_amplitude = 0.0;
    double attention_noise = 0.0;
    int attention_downsample = 1;
    std::uint64_t seed = 0;
    std::string attention_source = "edit_region";
    // Target scene: recolor every Gaussian of `target_region` to `target_color`, unless
    // `target_scene` names a scene file.
    std::string target_region = "edit_region";
    Vec3 target_color = Vec3(0.1, 0.3, 0.9);
    std::string target_scene;
};

struct RunConfig {
    EditConfig edit;
    MockSettings mock;
};

// Keys mirror the struct field names. Unknown keys raise ParseError.
nlohmann::json finetune_config_to_json(const FinetuneConfig &config);
FinetuneConfig finetune_config_from_json(const nlohmann::json &doc, FinetuneConfig base = {});
nlohmann::json render_config_to_json(const RenderConfig &config);
RenderConfig render_config_from_json(const nlohmann::json &doc);
nlohmann::json run_config_to_json(const RunConfig &config);
RunConfig run_config_from_json(const nlohmann::json &doc);
RunConfig load_run_config(const fs::path &path);

// Mock editor for `source` seen by `cameras`, rendering like `edit`. The target scene must
// keep the source's Gaussian order (attention is inverse-rendered through the source).
MockPredictorSpec mock_spec(const MockSettings &settings, const GaussianCloud &source, const CameraSet &cameras,
                            const EditConfig &edit);

// ---- misc ------------------------------------------------------------------------------

nlohmann::json load_json(const fs::path &path);
void save_json(const nlohmann::json &doc, const fs::path &path);
void save_text(const std::string &text, const fs::path &path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

} // namespace consplat
