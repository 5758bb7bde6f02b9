#include "consplat/calibrator.hpp"
#include "consplat/cli.hpp"
#include "consplat/consolidation.hpp"
#include "consplat/error.hpp"
#include "consplat/io.hpp"
#include "consplat/mock_predictor.hpp"
#include "consplat/parallel.hpp"
#include "consplat/pipeline.hpp"
#include "consplat/renderer.hpp"
#include "consplat/synth.hpp"
#include "consplat/wire.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <sstream>

namespace py = pybind11;
using namespace consplat;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as (H, W, C) float64 arrays; 2-D input means one channel.
Image to_image(const Array &a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw InvalidArgument("image arrays must be (H, W) or (H, W, C)");
    const int h = static_cast<int>(a.shape(0));
    const int w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    Image img(w, h, c);
    std::copy(a.data(), a.data() + a.size(), img.storage().begin());
    return img;
}

Array to_array(const Image &img) {
    Array a({img.height(), img.width(), img.channels()});
    std::copy(img.storage().begin(), img.storage().end(), a.mutable_data());
    return a;
}

std::vector<Image> to_images(const std::vector<Array> &list) {
    std::vector<Image> out;
    for (const auto &a : list) out.push_back(to_image(a));
    return out;
}

py::list to_arrays(const std::vector<Image> &images) {
    py::list out;
    for (const auto &img : images) out.append(to_array(img));
    return out;
}

Array flat(const std::vector<double> &values, std::size_t rows, std::size_t cols) {
    Array a({rows, cols});
    std::copy(values.begin(), values.end(), a.mutable_data());
    return a;
}

template <int N>
Array column(const GaussianCloud &cloud, Eigen::Matrix<double, N, 1> (*get)(const Gaussian &)) {
    Array a({cloud.size(), static_cast<std::size_t>(N)});
    double *p = a.mutable_data();
    for (const auto &g : cloud.gaussians()) {
        const auto v = get(g);
        for (int k = 0; k < N; ++k) *p++ = v[k];
    }
    return a;
}

Vec3 vec3(const std::vector<double> &v, const char *what) {
    if (v.size() != 3) throw InvalidArgument(std::string(what) + " must have three components");
    return Vec3(v[0], v[1], v[2]);
}

py::dict metrics_dict(const IterationMetrics &m) {
    py::dict d;
    d["iteration"] = m.iteration;
    d["source_inconsistency"] = m.source_inconsistency;
    d["edit_inconsistency"] = m.edit_inconsistency;
    d["render_inconsistency"] = m.render_inconsistency;
    d["residual_inconsistency"] = m.residual_inconsistency;
    d["render_change"] = m.render_change;
    d["final_loss"] = m.final_loss;
    return d;
}

py::list report_list(const LossReport &report) {
    py::list out;
    for (const auto &r : report) {
        py::dict d;
        d["step"] = r.step;
        d["mae"] = r.mae;
        d["lpips"] = r.lpips;
        d["anchor"] = r.anchor;
        d["total"] = r.total;
        out.append(d);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_consplat, m) {
    m.doc() = "View-consistent Gaussian splat editing";
    m.attr("__version__") = CONSPLAT_VERSION;

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<RemoteError>(m, "RemoteError", error.ptr());

    py::class_<Camera>(m, "Camera")
        .def_readonly("id", &Camera::id)
        .def_readonly("width", &Camera::width)
        .def_readonly("height", &Camera::height)
        .def_readonly("fx", &Camera::fx)
        .def_readonly("fy", &Camera::fy)
        .def_readonly("cx", &Camera::cx)
        .def_readonly("cy", &Camera::cy)
        .def_property_readonly("world_to_camera", [](const Camera &c) {
            Array a({4, 4});
            for (int r = 0; r < 4; ++r)
                for (int k = 0; k < 4; ++k) a.mutable_at(r, k) = c.world_to_camera(r, k);
            return a;
        })
        .def_property_readonly("position", [](const Camera &c) {
            const Vec3 p = c.position();
            return std::vector<double>{p[0], p[1], p[2]};
        })
        .def("__repr__", [](const Camera &c) {
            return "<Camera " + c.id + " " + std::to_string(c.width) + "x" + std::to_string(c.height) + ">";
        });

    m.def(
        "look_at",
        [](const std::string &id, std::vector<double> eye, std::vector<double> target, std::vector<double> up,
           int width, int height, double fov_x) {
            return look_at(id, vec3(eye, "eye"), vec3(target, "target"), vec3(up, "up"), width, height, fov_x);
        },
        py::arg("id"), py::arg("eye"), py::arg("target"), py::arg("up") = std::vector<double>{0, 1, 0},
        py::arg("width") = 64, py::arg("height") = 64, py::arg("fov_x_degrees") = 45.0);

    py::class_<GaussianCloud>(m, "GaussianCloud")
        .def(py::init([](const Array &means, const Array &scales, const Array &rotations, const Array &opacities,
                         const Array &colors) {
                 const std::size_t n = means.ndim() == 2 ? means.shape(0) : 0;
                 auto rows = [n](const Array &a, py::ssize_t cols, const char *what) {
                     if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(0)) != n || a.shape(1) != cols) {
                         throw DimensionError(std::string(what) + " must be (N, " + std::to_string(cols) + ")");
                     }
                 };
                 rows(means, 3, "means");
                 rows(scales, 3, "scales");
                 rows(rotations, 4, "rotations");
                 rows(colors, 3, "colors");
                 if (opacities.ndim() != 1 || static_cast<std::size_t>(opacities.shape(0)) != n) {
                     throw DimensionError("opacities must be (N,)");
                 }
                 std::vector<Gaussian> gs;
                 for (std::size_t j = 0; j < n; ++j) {
                     gs.push_back(Gaussian::from_activated(
                         Vec3(means.at(j, 0), means.at(j, 1), means.at(j, 2)),
                         Vec4(rotations.at(j, 0), rotations.at(j, 1), rotations.at(j, 2), rotations.at(j, 3)),
                         Vec3(scales.at(j, 0), scales.at(j, 1), scales.at(j, 2)), opacities.at(j),
                         Vec3(colors.at(j, 0), colors.at(j, 1), colors.at(j, 2))));
                 }
                 return GaussianCloud(std::move(gs));
             }),
             py::arg("means"), py::arg("scales"), py::arg("rotations"), py::arg("opacities"), py::arg("colors"))
        .def("__len__", &GaussianCloud::size)
        .def_property_readonly("id", &GaussianCloud::id)
        .def_property_readonly("means", [](const GaussianCloud &c) {
            return column<3>(c, [](const Gaussian &g) -> Vec3 { return g.mean(); });
        })
        .def_property_readonly("scales", [](const GaussianCloud &c) {
            return column<3>(c, [](const Gaussian &g) -> Vec3 { return g.scale(); });
        })
        .def_property_readonly("rotations", [](const GaussianCloud &c) {
            return column<4>(c, [](const Gaussian &g) -> Vec4 { return g.rotation(); });
        })
        .def_property_readonly("colors", [](const GaussianCloud &c) {
            return column<3>(c, [](const Gaussian &g) -> Vec3 { return g.color(); });
        })
        .def_property_readonly("opacities", [](const GaussianCloud &c) {
            Array a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(c.size())});
            for (std::size_t j = 0; j < c.size(); ++j) a.mutable_at(j) = c[j].opacity();
            return a;
        })
        .def_property_readonly("attachment_names", [](const GaussianCloud &c) {
            std::vector<std::string> names;
            for (const auto &a : c.attachments()) names.push_back(a.name);
            return names;
        })
        .def("attachment", [](const GaussianCloud &c, const std::string &name) {
            const ScalarAttachment &a = c.attachment(name);
            return flat(a.values, c.size(), a.channel_count());
        })
        .def("set_attachment", [](GaussianCloud &c, const std::string &name, const Array &values,
                                  std::vector<std::string> channels) {
            if (values.ndim() != 2) throw DimensionError("attachment values must be (N, K)");
            if (channels.empty()) {
                for (py::ssize_t k = 0; k < values.shape(1); ++k) channels.push_back("channel_" + std::to_string(k));
            }
            ScalarAttachment a{name, std::move(channels), std::vector<double>(values.data(), values.data() + values.size())};
            c.set_attachment(std::move(a));
        }, py::arg("name"), py::arg("values"), py::arg("channels") = std::vector<std::string>{})
        .def("clone", [](const GaussianCloud &c) { return clone_cloud(c); })
        .def("__repr__", [](const GaussianCloud &c) {
            return "<GaussianCloud " + c.id() + " with " + std::to_string(c.size()) + " Gaussians>";
        });

    m.def(
        "synth_scene",
        [](int n, const std::string &layout, std::uint64_t seed, int views, int width, int height) {
            SynthOptions o;
            o.views = views;
            o.width = width;
            o.height = height;
            SynthScene s = synth_scene(n, parse_layout(layout), seed, o);
            return py::make_tuple(std::move(s.cloud), std::move(s.cameras));
        },
        py::arg("n"), py::arg("layout") = "two-blob", py::arg("seed") = 0, py::arg("views") = 8,
        py::arg("width") = 64, py::arg("height") = 64);

    m.def("load_scene", [](const std::string &path) { return load_scene(path); }, py::arg("path"));
    m.def("save_scene", [](const GaussianCloud &c, const std::string &path) { save_scene(c, path); },
          py::arg("cloud"), py::arg("path"));
    m.def("load_cameras", [](const std::string &path) { return load_cameras(path); }, py::arg("path"));
    m.def("save_cameras", [](const CameraSet &c, const std::string &path) { save_cameras(c, path); },
          py::arg("cameras"), py::arg("path"));
    m.def("load_image", [](const std::string &path) { return to_array(load_image(path)); }, py::arg("path"));
    m.def("save_image", [](const Array &a, const std::string &path) { save_image(to_image(a), path); },
          py::arg("image"), py::arg("path"));

    m.def(
        "render",
        [](const GaussianCloud &cloud, const Camera &camera, std::vector<double> background) {
            RenderOutput out;
            {
                py::gil_scoped_release release;
                out = render_color(cloud, camera, vec3(background, "background"));
            }
            return py::make_tuple(to_array(out.color), to_array(out.alpha));
        },
        py::arg("cloud"), py::arg("camera"), py::arg("background") = std::vector<double>{0, 0, 0});

    m.def(
        "grad_render",
        [](const GaussianCloud &cloud, const Camera &camera, const Array &upstream, std::vector<double> background) {
            const CloudGradients g = grad_render(cloud, camera, to_image(upstream), vec3(background, "background"));
            py::dict d;
            for (ParamGroup p : kAllParamGroups) {
                d[group_name(p)] = flat(g.group(p), g.count(), static_cast<std::size_t>(group_width(p)));
            }
            return d;
        },
        py::arg("cloud"), py::arg("camera"), py::arg("upstream"),
        py::arg("background") = std::vector<double>{0, 0, 0});

    m.def(
        "consolidate",
        [](const GaussianCloud &cloud, const CameraSet &cameras, const std::vector<Array> &maps,
           const std::string &mode) {
            if (mode != "weight" && mode != "count") throw InvalidArgument("mode must be 'weight' or 'count'");
            const ViewMaps out = consolidate(cloud, cameras, as_view_maps(to_images(maps)),
                                             mode == "count" ? Normalization::Count : Normalization::Weight);
            return to_arrays(out.maps);
        },
        py::arg("cloud"), py::arg("cameras"), py::arg("maps"), py::arg("mode") = "weight");

    m.def(
        "view_inconsistency",
        [](const GaussianCloud &cloud, const CameraSet &cameras, const std::vector<Array> &images) {
            return view_inconsistency(cloud, cameras, to_images(images));
        },
        py::arg("cloud"), py::arg("cameras"), py::arg("images"));

    m.def(
        "finetune",
        [](const GaussianCloud &cloud, const CameraSet &cameras, const std::vector<Array> &targets,
           const std::string &config_json) {
            const FinetuneConfig config = finetune_config_from_json(json::parse(config_json));
            const std::vector<Image> t = to_images(targets);
            FinetuneResult r;
            {
                py::gil_scoped_release release;
                r = finetune(cloud, cameras, t, config);
            }
            return py::make_tuple(std::move(r.cloud), report_list(r.report));
        },
        py::arg("cloud"), py::arg("cameras"), py::arg("targets"), py::arg("config_json") = "{}");

    m.def(
        "edit",
        [](const GaussianCloud &cloud, const CameraSet &cameras, const std::string &config_json) {
            const RunConfig rc = run_config_from_json(json::parse(config_json));
            RunResult r;
            {
                py::gil_scoped_release release;
                auto predictor = mock_predictor(mock_spec(rc.mock, cloud, cameras, rc.edit));
                IdentityCodec codec;
                r = run(cloud, cameras, *predictor, codec, rc.edit);
            }
            py::list metrics;
            for (const auto &mm : r.metrics) metrics.append(metrics_dict(mm));
            py::list renders;
            for (const auto &it : r.renders) renders.append(to_arrays(it));
            return py::make_tuple(std::move(r.cloud), metrics, renders);
        },
        py::arg("cloud"), py::arg("cameras"), py::arg("config_json") = "{}");

    m.def(
        "cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "consplat");
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli_dispatch(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));

    m.def("encode_tensor", [](const Array &a) { return wire::encode_tensor(to_image(a)).dump(); }, py::arg("image"));
    m.def(
        "decode_tensor",
        [](const std::string &text) { return to_array(wire::decode_tensor(json::parse(text), "tensor")); },
        py::arg("text"));

    m.def("set_thread_count", &set_thread_count, py::arg("threads"));
    m.def("thread_count", &thread_count);
}
