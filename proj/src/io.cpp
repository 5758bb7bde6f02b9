#include "consplat/io.hpp"

#include "consplat/error.hpp"
#include "consplat/synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace consplat {

using nlohmann::json;

double sh0_to_color(double f_dc) { return std::clamp(0.5 + kSH0 * f_dc, 0.0, 1.0); }
double color_to_sh0(double color) { return (color - 0.5) / kSH0; }

namespace {

std::string read_all(std::istream &in) {
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::ifstream open_in(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const fs::path &path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
    return out;
}

void put_f32(std::string &out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

float get_f32(const char *p) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return std::bit_cast<float>(bits);
}

// Little-endian scalar of a PLY property type, widened to double.
double get_scalar(const char *p, const std::string &type) {
    auto u = [&](int n) {
        std::uint64_t v = 0;
        for (int b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
        return v;
    };
    if (type == "float" || type == "float32") return get_f32(p);
    if (type == "double" || type == "float64") return std::bit_cast<double>(u(8));
    if (type == "uchar" || type == "uint8") return static_cast<double>(u(1));
    if (type == "char" || type == "int8") return static_cast<double>(static_cast<std::int8_t>(u(1)));
    if (type == "ushort" || type == "uint16") return static_cast<double>(u(2));
    if (type == "short" || type == "int16") return static_cast<double>(static_cast<std::int16_t>(u(2)));
    if (type == "uint" || type == "uint32") return static_cast<double>(u(4));
    return static_cast<double>(static_cast<std::int32_t>(u(4)));
}

int type_size(const std::string &type) {
    static const std::map<std::string, int> sizes = {
        {"char", 1},  {"int8", 1},   {"uchar", 1}, {"uint8", 1},   {"short", 2},  {"int16", 2},
        {"ushort", 2}, {"uint16", 2}, {"int", 4},   {"int32", 4},   {"uint", 4},   {"uint32", 4},
        {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(type);
    return it == sizes.end() ? 0 : it->second;
}

const std::array<const char *, 14> kPlyProperties = {"x",      "y",       "z",       "f_dc_0", "f_dc_1",
                                                    "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                                                    "rot_0",  "rot_1",   "rot_2",   "rot_3"};

// A float whose loader-side reconstruction writes back to the same float, so that a file
// this writer produced is rewritten byte for byte.
template <class Back>
float stable_float(double value, Back back) {
    float f = static_cast<float>(value);
    for (int i = 0; i < 8; ++i) {
        const float g = static_cast<float>(back(f));
        if (g == f) return f;
        f = g;
    }
    return f;
}

Vec4 loaded_rotation(const std::array<float, 4> &f) {
    Gaussian g;
    g.set_rotation(Vec4(f[0], f[1], f[2], f[3]));
    return g.rotation();
}

std::array<float, 4> stable_rotation(const Vec4 &q) {
    std::array<float, 4> f;
    for (int k = 0; k < 4; ++k) f[k] = static_cast<float>(q[k]);
    for (int i = 0; i < 8; ++i) {
        const Vec4 back = loaded_rotation(f);
        std::array<float, 4> g;
        for (int k = 0; k < 4; ++k) g[k] = static_cast<float>(back[k]);
        if (g == f) break;
        f = g;
    }
    return f;
}

struct PlyProperty {
    std::string type;
    std::string name;
    int offset = 0;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    int stride = 0;
};

} // namespace

GaussianCloud read_ply(std::istream &in, Warnings *warnings) {
    const std::string bytes = read_all(in);
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw ParseError("unterminated PLY header", bytes.size());
        std::string line = bytes.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = nl + 1;
        return line;
    };

    if (next_line() != "ply") throw ParseError("missing 'ply' magic", 0);
    std::vector<PlyElement> elements;
    bool format_seen = false;
    for (;;) {
        const std::size_t line_pos = pos;
        const std::string line = next_line();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header") break;
        if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) continue;
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt != "binary_little_endian") {
                throw ParseError("unsupported PLY format '" + fmt + "' (need binary_little_endian)", line_pos);
            }
            format_seen = true;
        } else if (keyword == "element") {
            PlyElement e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0 || ls.fail()) throw ParseError("malformed element line", line_pos);
            e.count = static_cast<std::size_t>(count);
            elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (elements.empty()) throw ParseError("property before any element", line_pos);
            PlyProperty p;
            ls >> p.type >> p.name;
            if (p.type == "list") throw ParseError("list properties are not supported", line_pos);
            const int size = type_size(p.type);
            if (size == 0 || p.name.empty()) throw ParseError("malformed property line", line_pos);
            PlyElement &e = elements.back();
            for (const auto &q : e.properties) {
                if (q.name == p.name) throw ParseError("duplicate property '" + p.name + "'", line_pos);
            }
            p.offset = e.stride;
            e.stride += size;
            e.properties.push_back(std::move(p));
        } else {
            throw ParseError("unknown header keyword '" + keyword + "'", line_pos);
        }
    }
    if (!format_seen) throw ParseError("missing format line", pos);

    const PlyElement *vertex = nullptr;
    std::size_t vertex_offset = 0, needed = 0;
    for (const auto &e : elements) {
        if (e.stride > 0 && e.count > (bytes.size() - pos) / static_cast<std::size_t>(e.stride) + 1) {
            throw ParseError("element '" + e.name + "' declares " + std::to_string(e.count) +
                                 " records but the file is too short",
                             bytes.size());
        }
        if (e.name == "vertex") {
            if (vertex) throw ParseError("duplicate vertex element", pos);
            vertex = &e;
            vertex_offset = needed;
        } else if (warnings) {
            warnings->push_back("skipping element '" + e.name + "'");
        }
        needed += e.count * static_cast<std::size_t>(e.stride);
    }
    if (!vertex) throw ParseError("no vertex element", pos);
    if (bytes.size() - pos < needed) {
        throw ParseError("truncated records: need " + std::to_string(needed) + " bytes, have " +
                             std::to_string(bytes.size() - pos),
                         bytes.size());
    }
    if (bytes.size() - pos > needed) {
        throw ParseError("trailing bytes after the last record", pos + needed);
    }

    std::array<const PlyProperty *, kPlyProperties.size()> slots{};
    int sh_rest = 0;
    for (const auto &p : vertex->properties) {
        const auto it = std::find_if(kPlyProperties.begin(), kPlyProperties.end(),
                                     [&](const char *n) { return p.name == n; });
        if (it != kPlyProperties.end()) {
            slots[it - kPlyProperties.begin()] = &p;
        } else if (p.name.rfind("f_rest_", 0) == 0) {
            ++sh_rest;
        } else if (warnings) {
            warnings->push_back("skipping unknown vertex property '" + p.name + "'");
        }
    }
    if (sh_rest > 0 && warnings) {
        warnings->push_back("dropping " + std::to_string(sh_rest) +
                            " higher-degree SH coefficients per Gaussian (only degree 0 is kept)");
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        if (!slots[k]) throw ParseError(std::string("missing required vertex property '") + kPlyProperties[k] + "'", pos);
    }

    std::vector<Gaussian> gs;
    gs.reserve(vertex->count);
    const char *base = bytes.data() + pos + vertex_offset;
    for (std::size_t i = 0; i < vertex->count; ++i) {
        const char *rec = base + i * static_cast<std::size_t>(vertex->stride);
        double v[kPlyProperties.size()];
        for (std::size_t k = 0; k < slots.size(); ++k) {
            v[k] = get_scalar(rec + slots[k]->offset, slots[k]->type);
            if (!std::isfinite(v[k])) {
                throw ParseError(std::string("non-finite '") + kPlyProperties[k] + "' in record " + std::to_string(i),
                                 pos + vertex_offset + i * vertex->stride + slots[k]->offset);
            }
        }
        Gaussian g;
        g.set_mean(Vec3(v[0], v[1], v[2]));
        g.set_color(Vec3(sh0_to_color(v[3]), sh0_to_color(v[4]), sh0_to_color(v[5])));
        g.set_opacity_logit(v[6]);
        g.set_log_scale(Vec3(v[7], v[8], v[9]));
        try {
            g.set_rotation(Vec4(v[10], v[11], v[12], v[13]));
        } catch (const Error &) {
            throw ParseError("zero quaternion in record " + std::to_string(i),
                             pos + vertex_offset + i * vertex->stride);
        }
        gs.push_back(g);
    }
    // Content-derived id keeps loads reproducible.
    return GaussianCloud(std::move(gs), "ply-" + hex64(fnv1a64(bytes)));
}

void write_ply(std::ostream &out, const GaussianCloud &cloud) {
    std::string buf = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
    for (const char *name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
                             "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        buf += std::string("property float ") + name + "\n";
    }
    buf += "end_header\n";
    const auto sh = [](double f) { return color_to_sh0(sh0_to_color(f)); };
    for (const auto &g : cloud.gaussians()) {
        for (int k = 0; k < 3; ++k) put_f32(buf, static_cast<float>(g.mean()[k]));
        for (int k = 0; k < 3; ++k) put_f32(buf, stable_float(color_to_sh0(g.color()[k]), sh));
        put_f32(buf, static_cast<float>(g.opacity_logit()));
        for (int k = 0; k < 3; ++k) put_f32(buf, static_cast<float>(g.log_scale()[k]));
        for (float q : stable_rotation(g.rotation())) put_f32(buf, q);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

json scene_to_json(const GaussianCloud &cloud) {
    json gs = json::array();
    for (const auto &g : cloud.gaussians()) {
        const Vec3 s = g.scale();
        gs.push_back({{"mean", {g.mean()[0], g.mean()[1], g.mean()[2]}},
                      {"rotation", {g.rotation()[0], g.rotation()[1], g.rotation()[2], g.rotation()[3]}},
                      {"scale", {s[0], s[1], s[2]}},
                      {"opacity", g.opacity()},
                      {"color", {g.color()[0], g.color()[1], g.color()[2]}},
                      {"log_scale", {g.log_scale()[0], g.log_scale()[1], g.log_scale()[2]}},
                      {"opacity_logit", g.opacity_logit()}});
    }
    json atts = json::array();
    for (const auto &a : cloud.attachments()) {
        atts.push_back({{"name", a.name}, {"channels", a.channels}, {"values", a.values}});
    }
    return {{"format", "consplat-scene"}, {"version", 1}, {"id", cloud.id()}, {"gaussians", gs},
            {"attachments", atts}};
}

namespace {

template <int N>
Eigen::Matrix<double, N, 1> json_vec(const json &v, const std::string &field) {
    if (!v.is_array() || v.size() != N) {
        throw ParseError("'" + field + "' must be an array of " + std::to_string(N) + " numbers", 0);
    }
    Eigen::Matrix<double, N, 1> out;
    for (int k = 0; k < N; ++k) {
        if (!v[k].is_number()) throw ParseError("'" + field + "' must hold numbers", 0);
        out[k] = v[k].get<double>();
    }
    return out;
}

const json &member(const json &obj, const std::string &key, const std::string &where) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing '" + key + "'", 0);
    return obj[key];
}

double number(const json &obj, const std::string &key, const std::string &where) {
    const json &v = member(obj, key, where);
    if (!v.is_number()) throw ParseError(where + ": '" + key + "' must be a number", 0);
    return v.get<double>();
}

} // namespace

GaussianCloud scene_from_json(const json &doc) {
    if (!doc.is_object() || doc.value("format", "") != "consplat-scene") {
        throw ParseError("not a consplat scene document", 0);
    }
    if (doc.value("version", 0) != 1) throw ParseError("unsupported scene version", 0);
    const json &list = member(doc, "gaussians", "scene");
    if (!list.is_array()) throw ParseError("'gaussians' must be an array", 0);
    std::vector<Gaussian> gs;
    gs.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        const json &e = list[i];
        const std::string where = "gaussian " + std::to_string(i);
        Gaussian g;
        g.set_mean(json_vec<3>(member(e, "mean", where), where + ".mean"));
        try {
            g.set_rotation(json_vec<4>(member(e, "rotation", where), where + ".rotation"));
            if (e.contains("log_scale")) {
                g.set_log_scale(json_vec<3>(e["log_scale"], where + ".log_scale"));
            } else {
                g.set_scale(json_vec<3>(member(e, "scale", where), where + ".scale"));
            }
            if (e.contains("opacity_logit")) {
                g.set_opacity_logit(number(e, "opacity_logit", where));
            } else {
                g.set_opacity(number(e, "opacity", where));
            }
        } catch (const ParseError &) {
            throw;
        } catch (const Error &err) {
            throw ParseError(where + ": " + err.what(), 0);
        }
        g.set_color(json_vec<3>(member(e, "color", where), where + ".color"));
        gs.push_back(g);
    }
    GaussianCloud cloud(std::move(gs));
    if (doc.contains("id") && doc["id"].is_string() && !doc["id"].get<std::string>().empty()) {
        cloud.set_id(doc["id"].get<std::string>());
    }
    if (doc.contains("attachments")) {
        const json &atts = doc["attachments"];
        if (!atts.is_array()) throw ParseError("'attachments' must be an array", 0);
        for (const auto &a : atts) {
            ScalarAttachment att;
            try {
                att.name = member(a, "name", "attachment").get<std::string>();
                att.channels = member(a, "channels", "attachment").get<std::vector<std::string>>();
                att.values = member(a, "values", "attachment").get<std::vector<double>>();
            } catch (const json::exception &e) {
                throw ParseError(std::string("malformed attachment: ") + e.what(), 0);
            }
            try {
                cloud.set_attachment(std::move(att));
            } catch (const Error &e) {
                throw ParseError(e.what(), 0);
            }
        }
    }
    return cloud;
}

GaussianCloud load_scene(const fs::path &path, Warnings *warnings) {
    if (path.extension() == ".ply") {
        auto in = open_in(path);
        return read_ply(in, warnings);
    }
    return scene_from_json(load_json(path));
}

void save_scene(const GaussianCloud &cloud, const fs::path &path) {
    if (path.extension() == ".ply") {
        auto out = open_out(path);
        write_ply(out, cloud);
        return;
    }
    save_json(scene_to_json(cloud), path);
}

json cameras_to_json(const CameraSet &cameras) {
    json list = json::array();
    for (const auto &c : cameras) {
        std::vector<double> m(16);
        for (int r = 0; r < 4; ++r)
            for (int k = 0; k < 4; ++k) m[4 * r + k] = c.world_to_camera(r, k);
        list.push_back({{"id", c.id}, {"width", c.width}, {"height", c.height}, {"fx", c.fx},
                        {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"world_to_camera", m}});
    }
    return {{"format", "consplat-cameras"}, {"version", 1}, {"cameras", list}};
}

CameraSet cameras_from_json(const json &doc) {
    if (!doc.is_object() || doc.value("format", "") != "consplat-cameras") {
        throw ParseError("not a consplat camera document", 0);
    }
    const json &list = member(doc, "cameras", "camera set");
    if (!list.is_array()) throw ParseError("'cameras' must be an array", 0);
    CameraSet out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const json &e = list[i];
        const std::string where = "camera " + std::to_string(i);
        Camera c;
        const json &id = member(e, "id", where);
        if (!id.is_string()) throw ParseError(where + ": 'id' must be a string", 0);
        c.id = id.get<std::string>();
        const json &w = member(e, "width", where), &h = member(e, "height", where);
        if (!w.is_number_integer() || !h.is_number_integer()) {
            throw ParseError(where + ": width and height must be integers", 0);
        }
        c.width = w.get<int>();
        c.height = h.get<int>();
        c.fx = number(e, "fx", where);
        c.fy = number(e, "fy", where);
        c.cx = number(e, "cx", where);
        c.cy = number(e, "cy", where);
        const json &m = member(e, "world_to_camera", where);
        if (!m.is_array() || m.size() != 16) throw ParseError(where + ": world_to_camera needs 16 numbers", 0);
        for (int r = 0; r < 4; ++r)
            for (int k = 0; k < 4; ++k) {
                if (!m[4 * r + k].is_number()) throw ParseError(where + ": world_to_camera holds non-numbers", 0);
                c.world_to_camera(r, k) = m[4 * r + k].get<double>();
            }
        try {
            c.validate();
        } catch (const Error &err) {
            throw ParseError(where + ": " + err.what(), 0);
        }
        out.push_back(std::move(c));
    }
    return out;
}

CameraSet load_cameras(const fs::path &path) { return cameras_from_json(load_json(path)); }
void save_cameras(const CameraSet &cameras, const fs::path &path) { save_json(cameras_to_json(cameras), path); }

namespace {

// Reads whitespace-separated header tokens of a netpbm-style file, skipping comments.
struct TokenReader {
    const std::string &bytes;
    std::size_t pos = 0;

    std::string next() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ParseError("unexpected end of image header", pos);
        return bytes.substr(start, pos - start);
    }

    int positive() {
        const std::size_t at = pos;
        const std::string t = next();
        try {
            std::size_t used = 0;
            const long v = std::stol(t, &used);
            if (used != t.size() || v < 1 || v > (1 << 16)) throw std::out_of_range(t);
            return static_cast<int>(v);
        } catch (const std::exception &) {
            throw ParseError("bad image dimension '" + t + "'", at);
        }
    }

    // Exactly one whitespace byte separates the header from the raster.
    void end_header() {
        if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            throw ParseError("missing separator after image header", pos);
        }
        ++pos;
    }
};

void check_payload(const std::string &bytes, std::size_t pos, std::size_t needed) {
    if (bytes.size() - pos < needed) throw ParseError("truncated image data", bytes.size());
    if (bytes.size() - pos > needed) throw ParseError("trailing bytes after image data", pos + needed);
}

} // namespace

Image load_image(const fs::path &path) {
    auto in = open_in(path);
    const std::string bytes = read_all(in);
    TokenReader tr{bytes};
    const std::string magic = tr.next();
    const std::string ext = path.extension().string();
    if (magic == "P6") {
        const int w = tr.positive(), h = tr.positive(), maxval = tr.positive();
        if (maxval != 255) throw ParseError("only 8-bit PPM files are supported", tr.pos);
        tr.end_header();
        Image img(w, h, 3);
        check_payload(bytes, tr.pos, img.size());
        for (std::size_t i = 0; i < img.size(); ++i) {
            img.data()[i] = static_cast<unsigned char>(bytes[tr.pos + i]) / 255.0;
        }
        return img;
    }
    if (magic == "PF" || magic == "Pf") {
        const int channels = magic == "PF" ? 3 : 1;
        const int w = tr.positive(), h = tr.positive();
        const std::size_t scale_pos = tr.pos;
        const std::string scale = tr.next();
        double s = 0.0;
        try {
            s = std::stod(scale);
        } catch (const std::exception &) {
            throw ParseError("bad PFM scale '" + scale + "'", scale_pos);
        }
        if (!(s < 0.0)) throw ParseError("big-endian PFM files are not supported", scale_pos);
        tr.end_header();
        Image img(w, h, channels);
        check_payload(bytes, tr.pos, img.size() * 4);
        // PFM stores rows bottom to top.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < channels; ++c) {
                    const std::size_t src = ((static_cast<std::size_t>(h - 1 - y) * w + x) * channels + c) * 4;
                    img.at(x, y, c) = get_f32(bytes.data() + tr.pos + src);
                }
        return img;
    }
    throw ParseError("unrecognized image format in '" + path.string() + "' (extension " + ext + ")", 0);
}

void save_image(const Image &image, const fs::path &path) {
    const std::string ext = path.extension().string();
    std::string buf;
    if (ext == ".ppm") {
        if (image.channels() != 3) throw DimensionError("PPM images need 3 channels");
        buf = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
        for (double v : image.data()) {
            buf.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
        }
    } else if (ext == ".pfm") {
        if (image.channels() != 3 && image.channels() != 1) throw DimensionError("PFM images need 1 or 3 channels");
        buf = std::string(image.channels() == 3 ? "PF" : "Pf") + "\n" + std::to_string(image.width()) + " " +
              std::to_string(image.height()) + "\n-1.0\n";
        for (int y = image.height() - 1; y >= 0; --y)
            for (int x = 0; x < image.width(); ++x)
                for (int c = 0; c < image.channels(); ++c) put_f32(buf, static_cast<float>(image.at(x, y, c)));
    } else {
        throw InvalidArgument("unsupported image extension '" + ext + "' (use .ppm or .pfm)");
    }
    auto out = open_out(path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

LabeledMap read_map(std::istream &in) {
    const std::string bytes = read_all(in);
    const std::string magic = "CSMAP1\n";
    if (bytes.compare(0, magic.size(), magic) != 0) throw ParseError("missing map magic", 0);
    const auto nl = bytes.find('\n', magic.size());
    if (nl == std::string::npos) throw ParseError("unterminated map header", bytes.size());
    json header;
    try {
        header = json::parse(bytes.substr(magic.size(), nl - magic.size()));
    } catch (const json::parse_error &e) {
        throw ParseError(std::string("bad map header: ") + e.what(), magic.size() + e.byte);
    }
    int dims[3];
    const char *keys[3] = {"width", "height", "channels"};
    for (int k = 0; k < 3; ++k) {
        if (!header.contains(keys[k]) || !header[keys[k]].is_number_integer() || header[keys[k]].get<long long>() < 1 ||
            header[keys[k]].get<long long>() > (1 << 16)) {
            throw ParseError(std::string("map header needs a positive '") + keys[k] + "'", magic.size());
        }
        dims[k] = header[keys[k]].get<int>();
    }
    LabeledMap out;
    if (header.contains("labels")) {
        try {
            out.labels = header["labels"].get<std::vector<std::string>>();
        } catch (const json::exception &) {
            throw ParseError("map labels must be strings", magic.size());
        }
        if (!out.labels.empty() && out.labels.size() != static_cast<std::size_t>(dims[2])) {
            throw ParseError("map header lists " + std::to_string(out.labels.size()) + " labels for " +
                                 std::to_string(dims[2]) + " channels",
                             magic.size());
        }
    }
    out.map = Image(dims[0], dims[1], dims[2]);
    const std::size_t start = nl + 1;
    check_payload(bytes, start, out.map.size() * 4);
    for (std::size_t i = 0; i < out.map.size(); ++i) out.map.data()[i] = get_f32(bytes.data() + start + 4 * i);
    return out;
}

void write_map(std::ostream &out, const Image &map, const std::vector<std::string> &labels) {
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(map.channels())) {
        throw DimensionError("label count differs from map channels");
    }
    const json header = {{"width", map.width()}, {"height", map.height()}, {"channels", map.channels()},
                         {"labels", labels}};
    std::string buf = "CSMAP1\n" + header.dump() + "\n";
    for (double v : map.data()) put_f32(buf, static_cast<float>(v));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

LabeledMap load_map(const fs::path &path) {
    auto in = open_in(path);
    return read_map(in);
}

void save_map(const Image &map, const std::vector<std::string> &labels, const fs::path &path) {
    auto out = open_out(path);
    write_map(out, map, labels);
}

namespace {

std::string view_name(std::size_t v, const std::string &ext) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu", v);
    return name + ext;
}

std::vector<fs::path> files_with(const fs::path &dir, const std::set<std::string> &exts) {
    if (!fs::is_directory(dir)) throw InvalidArgument("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && exts.count(e.path().extension().string())) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

std::vector<fs::path> save_views(const std::vector<Image> &images, const fs::path &dir, const std::string &extension) {
    fs::create_directories(dir);
    std::vector<fs::path> out;
    for (std::size_t v = 0; v < images.size(); ++v) {
        out.push_back(dir / view_name(v, extension));
        save_image(images[v], out.back());
    }
    return out;
}

std::vector<Image> load_views(const fs::path &dir) {
    std::vector<Image> out;
    for (const auto &p : files_with(dir, {".pfm", ".ppm"})) out.push_back(load_image(p));
    if (out.empty()) throw InvalidArgument("no .pfm or .ppm images in '" + dir.string() + "'");
    return out;
}

void save_view_maps(const ViewMaps &maps, const fs::path &dir) {
    fs::create_directories(dir);
    for (std::size_t v = 0; v < maps.size(); ++v) save_map(maps.maps[v], maps.labels, dir / view_name(v, ".fmap"));
}

ViewMaps load_view_maps(const fs::path &dir) {
    ViewMaps out;
    const auto files = files_with(dir, {".fmap"});
    if (files.empty()) {
        out.maps = load_views(dir);
        return out;
    }
    for (const auto &p : files) {
        LabeledMap m = load_map(p);
        if (out.maps.empty()) {
            out.labels = m.labels;
        } else if (m.labels != out.labels) {
            throw ParseError("'" + p.string() + "' has different token labels than the first map", 0);
        }
        out.maps.push_back(std::move(m.map));
    }
    return out;
}

// ---- configuration --------------------------------------------------------------------

namespace {

void reject_unknown(const json &doc, const std::set<std::string> &known, const std::string &where) {
    if (!doc.is_object()) throw ParseError(where + " must be an object", 0);
    for (const auto &[key, value] : doc.items()) {
        if (!known.count(key)) throw ParseError(where + ": unknown key '" + key + "'", 0);
    }
}

template <class T>
void read_into(const json &doc, const char *key, T &target, const std::string &where) {
    if (!doc.contains(key)) return;
    try {
        target = doc[key].get<T>();
    } catch (const json::exception &) {
        throw ParseError(where + ": '" + key + "' has the wrong type", 0);
    }
}

json vec3_json(const Vec3 &v) { return {v[0], v[1], v[2]}; }

Vec3 vec3_from(const json &v, const std::string &where) {
    try {
        const auto a = v.get<std::vector<double>>();
        if (a.size() == 3) return Vec3(a[0], a[1], a[2]);
    } catch (const json::exception &) {
    }
    throw ParseError(where + " must be [r, g, b]", 0);
}

} // namespace

json render_config_to_json(const RenderConfig &c) {
    return {{"near_plane", c.near_plane},   {"dilation", c.dilation},
            {"cutoff_sigma", c.cutoff_sigma}, {"early_termination", c.early_termination},
            {"min_transmittance", c.min_transmittance}, {"record_floor", c.record_floor},
            {"max_records", c.max_records}};
}

RenderConfig render_config_from_json(const json &doc) {
    reject_unknown(doc, {"near_plane", "dilation", "cutoff_sigma", "early_termination", "min_transmittance",
                         "record_floor", "max_records"},
                   "render");
    RenderConfig c;
    read_into(doc, "near_plane", c.near_plane, "render");
    read_into(doc, "dilation", c.dilation, "render");
    read_into(doc, "cutoff_sigma", c.cutoff_sigma, "render");
    read_into(doc, "early_termination", c.early_termination, "render");
    read_into(doc, "min_transmittance", c.min_transmittance, "render");
    read_into(doc, "record_floor", c.record_floor, "render");
    read_into(doc, "max_records", c.max_records, "render");
    return c;
}

json finetune_config_to_json(const FinetuneConfig &c) {
    json optimize = json::object(), scale = json::object();
    for (ParamGroup g : kAllParamGroups) {
        optimize[group_name(g)] = c.optimizes(g);
        scale[group_name(g)] = c.lr_scale[static_cast<int>(g)];
    }
    return {{"learning_rate", c.learning_rate}, {"steps", c.steps},
            {"lambda_mae", c.lambda_mae},       {"lambda_lpips", c.lambda_lpips},
            {"lambda_anchor", c.lambda_anchor}, {"views_per_step", c.views_per_step},
            {"optimize", optimize},             {"lr_scale", scale}};
}

FinetuneConfig finetune_config_from_json(const json &doc, FinetuneConfig c) {
    const std::string where = "finetune config";
    reject_unknown(doc, {"learning_rate", "steps", "lambda_mae", "lambda_lpips", "lambda_anchor", "views_per_step",
                         "optimize", "lr_scale"},
                   where);
    read_into(doc, "learning_rate", c.learning_rate, where);
    read_into(doc, "steps", c.steps, where);
    read_into(doc, "lambda_mae", c.lambda_mae, where);
    read_into(doc, "lambda_lpips", c.lambda_lpips, where);
    read_into(doc, "lambda_anchor", c.lambda_anchor, where);
    read_into(doc, "views_per_step", c.views_per_step, where);
    std::set<std::string> groups;
    for (ParamGroup g : kAllParamGroups) groups.insert(group_name(g));
    if (doc.contains("optimize")) {
        reject_unknown(doc["optimize"], groups, where + ".optimize");
        for (ParamGroup g : kAllParamGroups) {
            bool on = c.optimize[static_cast<int>(g)];
            read_into(doc["optimize"], group_name(g), on, where + ".optimize");
            c.optimize[static_cast<int>(g)] = on;
        }
    }
    if (doc.contains("lr_scale")) {
        reject_unknown(doc["lr_scale"], groups, where + ".lr_scale");
        for (ParamGroup g : kAllParamGroups) read_into(doc["lr_scale"], group_name(g), c.lr_scale[static_cast<int>(g)], where + ".lr_scale");
    }
    try {
        c.validate();
    } catch (const Error &e) {
        throw ParseError(where + ": " + e.what(), 0);
    }
    return c;
}

json run_config_to_json(const RunConfig &rc) {
    const EditConfig &e = rc.edit;
    const MockSettings &m = rc.mock;
    json mock = {{"drift_rate", m.drift_rate},
                 {"bias_amplitude", m.bias_amplitude},
                 {"attention_noise", m.attention_noise},
                 {"attention_downsample", m.attention_downsample},
                 {"seed", m.seed},
                 {"attention_source", m.attention_source},
                 {"target_region", m.target_region},
                 {"target_color", vec3_json(m.target_color)},
                 {"target_scene", m.target_scene}};
    return {{"total_steps", e.total_steps},
            {"schedule_steps", e.schedule_steps},
            {"beta_start", e.beta_start},
            {"beta_end", e.beta_end},
            {"ecm_period", e.ecm_period},
            {"ecm_enabled", e.ecm_enabled},
            {"ccm_enabled", e.ccm_enabled},
            {"iterations", e.iterations},
            {"blend_mode", e.blend_mode == BlendMode::Soft ? "soft" : "threshold"},
            {"blend_threshold", e.blend_threshold},
            {"token_index", e.token_index},
            {"ccm_normalization", e.ccm_normalization == Normalization::Weight ? "weight" : "count"},
            {"ecm", finetune_config_to_json(e.ecm)},
            {"final_stage", finetune_config_to_json(e.final_stage)},
            {"seed", e.seed},
            {"strict_alg1", e.strict_alg1},
            {"prompt_src", e.prompt_src},
            {"prompt_tgt", e.prompt_tgt},
            {"background", vec3_json(e.background)},
            {"render", render_config_to_json(e.render)},
            {"mock", mock}};
}

RunConfig run_config_from_json(const json &doc) {
    const std::string where = "config";
    reject_unknown(doc, {"total_steps", "schedule_steps", "beta_start", "beta_end", "ecm_period", "ecm_enabled",
                         "ccm_enabled", "iterations", "blend_mode", "blend_threshold", "token_index",
                         "ccm_normalization", "ecm", "final_stage", "seed", "strict_alg1", "prompt_src",
                         "prompt_tgt", "background", "render", "mock"},
                   where);
    RunConfig rc;
    EditConfig &e = rc.edit;
    read_into(doc, "total_steps", e.total_steps, where);
    read_into(doc, "schedule_steps", e.schedule_steps, where);
    read_into(doc, "beta_start", e.beta_start, where);
    read_into(doc, "beta_end", e.beta_end, where);
    read_into(doc, "ecm_period", e.ecm_period, where);
    read_into(doc, "ecm_enabled", e.ecm_enabled, where);
    read_into(doc, "ccm_enabled", e.ccm_enabled, where);
    read_into(doc, "iterations", e.iterations, where);
    if (doc.contains("blend_mode")) {
        std::string mode;
        read_into(doc, "blend_mode", mode, where);
        if (mode == "soft") e.blend_mode = BlendMode::Soft;
        else if (mode == "threshold") e.blend_mode = BlendMode::Threshold;
        else throw ParseError(where + ": blend_mode must be 'soft' or 'threshold'", 0);
    }
    read_into(doc, "blend_threshold", e.blend_threshold, where);
    read_into(doc, "token_index", e.token_index, where);
    if (doc.contains("ccm_normalization")) {
        std::string mode;
        read_into(doc, "ccm_normalization", mode, where);
        if (mode == "weight") e.ccm_normalization = Normalization::Weight;
        else if (mode == "count") e.ccm_normalization = Normalization::Count;
        else throw ParseError(where + ": ccm_normalization must be 'weight' or 'count'", 0);
    }
    if (doc.contains("ecm")) e.ecm = finetune_config_from_json(doc["ecm"], e.ecm);
    if (doc.contains("final_stage")) e.final_stage = finetune_config_from_json(doc["final_stage"], e.final_stage);
    read_into(doc, "seed", e.seed, where);
    read_into(doc, "strict_alg1", e.strict_alg1, where);
    read_into(doc, "prompt_src", e.prompt_src, where);
    read_into(doc, "prompt_tgt", e.prompt_tgt, where);
    if (doc.contains("background")) e.background = vec3_from(doc["background"], where + ".background");
    if (doc.contains("render")) e.render = render_config_from_json(doc["render"]);
    if (doc.contains("mock")) {
        const json &m = doc["mock"];
        const std::string mw = "config.mock";
        reject_unknown(m, {"drift_rate", "bias_amplitude", "attention_noise", "attention_downsample", "seed",
                           "attention_source", "target_region", "target_color", "target_scene"},
                       mw);
        MockSettings &s = rc.mock;
        read_into(m, "drift_rate", s.drift_rate, mw);
        read_into(m, "bias_amplitude", s.bias_amplitude, mw);
        read_into(m, "attention_noise", s.attention_noise, mw);
        read_into(m, "attention_downsample", s.attention_downsample, mw);
        read_into(m, "seed", s.seed, mw);
        read_into(m, "attention_source", s.attention_source, mw);
        read_into(m, "target_region", s.target_region, mw);
        if (m.contains("target_color")) s.target_color = vec3_from(m["target_color"], mw + ".target_color");
        read_into(m, "target_scene", s.target_scene, mw);
    }
    try {
        e.validate();
    } catch (const Error &err) {
        throw ParseError(where + ": " + err.what(), 0);
    }
    return rc;
}

RunConfig load_run_config(const fs::path &path) { return run_config_from_json(load_json(path)); }

MockPredictorSpec mock_spec(const MockSettings &settings, const GaussianCloud &source, const CameraSet &cameras,
                            const EditConfig &edit) {
    MockPredictorSpec spec;
    spec.target_cloud = settings.target_scene.empty()
                            ? recolor_region(source, settings.target_region, settings.target_color)
                            : load_scene(settings.target_scene);
    if (spec.target_cloud.size() != source.size()) {
        throw AlignmentError("mock target scene has " + std::to_string(spec.target_cloud.size()) +
                             " Gaussians, source has " + std::to_string(source.size()));
    }
    spec.cameras = cameras;
    spec.drift_rate = settings.drift_rate;
    spec.bias_amplitude = settings.bias_amplitude;
    spec.attention_source = settings.attention_source;
    spec.attention_noise = settings.attention_noise;
    spec.attention_downsample = settings.attention_downsample;
    spec.seed = settings.seed;
    spec.background = edit.background;
    spec.render = edit.render;
    return spec;
}

json load_json(const fs::path &path) {
    auto in = open_in(path);
    const std::string text = read_all(in);
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw ParseError("'" + path.string() + "': " + e.what(), e.byte);
    }
}

void save_json(const json &doc, const fs::path &path) { save_text(doc.dump(2) + "\n", path); }

void save_text(const std::string &text, const fs::path &path) {
    auto out = open_out(path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

} // namespace consplat
