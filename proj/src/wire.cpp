#include "consplat/wire.hpp"

#include "consplat/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace consplat::wire {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<int, 256> make_reverse() {
    std::array<int, 256> r{};
    for (auto &x : r) x = -1;
    for (int i = 0; i < 64; ++i) r[static_cast<unsigned char>(kAlphabet[i])] = i;
    return r;
}

constexpr auto kReverse = make_reverse();

void put_le32(std::string &out, std::uint32_t bits) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

std::uint32_t get_le32(const std::string &in, std::size_t offset) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
    return bits;
}

} // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(kAlphabet[(n >> 6) & 63]);
        out.push_back(kAlphabet[n & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        if (rest == 2) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(rest == 2 ? kAlphabet[(n >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

std::string base64_decode(std::string_view text, const std::string &field) {
    if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4", field);
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && last && k >= 2) {
                v[k] = 0;
                ++pad;
                continue;
            }
            if (pad > 0) throw ProtocolError("misplaced base64 padding", field);
            v[k] = kReverse[static_cast<unsigned char>(c)];
            if (v[k] < 0) throw ProtocolError("invalid base64 character", field);
        }
        const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<char>((n >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<char>((n >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<char>(n & 0xFF));
    }
    return out;
}

nlohmann::json encode_tensor(const Image &image) {
    std::string bytes;
    bytes.reserve(image.size() * 4);
    for (double x : image.data()) put_le32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    return {{"shape", {image.height(), image.width(), image.channels()}},
            {"dtype", "float32"},
            {"data", base64_encode(bytes)}};
}

Image decode_tensor(const nlohmann::json &value, const std::string &field) {
    if (!value.is_object()) throw ProtocolError("tensor must be an object", field);
    if (!value.contains("shape")) throw ProtocolError("missing field", field + ".shape");
    const auto &shape = value["shape"];
    if (!shape.is_array() || shape.size() != 3) {
        throw ProtocolError("tensor shape must list [height, width, channels]", field + ".shape");
    }
    int dims[3];
    for (int k = 0; k < 3; ++k) {
        if (!shape[k].is_number_integer() || shape[k].get<long long>() < 1 || shape[k].get<long long>() > (1 << 20)) {
            throw ProtocolError("tensor dimensions must be positive integers", field + ".shape");
        }
        dims[k] = shape[k].get<int>();
    }
    if (value.contains("dtype") && value["dtype"] != "float32") {
        throw ProtocolError("only float32 tensors are supported", field + ".dtype");
    }
    if (!value.contains("data")) throw ProtocolError("missing field", field + ".data");
    const auto &data = value["data"];
    if (!data.is_string()) throw ProtocolError("tensor data must be a base64 string", field + ".data");
    const std::string bytes = base64_decode(data.get_ref<const std::string &>(), field + ".data");
    Image out(dims[1], dims[0], dims[2]);
    if (bytes.size() != out.size() * 4) {
        throw ProtocolError("tensor payload holds " + std::to_string(bytes.size()) + " bytes, shape needs " +
                                std::to_string(out.size() * 4),
                            field + ".data");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float f = std::bit_cast<float>(get_le32(bytes, 4 * i));
        if (!std::isfinite(f)) throw ProtocolError("tensor holds non-finite values", field + ".data");
        out.data()[i] = f;
    }
    return out;
}

nlohmann::json encode_tensors(const std::vector<Image> &images) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto &im : images) out.push_back(encode_tensor(im));
    return out;
}

std::vector<Image> decode_tensors(const nlohmann::json &value, const std::string &field) {
    if (!value.is_array()) throw ProtocolError("expected a list of tensors", field);
    std::vector<Image> out;
    out.reserve(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
        out.push_back(decode_tensor(value[i], field + "[" + std::to_string(i) + "]"));
    }
    return out;
}

const nlohmann::json &require(const nlohmann::json &object, const std::string &field) {
    if (!object.is_object() || !object.contains(field)) throw ProtocolError("missing field", field);
    return object[field];
}

double require_number(const nlohmann::json &object, const std::string &field) {
    const auto &v = require(object, field);
    if (!v.is_number()) throw ProtocolError("expected a number", field);
    return v.get<double>();
}

std::string require_string(const nlohmann::json &object, const std::string &field) {
    const auto &v = require(object, field);
    if (!v.is_string()) throw ProtocolError("expected a string", field);
    return v.get<std::string>();
}

Image to_wire_precision(const Image &image) {
    Image out = image;
    for (double &x : out.storage()) x = static_cast<float>(x);
    return out;
}

} // namespace consplat::wire
