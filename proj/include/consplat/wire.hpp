#pragma once

#include "consplat/consolidation.hpp"
#include "consplat/image.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace consplat::wire {

inline constexpr const char *kProtocolHeader = "X-Consplat-Protocol";
inline constexpr const char *kProtocolVersion = "1";

std::string base64_encode(std::string_view bytes);
// Throws ProtocolError naming `field` on characters outside the standard alphabet or
// bad padding.
std::string base64_decode(std::string_view text, const std::string &field = "data");

// {"shape": [H, W, C], "dtype": "float32", "data": base64 of little-endian float32 in
// row-major (y, x, c) order}.
nlohmann::json encode_tensor(const Image &image);
Image decode_tensor(const nlohmann::json &value, const std::string &field);

nlohmann::json encode_tensors(const std::vector<Image> &images);
std::vector<Image> decode_tensors(const nlohmann::json &value, const std::string &field);

// Member access that throws ProtocolError naming the field when absent or mistyped.
const nlohmann::json &require(const nlohmann::json &object, const std::string &field);
double require_number(const nlohmann::json &object, const std::string &field);
std::string require_string(const nlohmann::json &object, const std::string &field);

// Rounds every value to float32, as a round trip through the wire format would.
Image to_wire_precision(const Image &image);

} // namespace consplat::wire
