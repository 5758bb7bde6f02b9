#include "consplat/remote.hpp"

#include "consplat/error.hpp"
#include "consplat/wire.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <mutex>

namespace consplat {

using nlohmann::json;

Endpoint Endpoint::parse(const std::string &address) {
    std::string rest = address;
    if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
    if (rest.rfind("https://", 0) == 0) throw InvalidArgument("https endpoints are not supported");
    while (!rest.empty() && rest.back() == '/') rest.pop_back();
    Endpoint e;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) {
        if (rest.empty()) throw InvalidArgument("empty endpoint address");
        e.host = rest;
        return e;
    }
    e.host = rest.substr(0, colon);
    const std::string port = rest.substr(colon + 1);
    try {
        std::size_t used = 0;
        e.port = std::stoi(port, &used);
        if (used != port.size() || e.port < 1 || e.port > 65535) throw std::invalid_argument(port);
    } catch (const std::exception &) {
        throw InvalidArgument("bad port in endpoint '" + address + "'");
    }
    if (e.host.empty()) throw InvalidArgument("missing host in endpoint '" + address + "'");
    return e;
}

std::string Endpoint::str() const { return "http://" + host + ":" + std::to_string(port); }

struct RemoteClient::Impl {
    httplib::Client http;
    std::mutex mutex;

    Impl(const Endpoint &e, double timeout) : http(e.host, e.port) {
        const auto usec = std::chrono::microseconds(static_cast<long long>(timeout * 1e6));
        http.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                                    usec.count() % 1000000);
        http.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                              usec.count() % 1000000);
        http.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(usec).count(),
                               usec.count() % 1000000);
        http.set_keep_alive(false);
    }
};

RemoteClient::RemoteClient(Endpoint endpoint, double timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_(timeout_seconds) {
    if (!(timeout_seconds > 0.0)) throw InvalidArgument("remote timeout must be positive");
    impl_ = std::make_unique<Impl>(endpoint_, timeout_);
}

RemoteClient::~RemoteClient() = default;

namespace {

std::atomic<unsigned> g_request_counter{0};

[[noreturn]] void raise_transport(httplib::Error err, const std::string &target, double elapsed,
                                  double timeout, const std::string &request_id) {
    const std::string what = target + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout ||
        ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed >= 0.9 * timeout)) {
        throw TimeoutError(what + " after " + std::to_string(elapsed) + " s", request_id);
    }
    throw ConnectionError(what, request_id);
}

json parse_body(const httplib::Result &res, const std::string &request_id) {
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error &e) {
        throw ProtocolError(std::string("response is not valid JSON: ") + e.what(), "body", request_id);
    }
    if (res->status != 200) {
        std::string message = "service answered HTTP " + std::to_string(res->status);
        std::string field = "status";
        if (body.is_object()) {
            if (body.contains("error") && body["error"].is_string()) message += ": " + body["error"].get<std::string>();
            if (body.contains("field") && body["field"].is_string()) field = body["field"].get<std::string>();
        }
        throw ProtocolError(message, field, request_id);
    }
    if (!body.is_object()) throw ProtocolError("response must be a JSON object", "body", request_id);
    return body;
}

void check_version(const httplib::Result &res, const std::string &request_id) {
    if (res->has_header(wire::kProtocolHeader) &&
        res->get_header_value(wire::kProtocolHeader) != wire::kProtocolVersion) {
        throw ProtocolError("service speaks protocol " + res->get_header_value(wire::kProtocolHeader) +
                                ", client speaks " + wire::kProtocolVersion,
                            "version", request_id);
    }
}

} // namespace

HealthInfo RemoteClient::health() {
    const std::string id = "health-" + std::to_string(g_request_counter++);
    httplib::Headers headers{{wire::kProtocolHeader, wire::kProtocolVersion}, {"X-Request-Id", id}};
    const auto start = std::chrono::steady_clock::now();
    httplib::Result res;
    {
        std::lock_guard lock(impl_->mutex);
        res = impl_->http.Get("/health", headers);
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res) raise_transport(res.error(), endpoint_.str() + "/health", elapsed, timeout_, id);
    check_version(res, id);
    const json body = parse_body(res, id);
    HealthInfo info;
    info.version = wire::require_string(body, "version");
    info.mode = wire::require_string(body, "mode");
    info.codec = wire::require_string(body, "codec");
    if (info.version != wire::kProtocolVersion) {
        throw ProtocolError("service speaks protocol " + info.version + ", client speaks " +
                                wire::kProtocolVersion,
                            "version", id);
    }
    return info;
}

json RemoteClient::post(const std::string &path, const json &body, const std::string &request_id) {
    const std::string id = request_id.empty() ? "req-" + std::to_string(g_request_counter++) : request_id;
    httplib::Headers headers{{wire::kProtocolHeader, wire::kProtocolVersion}, {"X-Request-Id", id}};
    const std::string payload = body.dump();
    const auto start = std::chrono::steady_clock::now();
    httplib::Result res;
    {
        std::lock_guard lock(impl_->mutex);
        res = impl_->http.Post(path, headers, payload, "application/json");
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res) raise_transport(res.error(), endpoint_.str() + path, elapsed, timeout_, id);
    check_version(res, id);
    return parse_body(res, id);
}

RemotePredictor::RemotePredictor(std::shared_ptr<RemoteClient> client) : client_(std::move(client)) {
    health_ = client_->health();
}

PredictorResponse RemotePredictor::predict(const PredictorRequest &request) {
    if (!request.latents) throw InvalidArgument("remote predictor: request carries no latents");
    json body = {{"request_id", request.request_id},
                 {"t", request.timestep},
                 {"alpha_bar", request.alpha_bar},
                 {"seed", request.seed},
                 {"prompt_src", request.prompt_src},
                 {"prompt_tgt", request.prompt_tgt},
                 {"latents", wire::encode_tensors(*request.latents)}};
    if (request.latents_original) body["latents_ori"] = wire::encode_tensors(*request.latents_original);
    if (request.injected_attention) {
        body["injected_attention"] = wire::encode_tensors(request.injected_attention->maps);
        body["token_labels"] = request.injected_attention->labels;
    }
    const json reply = client_->post("/unet", body, request.request_id);
    try {
        PredictorResponse out;
        out.noise_src = wire::decode_tensors(wire::require(reply, "noise_src"), "noise_src");
        out.noise_tgt = wire::decode_tensors(wire::require(reply, "noise_tgt"), "noise_tgt");
        out.attention.maps = wire::decode_tensors(wire::require(reply, "attention"), "attention");
        if (reply.contains("token_labels")) {
            const auto &labels = reply["token_labels"];
            if (!labels.is_array()) throw ProtocolError("expected a list of strings", "token_labels");
            for (const auto &l : labels) {
                if (!l.is_string()) throw ProtocolError("expected a list of strings", "token_labels");
                out.attention.labels.push_back(l.get<std::string>());
            }
        }
        const std::size_t V = request.latents->size();
        auto check_views = [&](const std::vector<Image> &list, const char *field) {
            if (list.size() != V) {
                throw ProtocolError(std::to_string(list.size()) + " tensors for " + std::to_string(V) + " views", field);
            }
            for (std::size_t v = 0; v < V; ++v) {
                if (list[v].channels() < 1) throw ProtocolError("empty tensor", field);
            }
        };
        check_views(out.noise_src, "noise_src");
        check_views(out.noise_tgt, "noise_tgt");
        check_views(out.attention.maps, "attention");
        for (std::size_t v = 0; v < V; ++v) {
            if (!out.noise_src[v].same_shape((*request.latents)[v])) {
                throw ProtocolError("shape differs from the latents", "noise_src[" + std::to_string(v) + "]");
            }
            if (!out.noise_tgt[v].same_shape((*request.latents)[v])) {
                throw ProtocolError("shape differs from the latents", "noise_tgt[" + std::to_string(v) + "]");
            }
            if (!out.attention.maps[v].same_shape(out.attention.maps.front())) {
                throw ProtocolError("attention maps differ in shape", "attention[" + std::to_string(v) + "]");
            }
        }
        if (!out.attention.labels.empty() &&
            out.attention.labels.size() != static_cast<std::size_t>(out.attention.channels())) {
            throw ProtocolError("label count differs from attention channels", "token_labels");
        }
        return out;
    } catch (const ProtocolError &e) {
        if (!e.requestId().empty()) throw;
        throw ProtocolError(e.message(), e.field(), request.request_id);
    }
}

RemoteCodec::RemoteCodec(std::shared_ptr<RemoteClient> client) : client_(std::move(client)) {}

std::vector<Image> RemoteCodec::encode(const std::vector<Image> &images) {
    const json reply = client_->post("/encode", {{"images", wire::encode_tensors(images)}},
                                     "encode-" + std::to_string(counter_++));
    auto out = wire::decode_tensors(wire::require(reply, "latents"), "latents");
    if (out.size() != images.size()) throw ProtocolError("latent count differs from image count", "latents");
    return out;
}

std::vector<Image> RemoteCodec::decode(const std::vector<Image> &latents) {
    const json reply = client_->post("/decode", {{"latents", wire::encode_tensors(latents)}},
                                     "decode-" + std::to_string(counter_++));
    auto out = wire::decode_tensors(wire::require(reply, "images"), "images");
    if (out.size() != latents.size()) throw ProtocolError("image count differs from latent count", "images");
    return out;
}

std::unique_ptr<NoisePredictor> remote_predictor(const std::string &address, double timeout_seconds) {
    auto client = std::make_shared<RemoteClient>(Endpoint::parse(address), timeout_seconds);
    return std::make_unique<RemotePredictor>(std::move(client));
}

PerceptualHook remote_lpips(std::shared_ptr<RemoteClient> client) {
    return [client](const Image &rendered, const Image &target) {
        const json reply = client->post(
            "/lpips", {{"imageA", wire::encode_tensor(rendered)}, {"imageB", wire::encode_tensor(target)}});
        LossValue out;
        out.value = wire::require_number(reply, "value");
        out.gradient = wire::decode_tensor(wire::require(reply, "gradient_imageA"), "gradient_imageA");
        if (!out.gradient.same_shape(rendered)) {
            throw ProtocolError("gradient shape differs from imageA", "gradient_imageA");
        }
        return out;
    };
}

} // namespace consplat
