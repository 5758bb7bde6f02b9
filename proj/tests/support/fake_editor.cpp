#include "fake_editor.hpp"

#include "consplat/wire.hpp"

#include <httplib.h>

#include <chrono>

namespace fixture {

using nlohmann::json;
using namespace consplat;

FakeEditor::FakeEditor(MockPredictorSpec spec) : FakeEditor(std::move(spec), Options{}) {}

FakeEditor::FakeEditor(MockPredictorSpec spec, Options options)
    : predictor_(std::move(spec)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    auto stamp = [this](const httplib::Request &req, httplib::Response &res) {
        std::lock_guard lock(mutex_);
        last_header_ = req.get_header_value(wire::kProtocolHeader);
        last_id_ = req.get_header_value("X-Request-Id");
        res.set_header(wire::kProtocolHeader, options_.protocol_version);
    };
    server_->Get("/health", [this, stamp](const httplib::Request &req, httplib::Response &res) {
        stamp(req, res);
        json body = {{"version", options_.protocol_version}, {"mode", "mock"}, {"codec", "identity"}};
        res.set_content(body.dump(), "application/json");
    });
    server_->Post("/unet", [this, stamp](const httplib::Request &req, httplib::Response &res) {
        stamp(req, res);
        if (options_.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options_.delay_ms));
        std::string reply;
        int status = 200;
        serve_unet(req.body, reply, status);
        res.status = status;
        res.set_content(reply, "application/json");
    });
    server_->Post("/encode", [stamp](const httplib::Request &req, httplib::Response &res) {
        stamp(req, res);
        const json body = json::parse(req.body);
        res.set_content(json{{"latents", body.at("images")}}.dump(), "application/json");
    });
    server_->Post("/decode", [stamp](const httplib::Request &req, httplib::Response &res) {
        stamp(req, res);
        const json body = json::parse(req.body);
        res.set_content(json{{"images", body.at("latents")}}.dump(), "application/json");
    });
    server_->Post("/lpips", [stamp](const httplib::Request &req, httplib::Response &res) {
        stamp(req, res);
        const json body = json::parse(req.body);
        const Image a = wire::decode_tensor(body.at("imageA"), "imageA");
        const Image b = wire::decode_tensor(body.at("imageB"), "imageB");
        Image grad(a.width(), a.height(), a.channels());
        double value = 0.0;
        const double n = static_cast<double>(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a.storage()[i] - b.storage()[i];
            value += d * d / n;
            grad.storage()[i] = 2.0 * d / n;
        }
        res.set_content(json{{"value", value}, {"gradient_imageA", wire::encode_tensor(grad)}}.dump(),
                        "application/json");
    });
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

FakeEditor::~FakeEditor() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

void FakeEditor::serve_unet(const std::string &text, std::string &reply, int &status) {
    const json body = json::parse(text);
    {
        std::lock_guard lock(mutex_);
        last_unet_ = body;
        ++unet_calls_;
    }
    if (options_.fault == Fault::Reject422) {
        status = 422;
        reply = json{{"error", "latents must be finite"}, {"field", "latents"}}.dump();
        return;
    }
    const std::vector<Image> latents = wire::decode_tensors(body.at("latents"), "latents");
    PredictorRequest request;
    request.request_id = body.at("request_id").get<std::string>();
    request.timestep = body.at("t").get<int>();
    request.alpha_bar = body.at("alpha_bar").get<double>();
    request.seed = body.at("seed").get<std::uint64_t>();
    request.latents = &latents;
    ViewMaps injected;
    if (body.contains("injected_attention")) {
        injected.maps = wire::decode_tensors(body["injected_attention"], "injected_attention");
        injected.labels = body.value("token_labels", std::vector<std::string>{});
        request.injected_attention = &injected;
    }
    const PredictorResponse r = predictor_.predict(request);
    json out = {{"noise_src", wire::encode_tensors(r.noise_src)},
                {"noise_tgt", wire::encode_tensors(r.noise_tgt)},
                {"attention", wire::encode_tensors(r.attention.maps)},
                {"token_labels", r.attention.labels}};
    switch (options_.fault) {
    case Fault::MissingNoiseTgt: out.erase("noise_tgt"); break;
    case Fault::WrongShape: {
        const Image &z = latents.front();
        out["noise_src"][0] = wire::encode_tensor(Image(z.width() + 1, z.height(), z.channels()));
        break;
    }
    case Fault::BadBase64: out["attention"][0]["data"] = "***not base64***"; break;
    default: break;
    }
    reply = out.dump();
}

json FakeEditor::last_unet_request() const {
    std::lock_guard lock(mutex_);
    return last_unet_;
}

std::string FakeEditor::last_protocol_header() const {
    std::lock_guard lock(mutex_);
    return last_header_;
}

std::string FakeEditor::last_request_id() const {
    std::lock_guard lock(mutex_);
    return last_id_;
}

int FakeEditor::unet_calls() const {
    std::lock_guard lock(mutex_);
    return unet_calls_;
}

} // namespace fixture
