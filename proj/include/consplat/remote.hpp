#pragma once

#include "consplat/calibrator.hpp"
#include "consplat/predictor.hpp"

#include <json.hpp>

#include <memory>
#include <string>

namespace consplat {

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 8765;

    // Accepts "host:port", "http://host:port" and a trailing slash.
    static Endpoint parse(const std::string &address);
    std::string str() const;
};

struct HealthInfo {
    std::string version;
    std::string mode;  // mock | diffusion
    std::string codec; // identity | vae
};

// Blocking JSON-over-HTTP client for the editor service. Every request carries the
// protocol header. Transport failures raise ConnectionError or TimeoutError (both
// retryable); bad status codes and malformed bodies raise ProtocolError.
class RemoteClient {
public:
    RemoteClient(Endpoint endpoint, double timeout_seconds = 30.0);
    ~RemoteClient();
    RemoteClient(const RemoteClient &) = delete;
    RemoteClient &operator=(const RemoteClient &) = delete;

    const Endpoint &endpoint() const { return endpoint_; }
    double timeout() const { return timeout_; }

    // GET /health; throws ProtocolError("version") if the service speaks another
    // protocol version.
    HealthInfo health();

    nlohmann::json post(const std::string &path, const nlohmann::json &body,
                        const std::string &request_id = {});

private:
    struct Impl;
    Endpoint endpoint_;
    double timeout_;
    std::unique_ptr<Impl> impl_;
};

class RemotePredictor final : public NoisePredictor {
public:
    explicit RemotePredictor(std::shared_ptr<RemoteClient> client);

    PredictorResponse predict(const PredictorRequest &request) override;
    std::string name() const override { return "remote"; }

    const HealthInfo &health() const { return health_; }

private:
    std::shared_ptr<RemoteClient> client_;
    HealthInfo health_;
};

class RemoteCodec final : public LatentCodec {
public:
    explicit RemoteCodec(std::shared_ptr<RemoteClient> client);

    std::vector<Image> encode(const std::vector<Image> &images) override;
    std::vector<Image> decode(const std::vector<Image> &latents) override;
    std::string name() const override { return "remote"; }

private:
    std::shared_ptr<RemoteClient> client_;
    int counter_ = 0;
};

// Checks /health first, so an unreachable service fails before any state is created.
std::unique_ptr<NoisePredictor> remote_predictor(const std::string &address, double timeout_seconds = 30.0);

// Perceptual loss served by POST /lpips.
PerceptualHook remote_lpips(std::shared_ptr<RemoteClient> client);

} // namespace consplat
