#include "consplat/cli.hpp"
#include "consplat/error.hpp"
#include "consplat/io.hpp"

#include "fake_editor.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace consplat;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "consplat");
    std::ostringstream out, err;
    const int code = cli_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

// Small two-blob scene written by the synth command.
struct Workspace {
    fixture::TempDir dir{"cli"};
    std::string scene, ply, cameras;

    Workspace() {
        const std::string d = dir.path().string();
        const Run r = cli({"synth", "--n", "24", "--layout", "two-blob", "--seed", "5", "--views", "3",
                           "--width", "24", "--height", "24", "--out", d + "/scene"});
        REQUIRE(r.code == 0);
        scene = d + "/scene/scene.json";
        ply = d + "/scene/scene.ply";
        cameras = d + "/scene/cameras.json";
    }

    std::string path(const std::string &rel) const { return (dir.path() / rel).string(); }

    std::string write_config(const json &extra = json::object()) const {
        json c = {{"iterations", 1},     {"schedule_steps", 4}, {"ecm_period", 2},
                  {"seed", 3},           {"background", {0.5, 0.5, 0.5}},
                  {"ecm", {{"steps", 5}}}, {"final_stage", {{"steps", 10}}},
                  {"mock", {{"bias_amplitude", 0.1}, {"attention_downsample", 4}, {"seed", 2}}}};
        c.update(extra);
        const std::string p = path("run.json");
        save_json(c, p);
        return p;
    }
};

} // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"render", "--scene", "x.json"}).code == kExitUsage);
    CHECK(cli({"synth", "--n", "0", "--out", "/tmp/x"}).code == kExitUsage);
    CHECK(cli({"synth", "--layout", "spiral", "--out", "/tmp/x"}).code == kExitUsage);
    const Run help = cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("synth") != std::string::npos);
    CHECK(cli({"--version"}).out.find('.') != std::string::npos);
}

TEST_CASE("synth writes both scene formats, cameras and a manifest") {
    Workspace w;
    CHECK(load_scene(w.scene).size() == 24);
    CHECK(load_scene(w.ply).size() == 24);
    CHECK(load_cameras(w.cameras).size() == 3);
    const json m = load_json(w.path("scene/manifest.json"));
    CHECK(m["command"] == "synth");
    CHECK(m["seeds"]["synth"] == 5);
}

TEST_CASE("bad data exits 2") {
    Workspace w;
    CHECK(cli({"info", "--scene", w.path("nope.json")}).code == kExitData);
    std::ofstream(w.path("bad.ply"), std::ios::binary) << "ply\nformat ascii 1.0\nend_header\n";
    const Run r = cli({"info", "--scene", w.path("bad.ply")});
    CHECK(r.code == kExitData);
    CHECK(r.err.find("error") != std::string::npos);
    CHECK(cli({"edit", "--scene", w.scene, "--cameras", w.cameras, "--config",
               w.write_config({{"iteratons", 2}}), "--out", w.path("e")})
              .code == kExitData);
}

TEST_CASE("render, metrics and info") {
    Workspace w;
    const Run r = cli({"render", "--scene", w.ply, "--cameras", w.cameras, "--out-dir", w.path("r"),
                       "--format", "ppm", "--background", "0.5,0.5,0.5"});
    REQUIRE(r.code == 0);
    CHECK(load_views(w.path("r")).size() == 3);
    CHECK(cli({"render", "--scene", w.ply, "--cameras", w.cameras, "--out-dir", w.path("r2"),
               "--background", "0.5,0.5"})
              .code != kExitOk);
    const Run m = cli({"metrics", "--scene", w.scene, "--cameras", w.cameras, "--images-dir", w.path("r"),
                       "--out", w.path("m.tsv")});
    CHECK(m.code == 0);
    CHECK(fixture::read_file(w.path("m.tsv")).find("mean_variance") != std::string::npos);
    const Run i = cli({"info", "--scene", w.scene});
    CHECK(i.code == 0);
    CHECK(i.out.find("24") != std::string::npos);
}

TEST_CASE("consolidate and calibrate") {
    Workspace w;
    REQUIRE(cli({"render", "--scene", w.scene, "--cameras", w.cameras, "--out-dir", w.path("r")}).code == 0);
    const Run c = cli({"consolidate", "--scene", w.scene, "--cameras", w.cameras, "--maps-dir", w.path("r"),
                       "--mode", "count", "--out-dir", w.path("c")});
    CHECK(c.code == 0);
    CHECK(load_view_maps(w.path("c")).maps.size() == 3);
    const Run k = cli({"calibrate", "--scene", w.scene, "--cameras", w.cameras, "--images-dir", w.path("r"),
                       "--config", w.write_config(), "--out-dir", w.path("k")});
    CHECK(k.code == 0);
    CHECK(load_views(w.path("k")).size() == 3);
    CHECK(std::filesystem::exists(w.path("k/metrics.tsv")));
}

TEST_CASE("edit with the in-process mock writes per-iteration outputs") {
    Workspace w;
    const Run r = cli({"edit", "--scene", w.scene, "--cameras", w.cameras, "--config", w.write_config(),
                       "--out", w.path("e")});
    REQUIRE(r.code == 0);
    CHECK(load_scene(w.path("e/scene.json")).size() == 24);
    CHECK(load_views(w.path("e/iter_1/renders")).size() == 3);
    CHECK(load_views(w.path("e/iter_1/guidance")).size() == 3);
    CHECK(std::filesystem::exists(w.path("e/iter_1/loss.jsonl")));
    CHECK(load_json(w.path("e/manifest.json"))["config_hash"].is_string());
}

TEST_CASE("edit against a remote service") {
    Workspace w;
    const std::string config = w.write_config();
    const RunConfig rc = load_run_config(config);
    const GaussianCloud cloud = load_scene(w.scene);
    const CameraSet cams = load_cameras(w.cameras);
    {
        fixture::FakeEditor server(mock_spec(rc.mock, cloud, cams, rc.edit));
        const Run r = cli({"edit", "--scene", w.scene, "--cameras", w.cameras, "--config", config,
                           "--predictor", "remote", "--endpoint", server.address(), "--remote-lpips",
                           "--out", w.path("remote")});
        CHECK(r.code == 0);
        CHECK(server.unet_calls() > 0);
        const Run local = cli({"edit", "--scene", w.scene, "--cameras", w.cameras, "--config", config,
                               "--out", w.path("local")});
        CHECK(local.code == 0);
    }
    // The unreachable service is a remote failure.
    const Run dead = cli({"edit", "--scene", w.scene, "--cameras", w.cameras, "--config", config,
                          "--predictor", "remote", "--endpoint", "127.0.0.1:1", "--timeout", "2",
                          "--out", w.path("dead")});
    CHECK(dead.code == kExitRemote);
}
