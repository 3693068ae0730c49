#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "config_io.hpp"
#include "raster_io.hpp"
#include "scene_synth.hpp"

using namespace dmk;
using namespace dmk::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dmk_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

Field noise(int rows, int cols, unsigned seed, double lo, double hi) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    Field f(rows, cols);
    for (double& x : f.data) x = d(rng);
    return f;
}

std::string error_path(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const InputError& e) {
        return e.path();
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("pfm round trip is exact at float precision") {
    TempDir dir;
    const Field f = noise(5, 7, 1, -3.0, 40.0);
    write_pfm(dir / "f.pfm", f);
    const Field g = read_pfm(dir / "f.pfm");
    REQUIRE(g.same_shape(f));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(g.data[i] == double(float(f.data[i])));

    const Field3 t{noise(3, 4, 2, -1, 1), noise(3, 4, 3, -1, 1), noise(3, 4, 4, -1, 1)};
    write_pfm(dir / "t.pfm", t);
    const Field3 u = read_pfm3(dir / "t.pfm");
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < t[c].size(); ++i) CHECK(u[c].data[i] == double(float(t[c].data[i])));
}

TEST_CASE("pfm header and row order") {
    TempDir dir;
    Field f(2, 3, 0.0);
    f.at(0, 0) = 1.0;  // top-left
    write_pfm(dir / "f.pfm", f);
    const std::string bytes = slurp(dir / "f.pfm");
    const std::string header = "Pf\n3 2\n-1.0\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    CHECK(bytes.size() == header.size() + 6 * 4);
    // Bottom row first: the 1.0 is the first float of the second stored row.
    const std::string one("\x00\x00\x80\x3f", 4);
    CHECK(bytes.substr(header.size() + 3 * 4, 4) == one);
}

TEST_CASE("big-endian pfm is accepted") {
    TempDir dir;
    std::string s = "Pf\n2 1\n1.0\n";
    s += std::string("\x3f\x80\x00\x00", 4);
    s += std::string("\x40\x00\x00\x00", 4);
    spit(dir / "be.pfm", s);
    const Field f = read_pfm(dir / "be.pfm");
    CHECK(f.data == std::vector<double>{1.0, 2.0});
}

TEST_CASE("malformed pfm files are rejected") {
    TempDir dir;
    spit(dir / "magic.pfm", "P5\n1 1\n-1.0\n0000");
    spit(dir / "short.pfm", "Pf\n4 4\n-1.0\n0000");
    spit(dir / "scale.pfm", "Pf\n1 1\nzero\n0000");
    spit(dir / "dims.pfm", "Pf\n0 1\n-1.0\n");
    CHECK_THROWS_AS(read_pfm(dir / "magic.pfm"), InputError);
    CHECK_THROWS_AS(read_pfm(dir / "short.pfm"), InputError);
    CHECK_THROWS_AS(read_pfm(dir / "scale.pfm"), InputError);
    CHECK_THROWS_AS(read_pfm(dir / "dims.pfm"), InputError);
    CHECK_THROWS_AS(read_pfm(dir / "missing.pfm"), InputError);
    write_pfm(dir / "one.pfm", Field(2, 2, 1.0));
    CHECK_THROWS_AS(read_pfm3(dir / "one.pfm"), InputError);
}

TEST_CASE("ppm and pgm quantise to 8 bits") {
    TempDir dir;
    const RgbImage img{noise(4, 6, 5, -0.2, 1.2), noise(4, 6, 6, 0, 1), noise(4, 6, 7, 0, 1)};
    write_ppm(dir / "i.ppm", img);
    CHECK(slurp(dir / "i.ppm").substr(0, 11) == "P6\n6 4\n255\n");
    const RgbImage back = read_ppm(dir / "i.ppm");
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < img[c].size(); ++i) {
            CHECK(back[c].data[i] == quantize8(img[c].data[i]));
            CHECK(back[c].data[i] >= 0.0);
            CHECK(back[c].data[i] <= 1.0);
        }
    CHECK(quantize8(0.5) == 128.0 / 255.0);
    CHECK(quantize8(-1.0) == 0.0);
    CHECK(quantize8(2.0) == 1.0);

    Field mask(3, 3, 0.0);
    mask.data[4] = 1.0;
    write_pgm(dir / "m.pgm", mask);
    CHECK(slurp(dir / "m.pgm").substr(0, 11) == "P5\n3 3\n255\n");
    CHECK(read_pgm(dir / "m.pgm").data == mask.data);
}

TEST_CASE("pnm headers may carry comments") {
    TempDir dir;
    spit(dir / "c.pgm", std::string("P5\n# made by hand\n2 1\n255\n") + char(0) + char(255));
    CHECK(read_pgm(dir / "c.pgm").data == std::vector<double>{0.0, 1.0});
    CHECK_THROWS_AS(read_ppm(dir / "c.pgm"), InputError);
    spit(dir / "deep.pgm", "P5\n1 1\n65535\n00");
    CHECK_THROWS_AS(read_pgm(dir / "deep.pgm"), InputError);
}

TEST_CASE("scene specs round trip through json") {
    const synth::SceneSpec s = synth::dynamic_scene(4);
    const json j = to_json(s);
    CHECK(j["schema"] == "dmk.scene_spec/1");
    const synth::SceneSpec back = scene_spec_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.objects.size() == s.objects.size());
    CHECK(back.k.fx == s.k.fx);
    CHECK(back.ego.euler == s.ego.euler);
}

TEST_CASE("fit configs round trip through json") {
    fit::FitConfig c;
    c.steps = 77;
    c.lr.ego = 2e-3;
    c.learn_intrinsics = true;
    c.hyper.beta_rgb = 2.5;
    c.seed = 12345678901234ull;
    const json j = to_json(c);
    const fit::FitConfig back = fit_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.steps == 77);
    CHECK(back.seed == c.seed);
    CHECK(back.hyper.beta_rgb == 2.5);
    CHECK(back.learn_intrinsics);
}

TEST_CASE("partial fit configs keep defaults") {
    const fit::FitConfig c = fit_config_from_json(json::parse(R"({"schema": "dmk.fit_config/1", "steps": 5, "lr": {"depth": 0.5}})"));
    const fit::FitConfig d;
    CHECK(c.steps == 5);
    CHECK(c.lr.depth == 0.5);
    CHECK(c.lr.ego == d.lr.ego);
    CHECK(c.hyper.alpha_mot == d.hyper.alpha_mot);
}

TEST_CASE("json errors name the offending field") {
    json spec = to_json(synth::ego_motion_scene(1));
    spec["width"] = "wide";
    CHECK(error_path([&] { scene_spec_from_json(spec); }) == "width");

    spec = to_json(synth::dynamic_scene(1));
    spec["objects"][0]["rect"][2] = -4;
    CHECK(error_path([&] { scene_spec_from_json(spec); }).rfind("objects[0]", 0) == 0);

    spec = to_json(synth::ego_motion_scene(1));
    spec["intrinsics"]["fx"] = -1.0;
    CHECK(error_path([&] { scene_spec_from_json(spec); }) == "intrinsics.fx");

    spec = to_json(synth::ego_motion_scene(1));
    spec["colour"] = 3;
    CHECK(error_path([&] { scene_spec_from_json(spec); }) == "colour");

    CHECK(error_path([&] { fit_config_from_json(json::parse(R"({"schema": "dmk.fit_config/1", "lr": {"depth": -1}})")); }) == "lr.depth");
    CHECK(error_path([&] { fit_config_from_json(json::parse(R"({"schema": "dmk.fit_config/1", "steps": 0})")); }) == "steps");
    CHECK(error_path([&] {
              fit_config_from_json(json::parse(R"({"schema": "dmk.fit_config/1", "hyper": {"alpha_rgb": -2}})"));
          }) == "hyper.alpha_rgb");
    CHECK(error_path([&] { fit_config_from_json(json::parse(R"({"steps": 3})")); }) == "schema");
    CHECK(error_path([&] { fit_config_from_json(json::parse(R"({"schema": "dmk.fit_config/9"})")); }) == "schema");
    CHECK(error_path([&] { parse_json("{", "broken.json"); }) == "broken.json");
}

TEST_CASE("loss traces round trip") {
    std::vector<fit::TraceEntry> t{{0, {{"photo_l1", 0.5}, {"total", 0.7}}}, {10, {{"photo_l1", 0.25}, {"total", 0.3}}}};
    const json j = trace_to_json(t);
    CHECK(j["schema"] == "dmk.loss_trace/1");
    const auto back = trace_from_json(j);
    REQUIRE(back.size() == 2);
    CHECK(back[1].step == 10);
    CHECK(back[1].values == t[1].values);
    CHECK(back[1].total() == 0.3);
}

TEST_CASE("metrics flatten to one csv row") {
    metrics::DepthMetrics d;
    d.abs_rel = 0.5;
    d.count = 3;
    metrics::MotionMetrics m;
    const json j = metrics_to_json(d, m);
    CHECK(j["schema"] == "dmk.metrics/1");
    CHECK(j["abs_rel"] == 0.5);
    CHECK(j["depth_count"] == 3);
    const std::string csv = metrics_csv(j);
    const auto nl = csv.find('\n');
    REQUIRE(nl != std::string::npos);
    CHECK(csv.find("abs_rel") < nl);
    CHECK(csv.find("schema") == std::string::npos);
    CHECK(csv.back() == '\n');
}
