#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ddcm/data.hpp"
#include "ddcm/error.hpp"
#include "test_util.hpp"

using namespace ddcm;
namespace fs = std::filesystem;

namespace {

LabeledRaster tiny_raster(bool with_labels = true) {
    LabeledRaster r;
    r.bands = 2;
    r.height = 64;
    r.width = 64;
    RngState rng(61);
    r.data.resize(2 * 64 * 64);
    for (auto& v : r.data) v = rng.uniform();
    if (with_labels) {
        r.labels.assign(64 * 64, 0);
        for (int i = 0; i < 64; ++i) r.labels[200 + i] = static_cast<std::uint8_t>(1 + i % 3);
    }
    return r;
}

std::string tmp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

double dist_point_segment(double py, double px, double ay, double ax, double by, double bx) {
    const double vy = by - ay, vx = bx - ax;
    const double len2 = vy * vy + vx * vx;
    double t = len2 > 0 ? ((py - ay) * vy + (px - ax) * vx) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(py - (ay + t * vy), px - (ax + t * vx));
}

} // namespace

TEST_CASE("raster container round-trips bit-exactly") {
    const auto path = tmp_path("ddcm_test_raster.ddcm");
    auto r = tiny_raster();
    write_raster(path, r);
    auto back = read_raster(path);
    CHECK(back.bands == r.bands);
    CHECK(back.height == r.height);
    CHECK(back.width == r.width);
    CHECK(back.data == r.data);
    CHECK(back.labels == r.labels);

    // documented size arithmetic: header 17 + bands*H*W*8 + labels
    CHECK(fs::file_size(path) == 17u + 2u * 64 * 64 * 8 + 64 * 64);

    auto unlabeled = tiny_raster(false);
    write_raster(path, unlabeled);
    CHECK(fs::file_size(path) == 17u + 2u * 64 * 64 * 8);
    CHECK_FALSE(read_raster(path).has_labels());
    fs::remove(path);
}

TEST_CASE("raster reader reports truncation with expected vs found bytes") {
    const auto path = tmp_path("ddcm_test_trunc.ddcm");
    write_raster(path, tiny_raster());
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 100);
    const auto msg = ddcm_test::error_message([&] { read_raster(path); });
    CHECK(msg.find("expected") != std::string::npos);
    CHECK(msg.find("found") != std::string::npos);

    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "NOPExxxxxxxxxxxxxxxxx";
    bad.close();
    CHECK_THROWS_WITH_AS(read_raster(path), doctest::Contains("magic"), Error);
    fs::remove(path);
}

TEST_CASE("augment: flips are involutions and mirror reverses columns") {
    Patch p;
    p.bands = 1;
    p.height = 2;
    p.width = 2;
    p.data = {1, 2, 3, 4};
    p.labels = {0, 1, 2, 3};

    auto m = augment(p, false, true);
    CHECK(m.data == std::vector<double>{2, 1, 4, 3});
    CHECK(m.labels == std::vector<std::uint8_t>{1, 0, 3, 2});

    auto ff = augment(augment(p, true, false), true, false);
    CHECK(ff.data == p.data);
    CHECK(ff.labels == p.labels);
}

TEST_CASE("augment flags compose like the Klein four-group") {
    RngState rng(62);
    Patch p;
    p.bands = 2;
    p.height = 4;
    p.width = 6;
    p.data.resize(2 * 4 * 6);
    for (auto& v : p.data) v = rng.uniform();
    p.labels.resize(4 * 6);
    for (auto& l : p.labels) l = static_cast<std::uint8_t>(rng.next_below(4));

    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            const bool f1 = a & 1, m1 = a & 2, f2 = b & 1, m2 = b & 2;
            auto two_step = augment(augment(p, f1, m1), f2, m2);
            auto direct = augment(p, f1 != f2, m1 != m2);
            CHECK(two_step.data == direct.data);
            CHECK(two_step.labels == direct.labels);
        }
    }
}

TEST_CASE("augment keeps a tracked marker aligned between bands and labels") {
    Patch p;
    p.bands = 1;
    p.height = 5;
    p.width = 7;
    p.data.assign(35, 0.0);
    p.labels.assign(35, 0);
    p.data[2 * 7 + 6] = 1.0; // marker at (2,6)
    p.labels[2 * 7 + 6] = 3;

    for (int v = 0; v < 4; ++v) {
        auto a = augment(p, v & 1, v & 2);
        for (int i = 0; i < 35; ++i)
            CHECK((a.data[i] == 1.0) == (a.labels[i] == 3));
    }
}

TEST_CASE("sample_patches produces contracted shapes and derived targets") {
    auto r = tiny_raster();
    r.num_classes = 4;
    RngState rng(63);
    auto batch = sample_patches(r, 5, 32, rng);
    CHECK(batch.count == 5);
    CHECK(batch.inputs.size() == 5u * 2 * 32 * 32);
    CHECK(batch.seg.size() == 5u * 32 * 32);
    CHECK(batch.binary.size() == 5u * 32 * 32);
    CHECK(batch.presence.size() == 5u * 3);

    for (double v : batch.inputs) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // binary and presence are pure functions of the seg target
    for (int n = 0; n < 5; ++n) {
        std::vector<double> want_presence(3, 0.0);
        for (int i = 0; i < 32 * 32; ++i) {
            const auto c = batch.seg[n * 32 * 32 + i];
            CHECK(batch.binary[n * 32 * 32 + i] == (c != 0 ? 1.0 : 0.0));
            if (c != 0) want_presence[c - 1] = 1.0;
        }
        for (int c = 0; c < 3; ++c) CHECK(batch.presence[n * 3 + c] == want_presence[c]);
    }
}

TEST_CASE("sample_patches: all-background raster yields all-zero targets") {
    auto r = tiny_raster();
    std::fill(r.labels.begin(), r.labels.end(), 0);
    RngState rng(64);
    auto batch = sample_patches(r, 3, 32, rng);
    for (double v : batch.binary) CHECK(v == 0.0);
    for (double v : batch.presence) CHECK(v == 0.0);
}

TEST_CASE("sample_patches replays exactly under a fixed seed and validates size") {
    auto r = tiny_raster();
    RngState a(65), b(65);
    auto b1 = sample_patches(r, 4, 32, a);
    auto b2 = sample_patches(r, 4, 32, b);
    CHECK(b1.inputs == b2.inputs);
    CHECK(b1.seg == b2.seg);

    RngState c(66);
    CHECK_THROWS_WITH_AS(sample_patches(r, 1, 128, c), doctest::Contains("exceeds"), Error);
    CHECK_THROWS_WITH_AS(sample_patches(r, 1, 20, c), doctest::Contains("multiple of 32"),
                         Error);
}

TEST_CASE("synth_scene: zero roads leave pure background") {
    SynthSpec spec;
    spec.height = 256;
    spec.width = 256;
    spec.roads_per_class = {0, 0, 0};
    RngState rng(67);
    auto scene = synth_scene(spec, rng);
    for (auto l : scene.raster.labels) CHECK(l == 0);
    CHECK(scene.strokes.empty());
    for (double v : scene.raster.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("synth_scene: every road pixel lies within a stroke footprint") {
    SynthSpec spec;
    spec.height = 256;
    spec.width = 256;
    spec.roads_per_class = {2, 2, 2};
    RngState rng(68);
    auto scene = synth_scene(spec, rng);

    const auto& r = scene.raster;
    int road_pixels = 0;
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            const int cls = r.label(y, x);
            if (cls == 0) continue;
            ++road_pixels;
            double best = 1e18;
            for (const auto& s : scene.strokes) {
                if (s.cls < cls) continue; // later classes overwrite earlier ones
                for (std::size_t v = 0; v + 1 < s.points.size(); ++v) {
                    const double d = dist_point_segment(y, x, s.points[v].first,
                                                        s.points[v].second,
                                                        s.points[v + 1].first,
                                                        s.points[v + 1].second) -
                                     s.width / 2.0;
                    best = std::min(best, d);
                }
            }
            CHECK(best <= 0.8); // rasterization slack
        }
    }
    CHECK(road_pixels > 0);
}

TEST_CASE("synth_scene replays identical class frequencies under one seed") {
    SynthSpec spec;
    spec.height = 256;
    spec.width = 256;
    auto freqs = [&](std::uint64_t seed) {
        RngState rng(seed);
        auto scene = synth_scene(spec, rng);
        std::vector<int> f(4, 0);
        for (auto l : scene.raster.labels) f[l]++;
        return f;
    };
    CHECK(freqs(69) == freqs(69));
    CHECK(freqs(69) != freqs(70));

    SynthSpec small;
    small.height = 128;
    RngState rng(71);
    CHECK_THROWS_AS(synth_scene(small, rng), Error);
}

TEST_CASE("class-map PPM uses the documented header and palette") {
    const auto path = tmp_path("ddcm_test_vis.ppm");
    std::vector<std::uint8_t> labels{0, 1, 2, 3};
    write_class_ppm(path, labels, 2, 2);

    std::ifstream f(path, std::ios::binary);
    std::string magic, dims;
    std::getline(f, magic);
    CHECK(magic == "P6");
    std::getline(f, dims);
    CHECK(dims == "2 2");
    std::getline(f, dims);
    CHECK(dims == "255");
    unsigned char px[12];
    f.read(reinterpret_cast<char*>(px), 12);
    CHECK(px[0] == 0); // background is black
    CHECK(px[1] == 0);
    CHECK(px[2] == 0);
    CHECK(px[3] != 0); // roads are not black
    fs::remove(path);
}
