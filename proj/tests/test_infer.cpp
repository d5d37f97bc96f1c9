#include <doctest.h>

#include <cmath>

#include "ddcm/error.hpp"
#include "ddcm/infer.hpp"
#include "ddcm/metrics.hpp"

using namespace ddcm;

namespace {

LabeledRaster noise_scene(int h, int w, std::uint64_t seed, int k = 3) {
    LabeledRaster r;
    r.bands = 2;
    r.height = h;
    r.width = w;
    r.num_classes = k;
    RngState rng(seed);
    r.data.resize(static_cast<std::size_t>(2) * h * w);
    for (auto& v : r.data) v = rng.uniform();
    r.labels.resize(static_cast<std::size_t>(h) * w);
    for (auto& l : r.labels) l = static_cast<std::uint8_t>(rng.next_below(k));
    return r;
}

TileModel constant_model(int bands, int k, std::vector<double> probs) {
    TileModel m;
    m.bands = bands;
    m.num_classes = k;
    m.run = [k, probs](const std::vector<double>&, int h, int w) {
        std::vector<double> out(static_cast<std::size_t>(k) * h * w);
        for (int c = 0; c < k; ++c)
            std::fill(out.begin() + static_cast<std::size_t>(c) * h * w,
                      out.begin() + static_cast<std::size_t>(c + 1) * h * w, probs[c]);
        return out;
    };
    return m;
}

// pointwise model: class scores depend only on the pixel's band-0 value,
// so it commutes with flips and mirrors
TileModel pointwise_model(int bands, int k) {
    TileModel m;
    m.bands = bands;
    m.num_classes = k;
    m.run = [bands, k](const std::vector<double>& win, int h, int w) {
        (void)bands;
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        std::vector<double> out(k * hw);
        for (std::size_t i = 0; i < hw; ++i) {
            double denom = 0.0;
            for (int c = 0; c < k; ++c) denom += std::exp(std::sin(win[i] * (c + 1)));
            for (int c = 0; c < k; ++c)
                out[c * hw + i] = std::exp(std::sin(win[i] * (c + 1))) / denom;
        }
        return out;
    };
    return m;
}

} // namespace

TEST_CASE("tile grid: 60 percent overlap on 256 windows gives stride 102") {
    auto g = TileGrid::make(500, 500, 256, 0.6);
    CHECK(g.stride == 102);
    // origins clamp the final window to the border
    std::vector<int> ys;
    for (const auto& [y, x] : g.origins)
        if (x == 0) ys.push_back(y);
    CHECK(ys == std::vector<int>{0, 102, 204, 244});

    // full coverage
    std::vector<int> cover(500, 0);
    for (int y : ys)
        for (int i = 0; i < 256; ++i) cover[y + i]++;
    for (int i = 0; i < 500; ++i) CHECK(cover[i] > 0);
}

TEST_CASE("tile grid rejects scenes smaller than the window") {
    CHECK_THROWS_WITH_AS(TileGrid::make(100, 300, 256, 0.6), doctest::Contains("pad"), Error);
}

TEST_CASE("stitching a constant model reproduces the constant map exactly") {
    auto scene = noise_scene(200, 150, 81);
    auto model = constant_model(2, 3, {0.2, 0.5, 0.3});
    auto grid = TileGrid::make(200, 150, 64, 0.6);
    auto out = stitch(scene, model, grid);
    const std::size_t hw = 200 * 150;
    for (std::size_t i = 0; i < hw; ++i) {
        CHECK(out.probs[i] == 0.2);
        CHECK(out.probs[hw + i] == 0.5);
        CHECK(out.probs[2 * hw + i] == 0.3);
        CHECK(out.classes[i] == 1);
    }
}

TEST_CASE("stitched probabilities sum to one per pixel") {
    auto scene = noise_scene(160, 160, 82);
    auto model = tta_wrap(pointwise_model(2, 4));
    model.num_classes = 4;
    auto grid = TileGrid::make(160, 160, 64, 0.6);
    auto out = stitch(scene, model, grid);
    const std::size_t hw = 160 * 160;
    for (std::size_t i = 0; i < hw; ++i) {
        double s = 0.0;
        for (int c = 0; c < 4; ++c) s += out.probs[c * hw + i];
        CHECK(std::fabs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("degenerate grid: one window equals the single-window prediction") {
    auto scene = noise_scene(64, 64, 83);
    auto model = pointwise_model(2, 3);
    auto grid = TileGrid::make(64, 64, 64, 0.6);
    CHECK(grid.origins.size() == 1);
    auto out = stitch(scene, model, grid);

    std::vector<double> window(scene.data);
    auto direct = model.run(window, 64, 64);
    const std::size_t hw = 64 * 64;
    for (std::size_t i = 0; i < hw; ++i) {
        int best = 0;
        double bv = direct[i];
        for (int c = 1; c < 3; ++c)
            if (direct[c * hw + i] > bv) {
                bv = direct[c * hw + i];
                best = c;
            }
        CHECK(out.classes[i] == best);
    }
}

TEST_CASE("TTA equals the plain pass for an equivariant model") {
    auto scene = noise_scene(64, 64, 84);
    auto model = pointwise_model(2, 3);
    std::vector<double> window(scene.data);
    auto plain = model.run(window, 64, 64);
    auto tta = tta_predict(model, window, 64, 64);
    REQUIRE(plain.size() == tta.size());
    for (std::size_t i = 0; i < plain.size(); ++i)
        CHECK(std::fabs(plain[i] - tta[i]) < 1e-9);
}

TEST_CASE("TTA of a constant model is the constant output") {
    auto model = constant_model(1, 2, {0.7, 0.3});
    std::vector<double> window(16, 0.0);
    auto out = tta_predict(model, window, 4, 4);
    for (int i = 0; i < 16; ++i) {
        CHECK(out[i] == 0.7);
        CHECK(out[16 + i] == 0.3);
    }
}

TEST_CASE("confusion counts and perfect-match metrics") {
    std::vector<std::uint8_t> ref{0, 1, 2, 1, 0};
    auto cm = confusion(ref, ref, 3);
    CHECK(cm.total() == 5);
    CHECK(cm.at(0, 0) == 2);
    CHECK(cm.at(1, 1) == 2);
    auto rep = report(cm);
    CHECK(rep.oa == 1.0);
    CHECK(rep.mf1 == 1.0);
    CHECK(rep.miou == 1.0);

    std::vector<std::uint8_t> shorter{0, 1};
    CHECK_THROWS_AS(confusion(shorter, ref, 3), Error);
}

TEST_CASE("two-class worked example: F1 = 2/3, IoU = 1/2") {
    // class 1: TP=3, FP=1, FN=2, TN=4
    ConfusionMatrix cm(2);
    cm.add(1, 1, 3);
    cm.add(0, 1, 1);
    cm.add(1, 0, 2);
    cm.add(0, 0, 4);
    auto rep = report(cm);
    CHECK(rep.f1[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rep.iou[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("IoU = F1/(2-F1) on random confusion matrices") {
    RngState rng(85);
    for (int trial = 0; trial < 100; ++trial) {
        ConfusionMatrix cm(4);
        for (int r = 0; r < 4; ++r)
            for (int p = 0; p < 4; ++p) cm.add(r, p, static_cast<std::int64_t>(rng.next_below(50)));
        if (cm.total() == 0) continue;
        auto rep = report(cm);
        for (int c = 0; c < 4; ++c) {
            if (!rep.defined[c]) continue;
            CHECK(std::fabs(rep.iou[c] - rep.f1[c] / (2.0 - rep.f1[c])) < 1e-12);
        }
    }
}

TEST_CASE("metrics match an independent per-formula evaluation") {
    RngState rng(86);
    ConfusionMatrix cm(4);
    for (int r = 0; r < 4; ++r)
        for (int p = 0; p < 4; ++p) cm.add(r, p, static_cast<std::int64_t>(rng.next_below(100)) + 1);
    auto rep = report(cm);

    double trace = 0, total = 0;
    for (int r = 0; r < 4; ++r)
        for (int p = 0; p < 4; ++p) {
            total += static_cast<double>(cm.at(r, p));
            if (r == p) trace += static_cast<double>(cm.at(r, p));
        }
    CHECK(std::fabs(rep.oa - trace / total) < 1e-12);
    double mf1 = 0, miou = 0;
    for (int c = 0; c < 4; ++c) {
        double tp = static_cast<double>(cm.at(c, c)), row = 0, col = 0;
        for (int j = 0; j < 4; ++j) {
            row += static_cast<double>(cm.at(c, j));
            col += static_cast<double>(cm.at(j, c));
        }
        mf1 += 2 * tp / (row + col);
        miou += tp / (row + col - tp);
    }
    CHECK(std::fabs(rep.mf1 - mf1 / 4) < 1e-12);
    CHECK(std::fabs(rep.miou - miou / 4) < 1e-12);
}

TEST_CASE("classes absent from both sides are flagged and excluded") {
    ConfusionMatrix cm(3);
    cm.add(0, 0, 5);
    cm.add(1, 0, 1);
    auto rep = report(cm);
    CHECK_FALSE(rep.defined[2]);
    CHECK(std::isnan(rep.f1[2]));
    CHECK(rep.defined[0]);
    CHECK(rep.defined[1]); // in reference only, still defined (F1 = 0)
    CHECK(rep.f1[1] == 0.0);
}

TEST_CASE("ignore id skips reference pixels") {
    std::vector<std::uint8_t> ref{0, 2, 1};
    std::vector<std::uint8_t> pred{0, 0, 1};
    auto cm = confusion(pred, ref, 3, 2);
    CHECK(cm.total() == 2);
    CHECK(report(cm).oa == 1.0);
}
