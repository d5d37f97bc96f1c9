#include "ddcm/infer.hpp"

#include <cmath>

#include "ddcm/error.hpp"

namespace ddcm {

namespace {

std::vector<int> axis_origins(int extent, int window, int stride) {
    std::vector<int> v;
    for (int o = 0;; o += stride) {
        if (o + window >= extent) {
            v.push_back(extent - window);
            break;
        }
        v.push_back(o);
    }
    return v;
}

// reverse rows (flip) and/or columns (mirror) of a (C,h,w) block
std::vector<double> transform_chw(const std::vector<double>& x, int c, int h, int w, bool flip,
                                  bool mirror) {
    std::vector<double> out(x.size());
    for (int ch = 0; ch < c; ++ch) {
        const double* src = x.data() + static_cast<std::size_t>(ch) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < h; ++y) {
            const int sy = flip ? h - 1 - y : y;
            for (int xx = 0; xx < w; ++xx) {
                const int sx = mirror ? w - 1 - xx : xx;
                dst[static_cast<std::size_t>(y) * w + xx] =
                    src[static_cast<std::size_t>(sy) * w + sx];
            }
        }
    }
    return out;
}

} // namespace

TileGrid TileGrid::make(int height, int width, int window, double overlap) {
    check(window >= 1, "tile grid: window must be >= 1, got ", window);
    check(overlap >= 0.0 && overlap < 1.0, "tile grid: overlap must be in [0,1), got ", overlap);
    check(height >= window && width >= window, "tile grid: scene ", height, "x", width,
          " is smaller than the window ", window, "; pad the scene first");
    TileGrid g;
    g.window = window;
    g.stride = std::max(1, static_cast<int>(std::lround(window * (1.0 - overlap))));
    const auto ys = axis_origins(height, window, g.stride);
    const auto xs = axis_origins(width, window, g.stride);
    for (int y : ys)
        for (int x : xs) g.origins.emplace_back(y, x);
    return g;
}

std::vector<double> tta_predict(const TileModel& model, const std::vector<double>& window, int h,
                                int w) {
    check(static_cast<std::size_t>(model.bands) * h * w == window.size(),
          "tta_predict: window size mismatch");
    std::vector<double> acc(static_cast<std::size_t>(model.num_classes) * h * w, 0.0);
    for (int variant = 0; variant < 4; ++variant) {
        const bool flip = variant & 1;
        const bool mirror = variant & 2;
        const auto input = transform_chw(window, model.bands, h, w, flip, mirror);
        auto probs = model.run(input, h, w);
        check(probs.size() == acc.size(), "tta_predict: model returned ", probs.size(),
              " values, expected ", acc.size());
        // the transforms are involutions, so applying them again inverts
        const auto restored = transform_chw(probs, model.num_classes, h, w, flip, mirror);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += restored[i];
    }
    for (auto& v : acc) v *= 0.25;
    return acc;
}

TileModel tta_wrap(const TileModel& model) {
    TileModel wrapped;
    wrapped.bands = model.bands;
    wrapped.num_classes = model.num_classes;
    wrapped.run = [model](const std::vector<double>& window, int h, int w) {
        return tta_predict(model, window, h, w);
    };
    return wrapped;
}

StitchResult stitch(const LabeledRaster& scene, const TileModel& model, const TileGrid& grid) {
    check(scene.bands == model.bands, "stitch: scene has ", scene.bands, " bands, model expects ",
          model.bands);
    check(scene.height >= grid.window && scene.width >= grid.window, "stitch: scene ",
          scene.height, "x", scene.width, " is smaller than the window ", grid.window,
          "; pad the scene first");
    const int K = model.num_classes;
    const int H = scene.height, W = scene.width, s = grid.window;
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    StitchResult out;
    out.num_classes = K;
    out.height = H;
    out.width = W;
    out.probs.assign(hw * K, 0.0);
    std::vector<std::int64_t> cover(hw, 0);

    std::vector<double> window(static_cast<std::size_t>(scene.bands) * s * s);
    for (const auto& [oy, ox] : grid.origins) {
        for (int b = 0; b < scene.bands; ++b)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    window[(static_cast<std::size_t>(b) * s + y) * s + x] =
                        scene.at(b, oy + y, ox + x);
        const auto probs = model.run(window, s, s);
        check(probs.size() == static_cast<std::size_t>(K) * s * s,
              "stitch: model returned ", probs.size(), " values, expected ",
              static_cast<std::size_t>(K) * s * s);
        // weight-1 running average: exact for constant predictions
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const std::size_t pix = static_cast<std::size_t>(oy + y) * W + ox + x;
                const double n = static_cast<double>(++cover[pix]);
                for (int k = 0; k < K; ++k) {
                    double& m = out.probs[static_cast<std::size_t>(k) * hw + pix];
                    m += (probs[(static_cast<std::size_t>(k) * s + y) * s + x] - m) / n;
                }
            }
        }
    }

    out.classes.resize(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        check(cover[i] > 0, "stitch: pixel ", i, " not covered by any window");
        int best = 0;
        double bv = -1.0;
        for (int k = 0; k < K; ++k) {
            const double p = out.probs[static_cast<std::size_t>(k) * hw + i];
            if (p > bv) {
                bv = p;
                best = k;
            }
        }
        out.classes[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

} // namespace ddcm
