#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ddcm/data.hpp"

namespace ddcm {

// Sliding-window cover of a scene. stride = round(window*(1-overlap));
// the final row/column is clamped to the border, so every pixel is
// covered and no padding is introduced.
struct TileGrid {
    int window = 0;
    int stride = 0;
    std::vector<std::pair<int, int>> origins; // (y,x)

    static TileGrid make(int height, int width, int window, double overlap = 0.6);
};

// A window-level predictor: input (bands,h,w) row-major, output (K,h,w)
// class probabilities.
struct TileModel {
    int bands = 0;
    int num_classes = 0;
    std::function<std::vector<double>(const std::vector<double>&, int h, int w)> run;
};

// Averages the model over {identity, flip, mirror, flip+mirror}, mapping
// each output back through the inverse transform.
std::vector<double> tta_predict(const TileModel& model, const std::vector<double>& window, int h,
                                int w);
TileModel tta_wrap(const TileModel& model);

struct StitchResult {
    int num_classes = 0, height = 0, width = 0;
    std::vector<double> probs;          // (K,H,W), per-pixel mean over covering windows
    std::vector<std::uint8_t> classes;  // argmax, ties to the lowest id
};

StitchResult stitch(const LabeledRaster& scene, const TileModel& model, const TileGrid& grid);

} // namespace ddcm
