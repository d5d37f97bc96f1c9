#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ddcm/checkpoint.hpp"
#include "ddcm/config.hpp"
#include "ddcm/infer.hpp"
#include "ddcm/metrics.hpp"

namespace ddcm {

struct TrainResult {
    std::vector<JointLossSample> samples;
    std::string run_dir;
};

// Run layout under run_dir: manifest.cfg (resolved config plus derived
// class frequencies), logs/loss.log, checkpoints/ (per-epoch, best on the
// validation scene when one is configured, and final), predictions/.
// Deterministic for a fixed manifest: two runs produce byte-identical
// logs and checkpoints.
TrainResult train_run(const RunConfig& cfg, std::ostream* progress = nullptr);

// Eval-mode window model over the full-class softmax.
TileModel make_tile_model(JtDdcmNet& net);

MetricsReport evaluate_scene(JtDdcmNet& net, const LabeledRaster& scene, int window,
                             double overlap, bool tta);

StitchResult infer_scene(JtDdcmNet& net, const LabeledRaster& scene, int window, double overlap,
                         bool tta);

} // namespace ddcm
