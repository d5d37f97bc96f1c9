#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddcm/error.hpp"

#include "ddcm/rng.hpp"

namespace ddcm {

// Multi-band raster with values in [0,1] plus an optional per-pixel class
// map. Band 0 is the elevation-gradient band, band 1 the hillshade band
// in the synthetic scenes; the container itself is semantics-agnostic.
struct LabeledRaster {
    int bands = 0;
    int height = 0;
    int width = 0;
    int num_classes = 4;
    std::vector<std::string> band_names; // metadata only, not serialized
    std::vector<double> data;            // (bands, H, W) row-major
    std::vector<std::uint8_t> labels;    // (H, W); empty when absent

    bool has_labels() const { return !labels.empty(); }
    double at(int b, int y, int x) const {
        return data[(static_cast<std::size_t>(b) * height + y) * width + x];
    }
    double& at(int b, int y, int x) {
        return data[(static_cast<std::size_t>(b) * height + y) * width + x];
    }
    std::uint8_t label(int y, int x) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
};

// Binary raster container, little-endian:
//   bytes 0-3   magic "DDCM"
//   bytes 4-5   version (u16, currently 1)
//   bytes 6-7   band count (u16)
//   bytes 8-11  height (u32)
//   bytes 12-15 width (u32)
//   byte  16    label plane present (u8, 0 or 1)
//   then bands*H*W f64 band values (band-major, rows within a band),
//   then H*W u8 labels when the flag is set.
void write_raster(const std::string& path, const LabeledRaster& raster);
LabeledRaster read_raster(const std::string& path);

// Class-map export: P6 PPM, background black, road classes in fixed
// distinct colors.
void write_class_ppm(const std::string& path, const std::vector<std::uint8_t>& labels, int height,
                     int width);

struct Patch {
    int bands = 0, height = 0, width = 0;
    std::vector<double> data;          // (bands,h,w)
    std::vector<std::uint8_t> labels;  // (h,w); may be empty
};

// flip reverses rows (vertical axis), mirror reverses columns; bands and
// labels move together.
Patch augment(const Patch& p, bool flip, bool mirror);

struct PatchBatch {
    int count = 0, bands = 0, size = 0, num_classes = 0;
    std::vector<double> inputs;       // (N,bands,s,s)
    std::vector<std::uint8_t> seg;    // (N,s,s)
    std::vector<double> binary;       // (N,1,s,s): 1 iff class in {1..K-1}
    std::vector<double> presence;     // (N,K-1): 1 iff the class occurs
};

// Uniformly random patch origins; each patch independently flipped and
// mirrored with probability 1/2. Draw order per patch: y, x, flip,
// mirror. The raster must carry labels.
PatchBatch sample_patches(const LabeledRaster& raster, int count, int size, RngState& rng);

struct SynthSpec {
    int height = 1024;
    int width = 1024;
    int num_classes = 4;
    std::array<int, 3> roads_per_class{6, 6, 6};
    // stroke widths in pixels: Road1 wide, Road2 medium, Road3 narrow
    std::array<std::pair<double, double>, 3> width_ranges{
        {{10.0, 16.0}, {6.0, 9.0}, {3.5, 6.0}}};
    double noise = 0.015;
};

struct Stroke {
    int cls = 0;
    double width = 0.0;
    std::vector<std::pair<double, double>> points; // (y,x) polyline vertices
};

struct SynthScene {
    LabeledRaster raster;
    std::vector<Stroke> strokes; // generation record, for audits
};

// Procedural stand-in for real acquisitions: smoothed-noise terrain gives
// an elevation surface; band 0 is its normalized gradient magnitude, band
// 1 a directional hillshade. Roads are random polylines rasterized with
// class-specific widths and band intensities, labels painted alongside
// (class 1 drawn first, later classes overwrite).
SynthScene synth_scene(const SynthSpec& spec, RngState& rng);

} // namespace ddcm
