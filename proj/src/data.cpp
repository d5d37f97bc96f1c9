#include "ddcm/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ddcm/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "raster container assumes a little-endian host");

namespace ddcm {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'C', 'M'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

const std::array<std::array<std::uint8_t, 3>, 8> kPalette{{
    {0, 0, 0},       // background
    {230, 70, 70},   // Road1
    {70, 200, 90},   // Road2
    {80, 120, 235},  // Road3
    {240, 200, 60},
    {180, 80, 220},
    {60, 220, 220},
    {250, 250, 250},
}};

} // namespace

void write_raster(const std::string& path, const LabeledRaster& raster) {
    check(raster.bands > 0 && raster.height > 0 && raster.width > 0,
          "write_raster: empty raster");
    const std::size_t hw = static_cast<std::size_t>(raster.height) * raster.width;
    check(raster.data.size() == hw * raster.bands, "write_raster: band data size mismatch");
    check(raster.labels.empty() || raster.labels.size() == hw,
          "write_raster: label plane size mismatch");

    std::string header;
    header.append(kMagic, 4);
    put_u16(header, kVersion);
    put_u16(header, static_cast<std::uint16_t>(raster.bands));
    put_u32(header, static_cast<std::uint32_t>(raster.height));
    put_u32(header, static_cast<std::uint32_t>(raster.width));
    header.push_back(raster.has_labels() ? 1 : 0);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "write_raster: cannot open ", path);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.write(reinterpret_cast<const char*>(raster.data.data()),
            static_cast<std::streamsize>(raster.data.size() * sizeof(double)));
    if (raster.has_labels())
        f.write(reinterpret_cast<const char*>(raster.labels.data()),
                static_cast<std::streamsize>(raster.labels.size()));
    check(f.good(), "write_raster: write failed for ", path);
}

LabeledRaster read_raster(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_raster: cannot open ", path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    check(bytes.size() >= 17, "read_raster: ", path, ": truncated header, expected 17 bytes, found ",
          bytes.size());
    check(std::memcmp(bytes.data(), kMagic, 4) == 0, "read_raster: ", path,
          ": bad magic at byte 0, expected \"DDCM\"");
    std::uint16_t version = 0, bands = 0;
    std::uint32_t h = 0, w = 0;
    std::memcpy(&version, bytes.data() + 4, 2);
    std::memcpy(&bands, bytes.data() + 6, 2);
    std::memcpy(&h, bytes.data() + 8, 4);
    std::memcpy(&w, bytes.data() + 12, 4);
    check(version == kVersion, "read_raster: ", path, ": unsupported version ", version,
          " at byte 4");
    check(bands > 0 && h > 0 && w > 0, "read_raster: ", path, ": degenerate shape ", bands, "x",
          h, "x", w, " in header");
    const std::uint8_t flag = static_cast<std::uint8_t>(bytes[16]);
    check(flag <= 1, "read_raster: ", path, ": label flag must be 0 or 1 at byte 16, got ",
          int(flag));

    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t band_bytes = hw * bands * sizeof(double);
    const std::size_t expected = 17 + band_bytes + (flag ? hw : 0);
    check(bytes.size() == expected, "read_raster: ", path, ": expected ", expected,
          " bytes, found ", bytes.size());

    LabeledRaster r;
    r.bands = bands;
    r.height = static_cast<int>(h);
    r.width = static_cast<int>(w);
    r.data.resize(hw * bands);
    std::memcpy(r.data.data(), bytes.data() + 17, band_bytes);
    for (std::size_t i = 0; i < r.data.size(); ++i)
        check(std::isfinite(r.data[i]) && r.data[i] >= 0.0 && r.data[i] <= 1.0,
              "read_raster: ", path, ": band value ", r.data[i], " outside [0,1] at element ", i);
    if (flag) {
        r.labels.resize(hw);
        std::memcpy(r.labels.data(), bytes.data() + 17 + band_bytes, hw);
    }
    return r;
}

void write_class_ppm(const std::string& path, const std::vector<std::uint8_t>& labels, int height,
                     int width) {
    check(labels.size() == static_cast<std::size_t>(height) * width,
          "write_class_ppm: label plane size mismatch");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "write_class_ppm: cannot open ", path);
    f << "P6\n" << width << " " << height << "\n255\n";
    std::string row;
    row.reserve(static_cast<std::size_t>(width) * 3);
    for (int y = 0; y < height; ++y) {
        row.clear();
        for (int x = 0; x < width; ++x) {
            const std::uint8_t c = labels[static_cast<std::size_t>(y) * width + x];
            check(c < kPalette.size(), "write_class_ppm: class id ", int(c),
                  " exceeds the fixed palette");
            row.push_back(static_cast<char>(kPalette[c][0]));
            row.push_back(static_cast<char>(kPalette[c][1]));
            row.push_back(static_cast<char>(kPalette[c][2]));
        }
        f.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    check(f.good(), "write_class_ppm: write failed for ", path);
}

Patch augment(const Patch& p, bool flip, bool mirror) {
    Patch out;
    out.bands = p.bands;
    out.height = p.height;
    out.width = p.width;
    out.data.resize(p.data.size());
    out.labels.resize(p.labels.size());
    for (int b = 0; b < p.bands; ++b) {
        for (int y = 0; y < p.height; ++y) {
            const int sy = flip ? p.height - 1 - y : y;
            for (int x = 0; x < p.width; ++x) {
                const int sx = mirror ? p.width - 1 - x : x;
                out.data[(static_cast<std::size_t>(b) * p.height + y) * p.width + x] =
                    p.data[(static_cast<std::size_t>(b) * p.height + sy) * p.width + sx];
            }
        }
    }
    if (!p.labels.empty()) {
        for (int y = 0; y < p.height; ++y) {
            const int sy = flip ? p.height - 1 - y : y;
            for (int x = 0; x < p.width; ++x) {
                const int sx = mirror ? p.width - 1 - x : x;
                out.labels[static_cast<std::size_t>(y) * p.width + x] =
                    p.labels[static_cast<std::size_t>(sy) * p.width + sx];
            }
        }
    }
    return out;
}

PatchBatch sample_patches(const LabeledRaster& raster, int count, int size, RngState& rng) {
    check(raster.has_labels(), "sample_patches: raster carries no labels");
    check(count >= 1, "sample_patches: count must be >= 1, got ", count);
    check(size % 32 == 0, "sample_patches: patch size must be a multiple of 32, got ", size);
    check(size <= raster.height && size <= raster.width, "sample_patches: patch size ", size,
          " exceeds raster ", raster.height, "x", raster.width);

    const int K = raster.num_classes;
    PatchBatch batch;
    batch.count = count;
    batch.bands = raster.bands;
    batch.size = size;
    batch.num_classes = K;
    const std::size_t ss = static_cast<std::size_t>(size) * size;
    batch.inputs.resize(static_cast<std::size_t>(count) * raster.bands * ss);
    batch.seg.resize(static_cast<std::size_t>(count) * ss);
    batch.binary.resize(static_cast<std::size_t>(count) * ss);
    batch.presence.assign(static_cast<std::size_t>(count) * (K - 1), 0.0);

    Patch p;
    p.bands = raster.bands;
    p.height = size;
    p.width = size;
    p.data.resize(raster.bands * ss);
    p.labels.resize(ss);

    for (int n = 0; n < count; ++n) {
        const int y0 = static_cast<int>(rng.next_below(raster.height - size + 1));
        const int x0 = static_cast<int>(rng.next_below(raster.width - size + 1));
        const bool flip = rng.bernoulli();
        const bool mirror = rng.bernoulli();
        for (int b = 0; b < raster.bands; ++b)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    p.data[(static_cast<std::size_t>(b) * size + y) * size + x] =
                        raster.at(b, y0 + y, x0 + x);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                p.labels[static_cast<std::size_t>(y) * size + x] =
                    raster.label(y0 + y, x0 + x);
        Patch a = augment(p, flip, mirror);

        double* in = batch.inputs.data() + static_cast<std::size_t>(n) * raster.bands * ss;
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            check(a.data[i] >= 0.0 && a.data[i] <= 1.0, "sample_patches: input value ",
                  a.data[i], " outside [0,1]");
            in[i] = a.data[i];
        }
        std::uint8_t* seg = batch.seg.data() + static_cast<std::size_t>(n) * ss;
        double* bin = batch.binary.data() + static_cast<std::size_t>(n) * ss;
        double* pres = batch.presence.data() + static_cast<std::size_t>(n) * (K - 1);
        for (std::size_t i = 0; i < ss; ++i) {
            const std::uint8_t c = a.labels[i];
            check(c < K, "sample_patches: label ", int(c), " out of range [0,", K, ")");
            seg[i] = c;
            bin[i] = c != 0 ? 1.0 : 0.0;
            if (c != 0) pres[c - 1] = 1.0;
        }
    }
    return batch;
}

namespace {

// value-noise layer: a coarse uniform grid sampled bilinearly
std::vector<double> noise_layer(int h, int w, int cell, RngState& rng) {
    const int gh = h / cell + 2;
    const int gw = w / cell + 2;
    std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
    for (auto& v : grid) v = rng.uniform();
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const double gy = static_cast<double>(y) / cell;
        const int y0 = static_cast<int>(gy);
        const double fy = gy - y0;
        for (int x = 0; x < w; ++x) {
            const double gx = static_cast<double>(x) / cell;
            const int x0 = static_cast<int>(gx);
            const double fx = gx - x0;
            const double v00 = grid[static_cast<std::size_t>(y0) * gw + x0];
            const double v01 = grid[static_cast<std::size_t>(y0) * gw + x0 + 1];
            const double v10 = grid[static_cast<std::size_t>(y0 + 1) * gw + x0];
            const double v11 = grid[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
            out[static_cast<std::size_t>(y) * w + x] =
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

struct BandTargets {
    double gradient, hillshade;
};

// per-class band intensities in corners of band space the terrain model
// cannot reach (flat ground always shades near 0.71), keeping the road
// categories separable
constexpr BandTargets kRoadBands[3] = {{0.92, 0.08}, {0.08, 0.92}, {0.08, 0.08}};

void paint_disk(LabeledRaster& r, std::vector<std::uint8_t>& mask, double py, double px,
                double radius, std::uint8_t cls) {
    const int rr = static_cast<int>(std::ceil(radius));
    const int cy = static_cast<int>(std::lround(py));
    const int cx = static_cast<int>(std::lround(px));
    for (int dy = -rr; dy <= rr; ++dy) {
        for (int dx = -rr; dx <= rr; ++dx) {
            if (dy * dy + dx * dx > radius * radius) continue;
            const int y = cy + dy;
            const int x = cx + dx;
            if (y < 0 || y >= r.height || x < 0 || x >= r.width) continue;
            r.labels[static_cast<std::size_t>(y) * r.width + x] = cls;
            mask[static_cast<std::size_t>(y) * r.width + x] = cls;
        }
    }
}

} // namespace

SynthScene synth_scene(const SynthSpec& spec, RngState& rng) {
    check(spec.height >= 256 && spec.width >= 256, "synth_scene: scene must be at least 256x256, got ",
          spec.height, "x", spec.width);
    check(spec.num_classes == 4, "synth_scene: generator produces 4 classes, got ",
          spec.num_classes);
    const int H = spec.height, W = spec.width;
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    // terrain: two octaves of value noise
    std::vector<double> elev = noise_layer(H, W, 64, rng);
    std::vector<double> fine = noise_layer(H, W, 16, rng);
    for (std::size_t i = 0; i < hw; ++i) elev[i] += 0.35 * fine[i];

    SynthScene scene;
    LabeledRaster& r = scene.raster;
    r.bands = 2;
    r.height = H;
    r.width = W;
    r.num_classes = spec.num_classes;
    r.band_names = {"elevation_gradient", "hillshade"};
    r.data.assign(hw * 2, 0.0);
    r.labels.assign(hw, 0);

    // bands from the terrain: gradient magnitude and a fixed-light hillshade
    const double az = 315.0 * 3.14159265358979323846 / 180.0;
    const double alt = 45.0 * 3.14159265358979323846 / 180.0;
    const double lz = std::sin(alt);
    const double lx = std::cos(az) * std::cos(alt);
    const double ly = std::sin(az) * std::cos(alt);
    const double slope_scale = 40.0;
    double max_grad = 1e-12;
    std::vector<double> grad(hw);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int ym = y > 0 ? y - 1 : y, yp = y < H - 1 ? y + 1 : y;
            const int xm = x > 0 ? x - 1 : x, xp = x < W - 1 ? x + 1 : x;
            const double gy = (elev[static_cast<std::size_t>(yp) * W + x] -
                               elev[static_cast<std::size_t>(ym) * W + x]) /
                              (yp - ym);
            const double gx = (elev[static_cast<std::size_t>(y) * W + xp] -
                               elev[static_cast<std::size_t>(y) * W + xm]) /
                              (xp - xm);
            const double g = std::sqrt(gx * gx + gy * gy);
            grad[static_cast<std::size_t>(y) * W + x] = g;
            max_grad = std::max(max_grad, g);
            const double nx = -gx * slope_scale, ny = -gy * slope_scale;
            const double nn = std::sqrt(nx * nx + ny * ny + 1.0);
            const double hs = (nx * lx + ny * ly + lz) / nn;
            r.at(1, y, x) = std::clamp(hs, 0.0, 1.0);
        }
    }
    for (std::size_t i = 0; i < hw; ++i) r.data[i] = grad[i] / max_grad;

    // roads: polylines per class, painted in class order so later classes
    // overwrite earlier ones at crossings
    std::vector<std::uint8_t> road_mask(hw, 0);
    for (int cls = 1; cls <= 3; ++cls) {
        const auto [wmin, wmax] = spec.width_ranges[cls - 1];
        for (int i = 0; i < spec.roads_per_class[cls - 1]; ++i) {
            Stroke s;
            s.cls = cls;
            s.width = rng.uniform(wmin, wmax);
            double y = rng.uniform(0.0, H - 1.0);
            double x = rng.uniform(0.0, W - 1.0);
            double heading = rng.uniform(0.0, 6.283185307179586);
            const int nseg = 4 + static_cast<int>(rng.next_below(4));
            s.points.emplace_back(y, x);
            for (int seg = 0; seg < nseg; ++seg) {
                const double len = rng.uniform(0.08, 0.25) * std::min(H, W);
                heading += rng.uniform(-0.6, 0.6);
                y += len * std::sin(heading);
                x += len * std::cos(heading);
                s.points.emplace_back(y, x);
            }
            const double radius = s.width / 2.0;
            for (std::size_t v = 0; v + 1 < s.points.size(); ++v) {
                const auto [y0, x0] = s.points[v];
                const auto [y1, x1] = s.points[v + 1];
                const double len = std::hypot(y1 - y0, x1 - x0);
                const int steps = std::max(1, static_cast<int>(len / 0.5));
                for (int t = 0; t <= steps; ++t) {
                    const double f = static_cast<double>(t) / steps;
                    paint_disk(r, road_mask, y0 + f * (y1 - y0), x0 + f * (x1 - x0), radius,
                               static_cast<std::uint8_t>(cls));
                }
            }
            scene.strokes.push_back(std::move(s));
        }
    }

    // class-specific band intensities on road pixels
    for (std::size_t i = 0; i < hw; ++i) {
        if (road_mask[i] == 0) continue;
        const BandTargets& t = kRoadBands[road_mask[i] - 1];
        r.data[i] = 0.1 * r.data[i] + 0.9 * t.gradient;
        r.data[hw + i] = 0.1 * r.data[hw + i] + 0.9 * t.hillshade;
    }

    // final per-pixel noise, clamped to [0,1]
    for (std::size_t i = 0; i < 2 * hw; ++i)
        r.data[i] = std::clamp(r.data[i] + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);

    return scene;
}

} // namespace ddcm
