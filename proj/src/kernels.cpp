#include "ddcm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace ddcm::kernels {

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const ConvDims& d) {
    const std::int64_t rows = static_cast<std::int64_t>(d.batch) * d.out_c * d.out_h;
#pragma omp parallel for schedule(static)
    for (std::int64_t row = 0; row < rows; ++row) {
        const int oh = static_cast<int>(row % d.out_h);
        const int oc = static_cast<int>((row / d.out_h) % d.out_c);
        const int b = static_cast<int>(row / (static_cast<std::int64_t>(d.out_h) * d.out_c));
        const double* wb = w + static_cast<std::int64_t>(oc) * d.in_c * d.k * d.k;
        double* yrow = y + (row)*d.out_w;
        for (int ow = 0; ow < d.out_w; ++ow) {
            double acc = bias ? bias[oc] : 0.0;
            for (int ic = 0; ic < d.in_c; ++ic) {
                const double* xp =
                    x + (static_cast<std::int64_t>(b) * d.in_c + ic) * d.in_h * d.in_w;
                const double* wp = wb + static_cast<std::int64_t>(ic) * d.k * d.k;
                for (int kh = 0; kh < d.k; ++kh) {
                    const int ih = oh * d.stride - d.pad + kh * d.dilation;
                    if (ih < 0 || ih >= d.in_h) continue;
                    for (int kw = 0; kw < d.k; ++kw) {
                        const int iw = ow * d.stride - d.pad + kw * d.dilation;
                        if (iw < 0 || iw >= d.in_w) continue;
                        acc += xp[static_cast<std::int64_t>(ih) * d.in_w + iw] * wp[kh * d.k + kw];
                    }
                }
            }
            yrow[ow] = acc;
        }
    }
}

void conv2d_backward_input(const double* gy, const double* w, double* gx, const ConvDims& d) {
    const std::int64_t rows = static_cast<std::int64_t>(d.batch) * d.in_c * d.in_h;
#pragma omp parallel for schedule(static)
    for (std::int64_t row = 0; row < rows; ++row) {
        const int ih = static_cast<int>(row % d.in_h);
        const int ic = static_cast<int>((row / d.in_h) % d.in_c);
        const int b = static_cast<int>(row / (static_cast<std::int64_t>(d.in_h) * d.in_c));
        double* gxrow = gx + row * d.in_w;
        for (int iw = 0; iw < d.in_w; ++iw) {
            double acc = 0.0;
            for (int kh = 0; kh < d.k; ++kh) {
                const int th = ih + d.pad - kh * d.dilation;
                if (th < 0 || th % d.stride != 0) continue;
                const int oh = th / d.stride;
                if (oh >= d.out_h) continue;
                for (int kw = 0; kw < d.k; ++kw) {
                    const int tw = iw + d.pad - kw * d.dilation;
                    if (tw < 0 || tw % d.stride != 0) continue;
                    const int ow = tw / d.stride;
                    if (ow >= d.out_w) continue;
                    for (int oc = 0; oc < d.out_c; ++oc) {
                        const double g =
                            gy[((static_cast<std::int64_t>(b) * d.out_c + oc) * d.out_h + oh) *
                                   d.out_w +
                               ow];
                        const double wv =
                            w[((static_cast<std::int64_t>(oc) * d.in_c + ic) * d.k + kh) * d.k +
                              kw];
                        acc += g * wv;
                    }
                }
            }
            gxrow[iw] += acc;
        }
    }
}

void conv2d_backward_weights(const double* gy, const double* x, double* gw, const ConvDims& d) {
    const std::int64_t welems = static_cast<std::int64_t>(d.out_c) * d.in_c * d.k * d.k;
#pragma omp parallel for schedule(static)
    for (std::int64_t wi = 0; wi < welems; ++wi) {
        const int kw = static_cast<int>(wi % d.k);
        const int kh = static_cast<int>((wi / d.k) % d.k);
        const int ic = static_cast<int>((wi / (d.k * d.k)) % d.in_c);
        const int oc = static_cast<int>(wi / (static_cast<std::int64_t>(d.k) * d.k * d.in_c));
        double acc = 0.0;
        for (int b = 0; b < d.batch; ++b) {
            const double* xp = x + (static_cast<std::int64_t>(b) * d.in_c + ic) * d.in_h * d.in_w;
            const double* gp =
                gy + (static_cast<std::int64_t>(b) * d.out_c + oc) * d.out_h * d.out_w;
            for (int oh = 0; oh < d.out_h; ++oh) {
                const int ih = oh * d.stride - d.pad + kh * d.dilation;
                if (ih < 0 || ih >= d.in_h) continue;
                for (int ow = 0; ow < d.out_w; ++ow) {
                    const int iw = ow * d.stride - d.pad + kw * d.dilation;
                    if (iw < 0 || iw >= d.in_w) continue;
                    acc += xp[static_cast<std::int64_t>(ih) * d.in_w + iw] *
                           gp[static_cast<std::int64_t>(oh) * d.out_w + ow];
                }
            }
        }
        gw[wi] += acc;
    }
}

void conv2d_backward_bias(const double* gy, double* gb, const ConvDims& d) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < d.out_c; ++oc) {
        double acc = 0.0;
        for (int b = 0; b < d.batch; ++b) {
            const double* gp =
                gy + (static_cast<std::int64_t>(b) * d.out_c + oc) * d.out_h * d.out_w;
            const std::int64_t hw = static_cast<std::int64_t>(d.out_h) * d.out_w;
            for (std::int64_t i = 0; i < hw; ++i) acc += gp[i];
        }
        gb[oc] += acc;
    }
}

namespace {

struct Lerp {
    int lo, hi;
    double frac;
};

inline Lerp axis_lerp(int out_pos, int in_size, double scale) {
    const double src = (out_pos + 0.5) * scale - 0.5;
    Lerp l;
    double f = std::floor(src);
    l.lo = static_cast<int>(f);
    l.frac = src - f;
    if (l.lo < 0) {
        l.lo = 0;
        l.frac = 0.0;
    }
    if (l.lo >= in_size - 1) {
        l.lo = in_size - 1;
        l.hi = l.lo;
        l.frac = 0.0;
    } else {
        l.hi = l.lo + 1;
    }
    return l;
}

} // namespace

void bilinear_forward(const double* x, double* y, std::int64_t planes, int in_h, int in_w,
                      int out_h, int out_w) {
    const double sh = static_cast<double>(in_h) / out_h;
    const double sw = static_cast<double>(in_w) / out_w;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* xp = x + p * in_h * in_w;
        double* yp = y + p * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const Lerp ly = axis_lerp(oy, in_h, sh);
            for (int ox = 0; ox < out_w; ++ox) {
                const Lerp lx = axis_lerp(ox, in_w, sw);
                const double v00 = xp[static_cast<std::int64_t>(ly.lo) * in_w + lx.lo];
                const double v01 = xp[static_cast<std::int64_t>(ly.lo) * in_w + lx.hi];
                const double v10 = xp[static_cast<std::int64_t>(ly.hi) * in_w + lx.lo];
                const double v11 = xp[static_cast<std::int64_t>(ly.hi) * in_w + lx.hi];
                yp[static_cast<std::int64_t>(oy) * out_w + ox] =
                    (1.0 - ly.frac) * ((1.0 - lx.frac) * v00 + lx.frac * v01) +
                    ly.frac * ((1.0 - lx.frac) * v10 + lx.frac * v11);
            }
        }
    }
}

void bilinear_backward(const double* gy, double* gx, std::int64_t planes, int in_h, int in_w,
                       int out_h, int out_w) {
    const double sh = static_cast<double>(in_h) / out_h;
    const double sw = static_cast<double>(in_w) / out_w;
    // scatter stays inside one plane, so planes parallelize race-free
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* gp = gy + p * out_h * out_w;
        double* xp = gx + p * in_h * in_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const Lerp ly = axis_lerp(oy, in_h, sh);
            for (int ox = 0; ox < out_w; ++ox) {
                const Lerp lx = axis_lerp(ox, in_w, sw);
                const double g = gp[static_cast<std::int64_t>(oy) * out_w + ox];
                xp[static_cast<std::int64_t>(ly.lo) * in_w + lx.lo] +=
                    (1.0 - ly.frac) * (1.0 - lx.frac) * g;
                xp[static_cast<std::int64_t>(ly.lo) * in_w + lx.hi] +=
                    (1.0 - ly.frac) * lx.frac * g;
                xp[static_cast<std::int64_t>(ly.hi) * in_w + lx.lo] +=
                    ly.frac * (1.0 - lx.frac) * g;
                xp[static_cast<std::int64_t>(ly.hi) * in_w + lx.hi] += ly.frac * lx.frac * g;
            }
        }
    }
}

void maxpool2_forward(const double* x, double* y, std::int64_t* argmax, std::int64_t planes,
                      int h, int w) {
    const int oh = h / 2;
    const int ow = w / 2;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* xp = x + p * h * w;
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                // first max in scan order wins on ties
                std::int64_t best = static_cast<std::int64_t>(2 * i) * w + 2 * j;
                double bv = xp[best];
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::int64_t idx =
                            static_cast<std::int64_t>(2 * i + dy) * w + (2 * j + dx);
                        if (xp[idx] > bv) {
                            bv = xp[idx];
                            best = idx;
                        }
                    }
                }
                const std::int64_t o = p * oh * ow + static_cast<std::int64_t>(i) * ow + j;
                y[o] = bv;
                argmax[o] = p * h * w + best;
            }
        }
    }
}

void maxpool2_backward(const double* gy, double* gx, const std::int64_t* argmax,
                       std::int64_t out_elems) {
    // pooling windows are disjoint, so scatter targets never collide
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < out_elems; ++i) gx[argmax[i]] += gy[i];
}

void avgpool_full_forward(const double* x, double* y, std::int64_t planes, std::int64_t hw) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* xp = x + p * hw;
        double acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) acc += xp[i];
        y[p] = acc / static_cast<double>(hw);
    }
}

void avgpool_full_backward(const double* gy, double* gx, std::int64_t planes, std::int64_t hw) {
    const double inv = 1.0 / static_cast<double>(hw);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const double g = gy[p] * inv;
        double* xp = gx + p * hw;
        for (std::int64_t i = 0; i < hw; ++i) xp[i] += g;
    }
}

void linear_forward(const double* x, const double* w, const double* bias, double* y, int batch,
                    int in_f, int out_f) {
    const std::int64_t rows = static_cast<std::int64_t>(batch) * out_f;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int o = static_cast<int>(r % out_f);
        const int b = static_cast<int>(r / out_f);
        const double* xp = x + static_cast<std::int64_t>(b) * in_f;
        const double* wp = w + static_cast<std::int64_t>(o) * in_f;
        double acc = bias ? bias[o] : 0.0;
        for (int f = 0; f < in_f; ++f) acc += xp[f] * wp[f];
        y[r] = acc;
    }
}

void linear_backward_input(const double* gy, const double* w, double* gx, int batch, int in_f,
                           int out_f) {
    const std::int64_t rows = static_cast<std::int64_t>(batch) * in_f;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int f = static_cast<int>(r % in_f);
        const int b = static_cast<int>(r / in_f);
        double acc = 0.0;
        for (int o = 0; o < out_f; ++o)
            acc += gy[static_cast<std::int64_t>(b) * out_f + o] *
                   w[static_cast<std::int64_t>(o) * in_f + f];
        gx[r] += acc;
    }
}

void linear_backward_weights(const double* gy, const double* x, double* gw, int batch, int in_f,
                             int out_f) {
    const std::int64_t rows = static_cast<std::int64_t>(out_f) * in_f;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int f = static_cast<int>(r % in_f);
        const int o = static_cast<int>(r / in_f);
        double acc = 0.0;
        for (int b = 0; b < batch; ++b)
            acc += gy[static_cast<std::int64_t>(b) * out_f + o] *
                   x[static_cast<std::int64_t>(b) * in_f + f];
        gw[r] += acc;
    }
}

void linear_backward_bias(const double* gy, double* gb, int batch, int out_f) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_f; ++o) {
        double acc = 0.0;
        for (int b = 0; b < batch; ++b) acc += gy[static_cast<std::int64_t>(b) * out_f + o];
        gb[o] += acc;
    }
}

void softmax_forward(const double* x, double* y, std::int64_t outer, int k, std::int64_t inner) {
    const std::int64_t rows = outer * inner;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t ou = r / inner;
        const std::int64_t in = r % inner;
        const std::int64_t base = ou * k * inner + in;
        double mx = x[base];
        for (int c = 1; c < k; ++c) mx = std::max(mx, x[base + c * inner]);
        double denom = 0.0;
        for (int c = 0; c < k; ++c) {
            const double e = std::exp(x[base + c * inner] - mx);
            y[base + c * inner] = e;
            denom += e;
        }
        for (int c = 0; c < k; ++c) y[base + c * inner] /= denom;
    }
}

void softmax_backward(const double* y, const double* gy, double* gx, std::int64_t outer, int k,
                      std::int64_t inner) {
    const std::int64_t rows = outer * inner;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t ou = r / inner;
        const std::int64_t in = r % inner;
        const std::int64_t base = ou * k * inner + in;
        double dot = 0.0;
        for (int c = 0; c < k; ++c) dot += gy[base + c * inner] * y[base + c * inner];
        for (int c = 0; c < k; ++c) {
            const std::int64_t i = base + c * inner;
            gx[i] += y[i] * (gy[i] - dot);
        }
    }
}

} // namespace ddcm::kernels
