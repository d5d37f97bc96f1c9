#include "ddcm/reference.hpp"

#include <cmath>

namespace ddcm::reference {

int conv_out_size(int in, int k, int stride, int dilation, int pad) {
    const int extent = k + (k - 1) * (dilation - 1);
    return (in + 2 * pad - extent) / stride + 1;
}

std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>* bias, int batch, int in_c, int in_h,
                           int in_w, int out_c, int k, int stride, int dilation, int pad) {
    const int out_h = conv_out_size(in_h, k, stride, dilation, pad);
    const int out_w = conv_out_size(in_w, k, stride, dilation, pad);
    std::vector<double> y(static_cast<std::size_t>(batch) * out_c * out_h * out_w, 0.0);
    for (int b = 0; b < batch; ++b) {
        for (int oc = 0; oc < out_c; ++oc) {
            for (int oh = 0; oh < out_h; ++oh) {
                for (int ow = 0; ow < out_w; ++ow) {
                    double acc = bias ? (*bias)[oc] : 0.0;
                    for (int ic = 0; ic < in_c; ++ic) {
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) {
                                const int ih = oh * stride - pad + kh * dilation;
                                const int iw = ow * stride - pad + kw * dilation;
                                if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
                                const double xv =
                                    x[((static_cast<std::size_t>(b) * in_c + ic) * in_h + ih) *
                                          in_w +
                                      iw];
                                const double wv =
                                    w[((static_cast<std::size_t>(oc) * in_c + ic) * k + kh) * k +
                                      kw];
                                acc += xv * wv;
                            }
                        }
                    }
                    y[((static_cast<std::size_t>(b) * out_c + oc) * out_h + oh) * out_w + ow] =
                        acc;
                }
            }
        }
    }
    return y;
}

std::vector<double> bilinear(const std::vector<double>& x, int planes, int in_h, int in_w,
                             int out_h, int out_w) {
    std::vector<double> y(static_cast<std::size_t>(planes) * out_h * out_w, 0.0);
    const double sh = static_cast<double>(in_h) / out_h;
    const double sw = static_cast<double>(in_w) / out_w;
    for (int p = 0; p < planes; ++p) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double sy = (oy + 0.5) * sh - 0.5;
                double sx = (ox + 0.5) * sw - 0.5;
                int y0 = static_cast<int>(std::floor(sy));
                int x0 = static_cast<int>(std::floor(sx));
                double fy = sy - y0;
                double fx = sx - x0;
                if (y0 < 0) {
                    y0 = 0;
                    fy = 0.0;
                }
                if (x0 < 0) {
                    x0 = 0;
                    fx = 0.0;
                }
                int y1 = y0 + 1;
                int x1 = x0 + 1;
                if (y0 >= in_h - 1) {
                    y0 = y1 = in_h - 1;
                    fy = 0.0;
                }
                if (x0 >= in_w - 1) {
                    x0 = x1 = in_w - 1;
                    fx = 0.0;
                }
                const auto at = [&](int yy, int xx) {
                    return x[(static_cast<std::size_t>(p) * in_h + yy) * in_w + xx];
                };
                y[(static_cast<std::size_t>(p) * out_h + oy) * out_w + ox] =
                    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                    fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1));
            }
        }
    }
    return y;
}

} // namespace ddcm::reference
