#pragma once

#include <vector>

namespace ddcm::reference {

// Serial single-thread reference implementations. They are written as the
// most direct transcription of each operation's definition, stay
// independent of the kernels in kernels.cpp, and serve as the oracle the
// test suite compares against. The benchmark target times them against
// the parallel kernels.

// Direct convolution: for every output element walk the whole kernel and
// accumulate in (ic, kh, kw) order, skipping out-of-bounds taps.
std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>* bias, int batch, int in_c, int in_h,
                           int in_w, int out_c, int k, int stride, int dilation, int pad);

int conv_out_size(int in, int k, int stride, int dilation, int pad);

// Per-pixel bilinear interpolation with the half-pixel (align-corners
// false) convention.
std::vector<double> bilinear(const std::vector<double>& x, int planes, int in_h, int in_w,
                             int out_h, int out_w);

} // namespace ddcm::reference
