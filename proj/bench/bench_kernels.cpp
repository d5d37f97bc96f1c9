// Times the parallel kernels against the serial reference implementations
// and cross-checks their outputs. Build target: bench_kernels.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "ddcm/kernels.hpp"
#include "ddcm/reference.hpp"
#include "ddcm/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ddcm;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    using clock = std::chrono::steady_clock;
    fn(); // warmup
    const auto t0 = clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct ConvCase {
    const char* name;
    int batch, in_c, size, out_c, k, stride, dilation, pad;
    int reps;
};

void bench_conv(const ConvCase& c) {
    RngState rng(1);
    const int out_sz = reference::conv_out_size(c.size, c.k, c.stride, c.dilation, c.pad);
    std::vector<double> x(static_cast<std::size_t>(c.batch) * c.in_c * c.size * c.size);
    std::vector<double> w(static_cast<std::size_t>(c.out_c) * c.in_c * c.k * c.k);
    std::vector<double> bias(c.out_c);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    for (auto& v : bias) v = rng.uniform(-0.5, 0.5);

    kernels::ConvDims d{c.batch, c.in_c, c.size, c.size, c.out_c, out_sz, out_sz,
                        c.k,     c.stride, c.dilation, c.pad};
    std::vector<double> y(static_cast<std::size_t>(c.batch) * c.out_c * out_sz * out_sz);

    const double parallel_ms =
        time_ms([&] { kernels::conv2d_forward(x.data(), w.data(), bias.data(), y.data(), d); },
                c.reps);
    std::vector<double> y_ref;
    const double serial_ms = time_ms(
        [&] {
            y_ref = reference::conv2d(x, w, &bias, c.batch, c.in_c, c.size, c.size, c.out_c, c.k,
                                      c.stride, c.dilation, c.pad);
        },
        c.reps);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        max_diff = std::max(max_diff, std::fabs(y[i] - y_ref[i]));

    std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   max|diff| %g\n",
                c.name, serial_ms, parallel_ms, serial_ms / parallel_ms, max_diff);
}

void bench_bilinear() {
    RngState rng(2);
    const int planes = 16, in = 64, out = 256;
    std::vector<double> x(static_cast<std::size_t>(planes) * in * in);
    for (auto& v : x) v = rng.uniform();
    std::vector<double> y(static_cast<std::size_t>(planes) * out * out);

    const double parallel_ms =
        time_ms([&] { kernels::bilinear_forward(x.data(), y.data(), planes, in, in, out, out); },
                10);
    std::vector<double> y_ref;
    const double serial_ms =
        time_ms([&] { y_ref = reference::bilinear(x, planes, in, in, out, out); }, 10);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        max_diff = std::max(max_diff, std::fabs(y[i] - y_ref[i]));
    std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   max|diff| %g\n",
                "bilinear 64->256 x16", serial_ms, parallel_ms, serial_ms / parallel_ms,
                max_diff);
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled (serial build)\n");
#endif
    bench_conv({"conv 3x3 r1 16ch 128px", 1, 16, 128, 16, 3, 1, 1, 1, 3});
    bench_conv({"conv 3x3 r4 s2 16ch 128px", 1, 16, 128, 16, 3, 2, 4, 4, 3});
    bench_conv({"conv 1x1 64ch 64px", 1, 64, 64, 64, 1, 1, 1, 0, 5});
    bench_conv({"conv 7x7 s2 3->64 224px", 1, 3, 224, 64, 7, 2, 1, 3, 2});
    bench_bilinear();
    return 0;
}
