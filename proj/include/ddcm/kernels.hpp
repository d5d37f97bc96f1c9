#pragma once

#include <cstdint>

namespace ddcm::kernels {

// Raw-buffer kernels behind the tape ops. Loops parallelize over disjoint
// output (or gradient-target) elements with serial inner accumulation, so
// results are bitwise independent of the OpenMP worker count.

struct ConvDims {
    int batch;
    int in_c, in_h, in_w;
    int out_c, out_h, out_w;
    int k, stride, dilation, pad;
};

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const ConvDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const ConvDims& d);
void conv2d_backward_weights(const double* gy, const double* x, double* gw, const ConvDims& d);
void conv2d_backward_bias(const double* gy, double* gb, const ConvDims& d);

void bilinear_forward(const double* x, double* y, std::int64_t planes, int in_h, int in_w,
                      int out_h, int out_w);
void bilinear_backward(const double* gy, double* gx, std::int64_t planes, int in_h, int in_w,
                       int out_h, int out_w);

// 2x2 stride-2 max pooling; argmax holds the flat input offset per output.
void maxpool2_forward(const double* x, double* y, std::int64_t* argmax, std::int64_t planes,
                      int h, int w);
void maxpool2_backward(const double* gy, double* gx, const std::int64_t* argmax,
                       std::int64_t out_elems);

void avgpool_full_forward(const double* x, double* y, std::int64_t planes, std::int64_t hw);
void avgpool_full_backward(const double* gy, double* gx, std::int64_t planes, std::int64_t hw);

void linear_forward(const double* x, const double* w, const double* bias, double* y, int batch,
                    int in_f, int out_f);
void linear_backward_input(const double* gy, const double* w, double* gx, int batch, int in_f,
                           int out_f);
void linear_backward_weights(const double* gy, const double* x, double* gw, int batch, int in_f,
                             int out_f);
void linear_backward_bias(const double* gy, double* gb, int batch, int out_f);

void softmax_forward(const double* x, double* y, std::int64_t outer, int k, std::int64_t inner);
void softmax_backward(const double* y, const double* gy, double* gx, std::int64_t outer, int k,
                      std::int64_t inner);

} // namespace ddcm::kernels
