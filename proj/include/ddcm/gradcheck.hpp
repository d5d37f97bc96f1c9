#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddcm/tensor.hpp"

namespace ddcm {

// Central finite-difference step. Chosen as the dyadic value closest to
// 1e-6 (2^-20) so that x +/- h is exact for dyadically representable
// inputs; this keeps the check sharp for exactly-linear ops.
inline constexpr double kGradcheckStep = 9.5367431640625e-07;

struct GradcheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::int64_t elements = 0;
};

// f must produce a scalar from x on the given tape. Compares the tape
// gradient of f w.r.t. x against central finite differences; the relative
// error divides by max(1, |analytic|, |numeric|).
using ScalarFn = std::function<TensorPtr(Tape&, const TensorPtr&)>;

GradcheckReport gradcheck(const ScalarFn& f, const TensorPtr& x, double rtol,
                          double step = kGradcheckStep);

struct GradcheckRow {
    std::string name;
    double max_rel_err = 0.0;
    double rtol = 1e-4;
    bool pass = false;
};

// The full layer-and-loss sweep behind the `gradcheck` CLI command and the
// gradient acceptance gate. Each row aggregates `seeds` random restarts.
std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t seed, int seeds);

} // namespace ddcm
