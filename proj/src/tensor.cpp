#include "ddcm/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ddcm {

std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        check(d > 0, "tensor shape must be positive, got ", shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_, bool requires_grad_)
    : shape(std::move(shape_)), data(std::move(data_)), requires_grad(requires_grad_) {
    const std::int64_t n = numel_of(shape);
    check(n == static_cast<std::int64_t>(data.size()), "tensor data length ", data.size(),
          " does not match shape ", shape_str(shape));
    if (requires_grad) grad.assign(data.size(), 0.0);
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const auto n = numel_of(shape);
    return std::make_shared<Tensor>(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    const auto n = numel_of(shape);
    return std::make_shared<Tensor>(std::move(shape), std::vector<double>(n, value), requires_grad);
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return std::make_shared<Tensor>(std::vector<int>{1}, std::vector<double>{value}, requires_grad);
}

TensorPtr Tensor::randn(std::vector<int> shape, RngState& rng, double stddev, bool requires_grad) {
    const auto n = numel_of(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return std::make_shared<Tensor>(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::uniform(std::vector<int> shape, RngState& rng, double lo, double hi,
                          bool requires_grad) {
    const auto n = numel_of(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return std::make_shared<Tensor>(std::move(shape), std::move(v), requires_grad);
}

int Tensor::dim(std::size_t i) const {
    check(i < shape.size(), "dim index ", i, " out of range for shape ", shape_str(shape));
    return shape[i];
}

double Tensor::value() const {
    check(numel() == 1, "value() requires a scalar tensor, got shape ", shape_str(shape));
    return data[0];
}

void Tensor::zero_grad() {
    if (requires_grad) grad.assign(data.size(), 0.0);
}

void Tape::backward(const TensorPtr& loss) {
    check(loss != nullptr, "backward: null loss");
    check(loss->numel() == 1, "backward: loss must be scalar, got shape ", shape_str(loss->shape));
    check(!steps_.empty(), "backward: tape is empty");
    check(loss->requires_grad, "backward: loss does not require grad");
    for (const auto& out : outputs_) out->zero_grad();
    loss->grad[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

namespace {

bool track(const Tape* tape, const TensorPtr& a, const TensorPtr& b = nullptr) {
    if (!tape) return false;
    return a->requires_grad || (b && b->requires_grad);
}

TensorPtr make_out(std::vector<int> shape, std::vector<double> data, bool rg) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data), rg);
}

} // namespace

TensorPtr elementwise(Tape* tape, Ew kind, const TensorPtr& a, const TensorPtr& b) {
    if (kind == Ew::Exp || kind == Ew::Log) return elementwise(tape, kind, a, 0.0);
    check(b != nullptr, "elementwise: missing right operand");
    if (b->numel() == 1 && a->shape != b->shape) {
        // scalar-vs-tensor broadcast, the only broadcast supported
        const double s = b->data[0];
        switch (kind) {
        case Ew::Add: return add(tape, a, s);
        case Ew::Sub: return add(tape, a, -s);
        case Ew::Mul: return mul(tape, a, s);
        case Ew::Div: return elementwise(tape, Ew::Div, a, s);
        case Ew::Max: return emax(tape, a, s);
        default: fail("unreachable");
        }
    }
    check(a->shape == b->shape, "elementwise: shape mismatch ", shape_str(a->shape), " vs ",
          shape_str(b->shape));
    const std::int64_t n = a->numel();
    std::vector<double> y(n);
    const double* pa = a->data.data();
    const double* pb = b->data.data();
    switch (kind) {
    case Ew::Add:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] + pb[i];
        break;
    case Ew::Sub:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] - pb[i];
        break;
    case Ew::Mul:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] * pb[i];
        break;
    case Ew::Div:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] / pb[i];
        break;
    case Ew::Max:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] >= pb[i] ? pa[i] : pb[i];
        break;
    default: fail("unreachable");
    }
    const bool rg = track(tape, a, b);
    auto out = make_out(a->shape, std::move(y), rg);
    if (rg) {
        tape->record(out, [kind, a, b, out] {
            const std::int64_t m = out->numel();
            const double* g = out->grad.data();
            switch (kind) {
            case Ew::Add:
                if (a->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i];
                if (b->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) b->grad[i] += g[i];
                break;
            case Ew::Sub:
                if (a->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i];
                if (b->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) b->grad[i] -= g[i];
                break;
            case Ew::Mul:
                if (a->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i] * b->data[i];
                if (b->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) b->grad[i] += g[i] * a->data[i];
                break;
            case Ew::Div:
                if (a->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i] / b->data[i];
                if (b->requires_grad)
                    for (std::int64_t i = 0; i < m; ++i)
                        b->grad[i] -= g[i] * a->data[i] / (b->data[i] * b->data[i]);
                break;
            case Ew::Max:
                // ties route to the left operand
                for (std::int64_t i = 0; i < m; ++i) {
                    if (a->data[i] >= b->data[i]) {
                        if (a->requires_grad) a->grad[i] += g[i];
                    } else if (b->requires_grad) {
                        b->grad[i] += g[i];
                    }
                }
                break;
            default: break;
            }
        });
    }
    return out;
}

TensorPtr elementwise(Tape* tape, Ew kind, const TensorPtr& a, double b) {
    const std::int64_t n = a->numel();
    std::vector<double> y(n);
    const double* pa = a->data.data();
    switch (kind) {
    case Ew::Add:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] + b;
        break;
    case Ew::Sub:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] - b;
        break;
    case Ew::Mul:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] * b;
        break;
    case Ew::Div:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] / b;
        break;
    case Ew::Max:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = pa[i] >= b ? pa[i] : b;
        break;
    case Ew::Exp:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = std::exp(pa[i]);
        break;
    case Ew::Log:
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] = std::log(pa[i]);
        break;
    }
    const bool rg = track(tape, a);
    auto out = make_out(a->shape, std::move(y), rg);
    if (rg) {
        tape->record(out, [kind, a, b, out] {
            const std::int64_t m = out->numel();
            const double* g = out->grad.data();
            switch (kind) {
            case Ew::Add:
            case Ew::Sub:
                for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i];
                break;
            case Ew::Mul:
                for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i] * b;
                break;
            case Ew::Div:
                for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i] / b;
                break;
            case Ew::Max:
                for (std::int64_t i = 0; i < m; ++i)
                    if (a->data[i] >= b) a->grad[i] += g[i];
                break;
            case Ew::Exp:
                for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i] * out->data[i];
                break;
            case Ew::Log:
                for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g[i] / a->data[i];
                break;
            }
        });
    }
    return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return elementwise(tape, Ew::Add, a, b); }
TensorPtr add(Tape* tape, const TensorPtr& a, double b) { return elementwise(tape, Ew::Add, a, b); }
TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return elementwise(tape, Ew::Sub, a, b); }

TensorPtr sub(Tape* tape, double a, const TensorPtr& b) {
    const std::int64_t n = b->numel();
    std::vector<double> y(n);
    for (std::int64_t i = 0; i < n; ++i) y[i] = a - b->data[i];
    const bool rg = track(tape, b);
    auto out = make_out(b->shape, std::move(y), rg);
    if (rg) {
        tape->record(out, [b, out] {
            const std::int64_t m = out->numel();
            for (std::int64_t i = 0; i < m; ++i) b->grad[i] -= out->grad[i];
        });
    }
    return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return elementwise(tape, Ew::Mul, a, b); }
TensorPtr mul(Tape* tape, const TensorPtr& a, double b) { return elementwise(tape, Ew::Mul, a, b); }
TensorPtr div(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return elementwise(tape, Ew::Div, a, b); }
TensorPtr emax(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return elementwise(tape, Ew::Max, a, b); }
TensorPtr emax(Tape* tape, const TensorPtr& a, double b) { return elementwise(tape, Ew::Max, a, b); }
TensorPtr exp_(Tape* tape, const TensorPtr& a) { return elementwise(tape, Ew::Exp, a, 0.0); }
TensorPtr log_(Tape* tape, const TensorPtr& a) { return elementwise(tape, Ew::Log, a, 0.0); }

TensorPtr sum(Tape* tape, const TensorPtr& a) {
    double acc = 0.0;
    for (double v : a->data) acc += v;
    const bool rg = track(tape, a);
    auto out = Tensor::scalar(acc, rg);
    if (rg) {
        tape->record(out, [a, out] {
            const double g = out->grad[0];
            const std::int64_t m = a->numel();
            for (std::int64_t i = 0; i < m; ++i) a->grad[i] += g;
        });
    }
    return out;
}

TensorPtr mean(Tape* tape, const TensorPtr& a) {
    const double inv = 1.0 / static_cast<double>(a->numel());
    return mul(tape, sum(tape, a), inv);
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& a) {
    const std::int64_t n = a->numel();
    std::vector<double> y(n);
    // saturation is clamped into the open interval (0,1)
    constexpr double lo = 5e-324;
    const double hi = std::nextafter(1.0, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = a->data[i];
        double s;
        if (x >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            s = e / (1.0 + e);
        }
        y[i] = std::min(std::max(s, lo), hi);
    }
    const bool rg = track(tape, a);
    auto out = make_out(a->shape, std::move(y), rg);
    if (rg) {
        tape->record(out, [a, out] {
            const std::int64_t m = out->numel();
            for (std::int64_t i = 0; i < m; ++i) {
                const double s = out->data[i];
                a->grad[i] += out->grad[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

TensorPtr reshape(Tape* tape, const TensorPtr& a, std::vector<int> new_shape) {
    check(numel_of(new_shape) == a->numel(), "reshape: cannot view ", shape_str(a->shape), " as ",
          shape_str(new_shape));
    const bool rg = track(tape, a);
    auto out = make_out(std::move(new_shape), a->data, rg);
    if (rg) {
        tape->record(out, [a, out] {
            const std::int64_t m = out->numel();
            for (std::int64_t i = 0; i < m; ++i) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

} // namespace ddcm
