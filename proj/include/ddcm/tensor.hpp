#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ddcm/error.hpp"
#include "ddcm/rng.hpp"

namespace ddcm {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

std::int64_t numel_of(const std::vector<int>& shape);

// Dense row-major f64 tensor. 4-D feature maps use (batch, channels,
// height, width). Immutable after the forward pass that created it,
// except for the grad buffer.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // same length as data iff requires_grad

    Tensor(std::vector<int> shape_, std::vector<double> data_, bool requires_grad_);

    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<int> shape, double value, bool requires_grad = false);
    static TensorPtr from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);
    static TensorPtr randn(std::vector<int> shape, RngState& rng, double stddev = 1.0,
                           bool requires_grad = false);
    static TensorPtr uniform(std::vector<int> shape, RngState& rng, double lo, double hi,
                             bool requires_grad = false);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(std::size_t i) const;
    double value() const; // scalar tensors only
    void zero_grad();
};

inline std::int64_t offset4(const std::vector<int>& s, int b, int c, int h, int w) {
    return ((static_cast<std::int64_t>(b) * s[1] + c) * s[2] + h) * s[3] + w;
}

// Reverse-mode record of one forward computation. Ops append their output
// and a backward step as they execute; backward() replays the steps in
// reverse order, so every consumer has deposited its gradient before the
// producer runs. Each replay starts from fresh interior gradients, so
// leaf gradients accumulate additively across repeated backward calls.
class Tape {
public:
    void record(TensorPtr output, std::function<void()> step) {
        outputs_.push_back(std::move(output));
        steps_.push_back(std::move(step));
    }
    std::size_t size() const { return steps_.size(); }
    void clear() {
        steps_.clear();
        outputs_.clear();
    }
    void backward(const TensorPtr& loss);

private:
    std::vector<std::function<void()>> steps_;
    std::vector<TensorPtr> outputs_;
};

enum class Ew { Add, Sub, Mul, Div, Max, Exp, Log };

// Binary elementwise over equal shapes (or tensor-scalar); Exp/Log ignore b.
TensorPtr elementwise(Tape* tape, Ew kind, const TensorPtr& a, const TensorPtr& b);
TensorPtr elementwise(Tape* tape, Ew kind, const TensorPtr& a, double b);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape* tape, const TensorPtr& a, double b);
TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape* tape, double a, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, double b);
TensorPtr div(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr emax(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr emax(Tape* tape, const TensorPtr& a, double b);
TensorPtr exp_(Tape* tape, const TensorPtr& a);
TensorPtr log_(Tape* tape, const TensorPtr& a);

TensorPtr sum(Tape* tape, const TensorPtr& a);  // -> scalar
TensorPtr mean(Tape* tape, const TensorPtr& a); // -> scalar
TensorPtr sigmoid(Tape* tape, const TensorPtr& a);
TensorPtr reshape(Tape* tape, const TensorPtr& a, std::vector<int> new_shape);

} // namespace ddcm
