#pragma once

#include <cstdint>
#include <vector>

#include "ddcm/arch.hpp"

namespace ddcm {

// Multi-step policy: the rate halves at every listed epoch, and bias
// parameters run at twice the weight rate throughout.
struct LrSchedule {
    double initial = 0.00012;
    std::vector<int> milestones{5, 15, 25, 65, 100};
    double factor = 0.5;
    double bias_multiplier = 2.0;

    double lr_at(int epoch, bool bias_group) const;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled = false; // default couples decay into the gradient
};

// Adam with the AMSGrad max-tracked second moment. Decay applies only to
// parameters flagged decay=true (biases, BN affine and PReLU slopes are
// exempt).
class AdamAmsgrad {
public:
    AdamAmsgrad(ParamList params, AdamConfig cfg);

    // Applies one update from the gradients currently held by the
    // parameters; lr is the weight-group rate, bias_lr the bias-group one.
    void step(double lr, double bias_lr);

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    // moment buffers for exact training resumption
    struct StateRef {
        std::string name;
        std::vector<double>* values;
    };
    std::vector<StateRef> state();
    void set_step_count(std::int64_t t) { t_ = t; }

private:
    struct Slot {
        ParamRef param;
        std::vector<double> m, v, vmax;
    };
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

} // namespace ddcm
