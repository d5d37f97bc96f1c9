#include "ddcm/optim.hpp"

#include <cmath>

namespace ddcm {

double LrSchedule::lr_at(int epoch, bool bias_group) const {
    check(epoch >= 0, "lr_at: epoch must be >= 0, got ", epoch);
    double lr = initial;
    for (int m : milestones)
        if (m <= epoch) lr *= factor;
    return bias_group ? lr * bias_multiplier : lr;
}

AdamAmsgrad::AdamAmsgrad(ParamList params, AdamConfig cfg) : cfg_(cfg) {
    for (auto& p : params) {
        Slot s;
        s.param = p;
        const std::size_t n = p.tensor->data.size();
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        s.vmax.assign(n, 0.0);
        slots_.push_back(std::move(s));
    }
}

void AdamAmsgrad::step(double lr, double bias_lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
        auto& t = *s.param.tensor;
        check(t.requires_grad, "optimizer: parameter ", s.param.name, " has no gradient buffer");
        const double rate = s.param.is_bias ? bias_lr : lr;
        const bool decay = cfg_.weight_decay != 0.0 && s.param.decay;
        const std::size_t n = t.data.size();
        for (std::size_t i = 0; i < n; ++i) {
            double g = t.grad[i];
            check(std::isfinite(g), "optimizer: non-finite gradient in ", s.param.name,
                  " at element ", i);
            if (decay && !cfg_.decoupled) g += cfg_.weight_decay * t.data[i];
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            if (s.v[i] > s.vmax[i]) s.vmax[i] = s.v[i];
            const double mhat = s.m[i] / bc1;
            const double denom = std::sqrt(s.vmax[i]) / std::sqrt(bc2) + cfg_.eps;
            t.data[i] -= rate * mhat / denom;
            if (decay && cfg_.decoupled) t.data[i] -= rate * cfg_.weight_decay * t.data[i];
        }
    }
}

std::vector<AdamAmsgrad::StateRef> AdamAmsgrad::state() {
    std::vector<StateRef> out;
    for (auto& s : slots_) {
        out.push_back({"optim." + s.param.name + ".m", &s.m});
        out.push_back({"optim." + s.param.name + ".v", &s.v});
        out.push_back({"optim." + s.param.name + ".vmax", &s.vmax});
    }
    return out;
}

} // namespace ddcm
