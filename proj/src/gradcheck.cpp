#include "ddcm/gradcheck.hpp"

#include <cmath>

namespace ddcm {

GradcheckReport gradcheck(const ScalarFn& f, const TensorPtr& x, double rtol, double step) {
    auto leaf = Tensor::from(x->shape, x->data, true);
    Tape tape;
    auto loss = f(tape, leaf);
    check(loss->numel() == 1, "gradcheck: f must be scalar-valued, got ",
          shape_str(loss->shape));
    check(std::isfinite(loss->data[0]), "gradcheck: f(x) is not finite");
    tape.backward(loss);
    const std::vector<double> analytic = leaf->grad;

    GradcheckReport rep;
    rep.elements = x->numel();
    for (std::int64_t i = 0; i < x->numel(); ++i) {
        auto probe = [&](double delta) {
            auto xp = Tensor::from(x->shape, x->data, false);
            xp->data[i] += delta;
            Tape t;
            auto y = f(t, xp);
            check(std::isfinite(y->data[0]), "gradcheck: f non-finite under perturbation");
            return y->data[0];
        };
        const double numeric = (probe(step) - probe(-step)) / (2.0 * step);
        const double a = analytic[i];
        const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
        const double rel = std::fabs(a - numeric) / denom;
        if (rel > rep.max_rel_err) rep.max_rel_err = rel;
    }
    rep.pass = rep.max_rel_err < rtol;
    return rep;
}

} // namespace ddcm
