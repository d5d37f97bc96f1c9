#include "ddcm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ddcm {

ClassWeights ClassWeights::uniform(int k) {
    ClassWeights cw;
    cw.weights.assign(k, 1.0);
    cw.frequencies.assign(k, 1.0);
    return cw;
}

ClassWeights median_frequency_weights(const std::vector<double>& frequencies) {
    check(!frequencies.empty(), "median_frequency_weights: empty frequency vector");
    for (std::size_t c = 0; c < frequencies.size(); ++c)
        check(frequencies[c] > 0.0, "median_frequency_weights: class ", c,
              " has zero frequency; floor its count or drop the class");
    std::vector<double> sorted = frequencies;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    ClassWeights cw;
    cw.frequencies = frequencies;
    cw.weights.resize(n);
    for (std::size_t c = 0; c < n; ++c) cw.weights[c] = median / frequencies[c];
    return cw;
}

TensorPtr weighted_cross_entropy(Tape* tape, const TensorPtr& logits,
                                 const std::vector<std::uint8_t>& target,
                                 const ClassWeights& weights) {
    check(logits->shape.size() == 4, "weighted_cross_entropy: logits must be (B,K,H,W), got ",
          shape_str(logits->shape));
    const int B = logits->dim(0), K = logits->dim(1), H = logits->dim(2), W = logits->dim(3);
    const std::int64_t npix = static_cast<std::int64_t>(B) * H * W;
    check(static_cast<std::int64_t>(target.size()) == npix,
          "weighted_cross_entropy: target has ", target.size(), " pixels, expected ", npix);
    check(static_cast<int>(weights.weights.size()) == K,
          "weighted_cross_entropy: weight vector has ", weights.weights.size(), " classes, logits have ",
          K);
    for (std::int64_t i = 0; i < npix; ++i)
        check(target[i] < K, "weighted_cross_entropy: class id ", int(target[i]),
              " out of range [0,", K, ") at pixel ", i);

    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    std::vector<double> pix_loss(npix);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < npix; ++i) {
        const std::int64_t b = i / plane;
        const std::int64_t p = i % plane;
        const double* l = logits->data.data() + (b * K) * plane + p;
        double mx = l[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, l[k * plane]);
        double lse = 0.0;
        for (int k = 0; k < K; ++k) lse += std::exp(l[k * plane] - mx);
        lse = mx + std::log(lse);
        const int y = target[i];
        pix_loss[i] = weights.weights[y] * (lse - l[static_cast<std::int64_t>(y) * plane]);
    }
    double total = 0.0;
    for (double v : pix_loss) total += v;
    const double value = total / static_cast<double>(npix);

    const bool rg = tape && logits->requires_grad;
    auto out = Tensor::scalar(value, rg);
    if (rg) {
        auto w = weights.weights;
        tape->record(out, [logits, target, w, out, B, K, plane, npix] {
            const double g = out->grad[0] / static_cast<double>(npix);
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < npix; ++i) {
                const std::int64_t b = i / plane;
                const std::int64_t p = i % plane;
                const double* l = logits->data.data() + (b * K) * plane + p;
                double* gl = logits->grad.data() + (b * K) * plane + p;
                double mx = l[0];
                for (int k = 1; k < K; ++k) mx = std::max(mx, l[k * plane]);
                double denom = 0.0;
                for (int k = 0; k < K; ++k) denom += std::exp(l[k * plane] - mx);
                const int y = target[i];
                const double wy = w[y];
                for (int k = 0; k < K; ++k) {
                    const double pk = std::exp(l[k * plane] - mx) / denom;
                    gl[static_cast<std::int64_t>(k) * plane] +=
                        g * wy * (pk - (k == y ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

TensorPtr binary_cross_entropy(Tape* tape, const TensorPtr& logits,
                               const std::vector<double>& target) {
    const std::int64_t n = logits->numel();
    check(static_cast<std::int64_t>(target.size()) == n, "binary_cross_entropy: ", target.size(),
          " targets for ", n, " logits");
    for (std::int64_t i = 0; i < n; ++i)
        check(target[i] == 0.0 || target[i] == 1.0,
              "binary_cross_entropy: target must be 0 or 1, got ", target[i], " at ", i);
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = logits->data[i];
        const double y = target[i];
        total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
    }
    const double value = total / static_cast<double>(n);
    const bool rg = tape && logits->requires_grad;
    auto out = Tensor::scalar(value, rg);
    if (rg) {
        tape->record(out, [logits, target, out, n] {
            const double g = out->grad[0] / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const double x = logits->data[i];
                const double s =
                    x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                logits->grad[i] += g * (s - target[i]);
            }
        });
    }
    return out;
}

namespace {

// jaccard[i] = 1 - I/U over the first i+1 sorted pixels; returned as the
// increment sequence the sorted errors are dotted with.
std::vector<double> lovasz_grad(const std::vector<double>& gt_sorted) {
    const std::size_t p = gt_sorted.size();
    double gts = 0.0;
    for (double v : gt_sorted) gts += v;
    std::vector<double> jaccard(p);
    double cum_fg = 0.0, cum_bg = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        cum_fg += gt_sorted[i];
        cum_bg += 1.0 - gt_sorted[i];
        const double inter = gts - cum_fg;
        const double uni = gts + cum_bg;
        jaccard[i] = 1.0 - inter / uni;
    }
    for (std::size_t i = p; i-- > 1;) jaccard[i] -= jaccard[i - 1];
    return jaccard;
}

} // namespace

TensorPtr lovasz_softmax(Tape* tape, const TensorPtr& probs,
                         const std::vector<std::uint8_t>& target) {
    check(probs->shape.size() == 4, "lovasz_softmax: probs must be (B,K,H,W), got ",
          shape_str(probs->shape));
    const int B = probs->dim(0), K = probs->dim(1), H = probs->dim(2), W = probs->dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t npix = static_cast<std::int64_t>(B) * plane;
    check(static_cast<std::int64_t>(target.size()) == npix, "lovasz_softmax: target has ",
          target.size(), " pixels, expected ", npix);
    for (std::int64_t i = 0; i < npix; ++i)
        check(target[i] < K, "lovasz_softmax: class id ", int(target[i]), " out of range");
    for (std::int64_t i = 0; i < npix; ++i) {
        const std::int64_t b = i / plane;
        const std::int64_t p = i % plane;
        double s = 0.0;
        for (int k = 0; k < K; ++k)
            s += probs->data[(b * K + k) * plane + p];
        check(std::fabs(s - 1.0) <= 1e-6, "lovasz_softmax: probabilities sum to ", s,
              " at pixel ", i, "; expected 1");
    }

    // per (image, present class): sorted pixel order and the gradient
    // coefficients, kept for the backward pass
    struct ClassPlan {
        int b, c;
        std::vector<std::int64_t> order; // pixel index within the image
        std::vector<double> coeff;       // lovasz_grad at that rank
    };
    std::vector<ClassPlan> plans;
    std::vector<double> image_loss(B, 0.0);
    std::vector<int> image_present(B, 0);

    for (int b = 0; b < B; ++b) {
        std::vector<bool> present(K, false);
        for (std::int64_t p = 0; p < plane; ++p) present[target[b * plane + p]] = true;
        for (int c = 0; c < K; ++c) {
            if (!present[c]) continue;
            ClassPlan plan;
            plan.b = b;
            plan.c = c;
            std::vector<double> errs(plane);
            for (std::int64_t p = 0; p < plane; ++p) {
                const bool fg = target[b * plane + p] == c;
                const double pc = probs->data[(static_cast<std::int64_t>(b) * K + c) * plane + p];
                errs[p] = fg ? 1.0 - pc : pc;
            }
            plan.order.resize(plane);
            std::iota(plan.order.begin(), plan.order.end(), std::int64_t{0});
            std::stable_sort(plan.order.begin(), plan.order.end(),
                             [&](std::int64_t a, std::int64_t b2) { return errs[a] > errs[b2]; });
            std::vector<double> gt_sorted(plane);
            for (std::int64_t r = 0; r < plane; ++r)
                gt_sorted[r] = target[b * plane + plan.order[r]] == c ? 1.0 : 0.0;
            plan.coeff = lovasz_grad(gt_sorted);
            double loss_c = 0.0;
            for (std::int64_t r = 0; r < plane; ++r) loss_c += errs[plan.order[r]] * plan.coeff[r];
            image_loss[b] += loss_c;
            image_present[b] += 1;
            plans.push_back(std::move(plan));
        }
    }
    double value = 0.0;
    for (int b = 0; b < B; ++b) value += image_loss[b] / image_present[b];
    value /= static_cast<double>(B);

    const bool rg = tape && probs->requires_grad;
    auto out = Tensor::scalar(value, rg);
    if (rg) {
        auto shared_plans = std::make_shared<std::vector<ClassPlan>>(std::move(plans));
        auto presents = std::make_shared<std::vector<int>>(std::move(image_present));
        tape->record(out, [probs, target, out, shared_plans, presents, B, K, plane] {
            const double g0 = out->grad[0] / static_cast<double>(B);
            for (const auto& plan : *shared_plans) {
                const double g = g0 / (*presents)[plan.b];
                double* gp = probs->grad.data() +
                             (static_cast<std::int64_t>(plan.b) * K + plan.c) * plane;
                for (std::int64_t r = 0; r < plane; ++r) {
                    const std::int64_t p = plan.order[r];
                    const bool fg = target[plan.b * plane + p] == plan.c;
                    gp[p] += g * (fg ? -plan.coeff[r] : plan.coeff[r]);
                }
            }
        });
    }
    return out;
}

std::pair<TensorPtr, JointLossSample> joint_loss(std::int64_t iteration, const JtOutputs& outputs,
                                                 const BatchTargets& targets,
                                                 const ClassWeights& weights, BcePairing pairing,
                                                 Tape* tape, RngState& rng) {
    check(iteration >= 1, "joint_loss: iteration must be >= 1, got ", iteration);
    check(outputs.full_seg != nullptr, "joint_loss: missing full segmentation output");
    check(outputs.binary_seg != nullptr, "joint_loss: missing binary segmentation output");
    check(outputs.presence != nullptr, "joint_loss: missing presence output");

    auto mce = weighted_cross_entropy(tape, outputs.full_seg, targets.seg, weights);

    auto bce = binary_cross_entropy(tape, outputs.presence, targets.presence);
    if (pairing == BcePairing::PresenceAndBinary) {
        auto mask_bce = binary_cross_entropy(tape, outputs.binary_seg, targets.binary);
        bce = add(tape, bce, mask_bce);
    }

    // 2-class softmax of the single-logit mask: (1-sigmoid, sigmoid)
    auto p_road = sigmoid(tape, outputs.binary_seg);
    auto p_bg = sub(tape, 1.0, p_road);
    auto probs2 = concat_channels(tape, {p_bg, p_road});
    std::vector<std::uint8_t> bin_ids(targets.binary.size());
    for (std::size_t i = 0; i < targets.binary.size(); ++i)
        bin_ids[i] = targets.binary[i] != 0.0 ? 1 : 0;
    auto lov = lovasz_softmax(tape, probs2, bin_ids);

    JointLossSample s;
    s.iteration = iteration;
    s.w1 = rng.uniform();
    s.w2 = rng.uniform();
    auto total = add(tape, add(tape, mce, mul(tape, bce, s.w1)), mul(tape, lov, s.w2));
    s.l_mce = mce->value();
    s.l_bce = bce->value();
    s.l_lovasz = lov->value();
    s.l_total = total->value();
    return {total, s};
}

std::string format_loss_line(const JointLossSample& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld %.17g %.17g %.17g %.17g %.17g %.17g",
                  static_cast<long long>(s.iteration), s.w1, s.w2, s.l_mce, s.l_bce, s.l_lovasz,
                  s.l_total);
    return buf;
}

JointLossSample parse_loss_line(const std::string& line) {
    JointLossSample s;
    std::istringstream is(line);
    long long it = 0;
    if (!(is >> it >> s.w1 >> s.w2 >> s.l_mce >> s.l_bce >> s.l_lovasz >> s.l_total))
        fail("loss log: malformed line: ", line);
    s.iteration = it;
    return s;
}

} // namespace ddcm
