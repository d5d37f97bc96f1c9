#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddcm/arch.hpp"
#include "ddcm/rng.hpp"
#include "ddcm/tensor.hpp"

namespace ddcm {

struct ClassWeights {
    std::vector<double> weights;     // median(f)/f_c
    std::vector<double> frequencies; // the f_c the weights came from

    static ClassWeights uniform(int k);
};

// Median-frequency balancing. Errors on a zero-count class (floor the
// count or drop the class before calling). Even-length medians average
// the two central order statistics.
ClassWeights median_frequency_weights(const std::vector<double>& frequencies);

// Mean over pixels of w[target] * (-log softmax(logits)[target]).
// logits (B,K,H,W), target (B*H*W) class ids.
TensorPtr weighted_cross_entropy(Tape* tape, const TensorPtr& logits,
                                 const std::vector<std::uint8_t>& target,
                                 const ClassWeights& weights);

// Mean over elements of the log-space-stable binary cross entropy on
// logits; target values must be 0 or 1.
TensorPtr binary_cross_entropy(Tape* tape, const TensorPtr& logits,
                               const std::vector<double>& target);

// Lovasz extension of the Jaccard loss over softmax probabilities
// (B,K,H,W); per image, per class present in the target: errors
// |1_{y=c} - p_c| sorted descending, dotted with the Jaccard-extension
// gradient; averaged over present classes, then over images. Sort ties
// keep the earlier pixel first.
TensorPtr lovasz_softmax(Tape* tape, const TensorPtr& probs,
                         const std::vector<std::uint8_t>& target);

struct JointLossSample {
    std::int64_t iteration = 0;
    double w1 = 0.0, w2 = 0.0;
    double l_mce = 0.0, l_bce = 0.0, l_lovasz = 0.0, l_total = 0.0;
};

// Which auxiliary pairing the BCE term carries; the Lovasz term always
// scores the binary-mask head through its 2-class softmax.
enum class BcePairing {
    Presence,          // L_bce = multi-label BCE on the presence logits
    PresenceAndBinary, // + pixel BCE on the binary-mask logits
};

struct BatchTargets {
    int batch = 0, num_classes = 0, height = 0, width = 0;
    std::vector<std::uint8_t> seg; // (B,H,W)
    std::vector<double> binary;    // (B*H*W), 0/1
    std::vector<double> presence;  // (B*(K-1)), 0/1
};

// Draws w1 then w2 from rng (uniform in [0,1]) and composes
// total = (mce + w1*bce) + w2*lovasz on the tape. All three heads must be
// present in `outputs`.
std::pair<TensorPtr, JointLossSample> joint_loss(std::int64_t iteration, const JtOutputs& outputs,
                                                 const BatchTargets& targets,
                                                 const ClassWeights& weights, BcePairing pairing,
                                                 Tape* tape, RngState& rng);

// Newline-delimited loss log, one sample per line:
// iteration w1 w2 l_mce l_bce l_lovasz l_total  (%.17g, space separated)
std::string format_loss_line(const JointLossSample& s);
JointLossSample parse_loss_line(const std::string& line);

} // namespace ddcm
