#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddcm {

// K x K counts, rows = reference class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int k);

    void add(int ref, int pred, std::int64_t n = 1);
    std::int64_t at(int ref, int pred) const;
    std::int64_t total() const;
    int classes() const { return k_; }

private:
    int k_;
    std::vector<std::int64_t> counts_;
};

// ignore_id < 0 disables skipping.
ConfusionMatrix confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& ref, int k, int ignore_id = -1);

struct MetricsReport {
    double oa = 0.0;
    double mf1 = 0.0;
    double miou = 0.0;
    std::vector<double> f1, iou;  // per class; NaN when undefined
    std::vector<bool> defined;    // false when the class is absent from both
                                  // prediction and reference (excluded from means)
};

// F1 = 2TP/(2TP+FP+FN), IoU = TP/(TP+FP+FN), OA = trace/total; means are
// unweighted over defined classes.
MetricsReport report(const ConfusionMatrix& cm);

std::string format_report(const MetricsReport& r, const std::vector<std::string>& class_names);
void write_metrics_kv(const std::string& path, const MetricsReport& r);

// Published benchmark scores of the joint-task road-mapping model, kept
// for report context only; nothing in this toolkit is asserted against
// them.
inline constexpr double kReferenceLidarMF1 = 0.696;
inline constexpr double kReferenceLidarMIoU = 0.592;

} // namespace ddcm
