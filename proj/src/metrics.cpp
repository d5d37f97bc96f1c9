#include "ddcm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddcm/error.hpp"

namespace ddcm {

ConfusionMatrix::ConfusionMatrix(int k) : k_(k) {
    check(k >= 1, "confusion matrix: need at least one class");
    counts_.assign(static_cast<std::size_t>(k) * k, 0);
}

void ConfusionMatrix::add(int ref, int pred, std::int64_t n) {
    check(ref >= 0 && ref < k_ && pred >= 0 && pred < k_, "confusion matrix: class pair (", ref,
          ",", pred, ") out of range for K=", k_);
    counts_[static_cast<std::size_t>(ref) * k_ + pred] += n;
}

std::int64_t ConfusionMatrix::at(int ref, int pred) const {
    return counts_[static_cast<std::size_t>(ref) * k_ + pred];
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

ConfusionMatrix confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& ref, int k, int ignore_id) {
    check(pred.size() == ref.size(), "confusion: prediction has ", pred.size(),
          " pixels, reference has ", ref.size());
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (ignore_id >= 0 && ref[i] == ignore_id) continue;
        cm.add(ref[i], pred[i]);
    }
    return cm;
}

MetricsReport report(const ConfusionMatrix& cm) {
    const int K = cm.classes();
    const std::int64_t total = cm.total();
    check(total > 0, "report: empty confusion matrix");

    MetricsReport r;
    r.f1.assign(K, std::nan(""));
    r.iou.assign(K, std::nan(""));
    r.defined.assign(K, false);

    std::int64_t trace = 0;
    double f1_sum = 0.0, iou_sum = 0.0;
    int defined = 0;
    for (int c = 0; c < K; ++c) {
        const std::int64_t tp = cm.at(c, c);
        trace += tp;
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < K; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::int64_t fp = col - tp;
        const std::int64_t fn = row - tp;
        if (tp + fp + fn == 0) continue; // absent everywhere: excluded from means
        r.defined[c] = true;
        r.f1[c] = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        r.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        f1_sum += r.f1[c];
        iou_sum += r.iou[c];
        ++defined;
    }
    check(defined > 0, "report: no class has support");
    r.oa = static_cast<double>(trace) / static_cast<double>(total);
    r.mf1 = f1_sum / defined;
    r.miou = iou_sum / defined;
    return r;
}

std::string format_report(const MetricsReport& r, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    char buf[160];
    os << "class            F1       IoU\n";
    for (std::size_t c = 0; c < r.f1.size(); ++c) {
        const std::string name =
            c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
        if (r.defined[c])
            std::snprintf(buf, sizeof buf, "%-14s %8.4f %8.4f\n", name.c_str(), r.f1[c],
                          r.iou[c]);
        else
            std::snprintf(buf, sizeof buf, "%-14s %8s %8s  (absent, excluded from means)\n",
                          name.c_str(), "-", "-");
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "OA %.4f  mF1 %.4f  mIoU %.4f\n", r.oa, r.mf1, r.miou);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "(published road-mapping reference: mF1 %.3f, mIoU %.3f; context only)\n",
                  kReferenceLidarMF1, kReferenceLidarMIoU);
    os << buf;
    return os.str();
}

void write_metrics_kv(const std::string& path, const MetricsReport& r) {
    std::ofstream f(path, std::ios::trunc);
    check(f.good(), "write_metrics_kv: cannot open ", path);
    char buf[96];
    std::snprintf(buf, sizeof buf, "oa=%.17g\nmf1=%.17g\nmiou=%.17g\n", r.oa, r.mf1, r.miou);
    f << buf;
    for (std::size_t c = 0; c < r.f1.size(); ++c) {
        if (r.defined[c])
            std::snprintf(buf, sizeof buf, "f1_%zu=%.17g\niou_%zu=%.17g\n", c, r.f1[c], c,
                          r.iou[c]);
        else
            std::snprintf(buf, sizeof buf, "f1_%zu=undefined\niou_%zu=undefined\n", c, c);
        f << buf;
    }
    check(f.good(), "write_metrics_kv: write failed for ", path);
}

} // namespace ddcm
