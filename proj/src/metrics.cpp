#include "lmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmd/error.hpp"

namespace lmd {

Confusion& Confusion::operator+=(const Confusion& o) {
    for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t p = 0; p < 2; ++p) counts[a][p] += o.counts[a][p];
    }
    return *this;
}

namespace {

double ratio(std::size_t num, std::size_t den) noexcept {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

double class_precision(const Confusion& c, int cls) noexcept {
    const auto k = static_cast<std::size_t>(cls);
    return ratio(c.counts[k][k], c.counts[0][k] + c.counts[1][k]);
}

double class_recall(const Confusion& c, int cls) noexcept {
    const auto k = static_cast<std::size_t>(cls);
    return ratio(c.counts[k][k], c.counts[k][0] + c.counts[k][1]);
}

double class_f1(const Confusion& c, int cls) noexcept {
    const double p = class_precision(c, cls);
    const double r = class_recall(c, cls);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

Metrics metrics_from_confusion(const Confusion& c) {
    Metrics m;
    m.confusion = c;
    m.precision = (class_precision(c, 0) + class_precision(c, 1)) / 2.0;
    m.recall = (class_recall(c, 0) + class_recall(c, 1)) / 2.0;
    m.f1 = (class_f1(c, 0) + class_f1(c, 1)) / 2.0;
    m.accuracy = ratio(c.tp() + c.tn(), c.total());
    return m;
}

double compute_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeMismatch("compute_auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t q = i; q < j; ++q) {
            if (labels[order[q]] == 1) {
                positive_rank_sum += mid_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) throw SingleClass("AUC needs both positive and negative samples");
    const double np = static_cast<double>(positives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

Metrics evaluate_scores(std::span<const double> malicious_probability, std::span<const int> labels) {
    if (malicious_probability.size() != labels.size()) {
        throw ShapeMismatch("evaluate: scores and labels differ in length");
    }
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) c.add(labels[i], malicious_probability[i] > 0.5 ? 1 : 0);
    Metrics m = metrics_from_confusion(c);
    m.auc = compute_auc(malicious_probability, labels);
    return m;
}

MetricSummary summarize(std::span<const Metrics> runs) {
    MetricSummary s;
    if (runs.empty()) return s;
    const double n = static_cast<double>(runs.size());
    auto field = [&](auto member) {
        double mean = 0.0;
        for (const auto& r : runs) mean += r.*member;
        mean /= n;
        double var = 0.0;
        for (const auto& r : runs) var += (r.*member - mean) * (r.*member - mean);
        s.mean.*member = mean;
        s.std.*member = std::sqrt(var / n);
    };
    field(&Metrics::precision);
    field(&Metrics::recall);
    field(&Metrics::f1);
    field(&Metrics::accuracy);
    field(&Metrics::auc);
    for (const auto& r : runs) s.mean.confusion += r.confusion;
    return s;
}

nlohmann::json metrics_json(const Metrics& m) {
    return {{"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"accuracy", m.accuracy},
            {"auc", m.auc},
            {"confusion", {{"tp", m.confusion.tp()}, {"fp", m.confusion.fp()}, {"fn", m.confusion.fn()},
                           {"tn", m.confusion.tn()}}}};
}

} // namespace lmd
