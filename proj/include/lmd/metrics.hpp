#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace lmd {

/// counts[actual][predicted], class 1 = malicious.
struct Confusion {
    std::array<std::array<std::size_t, 2>, 2> counts{};

    std::size_t tp() const noexcept { return counts[1][1]; }
    std::size_t fp() const noexcept { return counts[0][1]; }
    std::size_t fn() const noexcept { return counts[1][0]; }
    std::size_t tn() const noexcept { return counts[0][0]; }
    std::size_t total() const noexcept { return tp() + fp() + fn() + tn(); }

    void add(int actual, int predicted) { ++counts[static_cast<std::size_t>(actual)][static_cast<std::size_t>(predicted)]; }
    Confusion& operator+=(const Confusion& o);
    bool operator==(const Confusion&) const = default;
};

/// Per-class ratios; zero denominators give 0.
double class_precision(const Confusion& c, int cls) noexcept;
double class_recall(const Confusion& c, int cls) noexcept;
double class_f1(const Confusion& c, int cls) noexcept;

struct Metrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double accuracy = 0;
    double auc = 0;
    Confusion confusion;

    bool operator==(const Metrics&) const = default;
};

/// Macro-averaged precision, recall and F1 over both classes plus accuracy.
/// auc is left at 0.
Metrics metrics_from_confusion(const Confusion& c);

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws SingleClass unless both classes are present.
double compute_auc(std::span<const double> scores, std::span<const int> labels);

/// Hard predictions by comparing the malicious probability with 0.5
/// (argmax over two classes, ties to benign) and AUC from the scores.
Metrics evaluate_scores(std::span<const double> malicious_probability, std::span<const int> labels);

struct MetricSummary {
    Metrics mean;
    Metrics std;
};

/// Mean and population standard deviation over runs; the confusion of the
/// mean holds the summed counts.
MetricSummary summarize(std::span<const Metrics> runs);

nlohmann::json metrics_json(const Metrics& m);

} // namespace lmd
