#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmd/encoder.hpp"
#include "lmd/metrics.hpp"
#include "lmd/parallel.hpp"
#include "lmd/subgraph.hpp"

namespace lmd {

struct TrainConfig {
    std::size_t batch_size = 16;
    double learning_rate = 0.0005;
    int max_epochs = 200;
    int patience = 20;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::array<double, 3> split{0.6, 0.2, 0.2};
    /// Weight each class by N / (2 N_c) in the loss.
    bool class_weight = false;

    /// Throws ConfigError unless the split ratios are positive and sum to 1,
    /// batch_size >= 1, learning_rate > 0, max_epochs >= 1 and patience >= 1.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Stratified split by label. Each class is shuffled with the seed and cut
/// at round(n * r_train), round(n * r_val); the test split takes the rest.
/// Index lists are returned in ascending order. Throws EmptyClass when a
/// class has fewer than three samples.
Split split_dataset(std::span<const int> labels, const std::array<double, 3>& ratios, std::uint64_t seed);

std::vector<int> dataset_labels(const Dataset& ds);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_f1 = 0;
    double val_auc = 0;
};

struct TrainResult {
    ModelParams<float> best;
    int best_epoch = 0;
    std::vector<EpochRecord> history;
};

/// Called after every epoch; used for progress reporting.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the mean cross-entropy; keeps the parameters with the
/// best validation macro-F1 and stops after `patience` epochs without
/// improvement. Throws NonFiniteLoss with the batch number on NaN or inf.
TrainResult train_model(const Dataset& ds, const Split& split, const EncoderConfig& enc, const TrainConfig& cfg,
                        std::uint64_t seed, const WorkerPool& pool, const EpochCallback& on_epoch = {});

/// Malicious-class probability for each listed sample, in list order.
std::vector<double> predict(const ModelParams<float>& params, const Dataset& ds, std::span<const std::size_t> indices,
                            const WorkerPool& pool);

Metrics evaluate(const ModelParams<float>& params, const Dataset& ds, std::span<const std::size_t> indices,
                 const WorkerPool& pool);

std::string history_csv(const std::vector<EpochRecord>& history);

} // namespace lmd
