#include "lmd/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lmd/error.hpp"
#include "lmd/random.hpp"

namespace lmd {

void TrainConfig::validate() const {
    double total = 0.0;
    for (double r : split) {
        if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                       {"max_epochs", c.max_epochs}, {"patience", c.patience},
                       {"seeds", c.seeds},           {"split", c.split},
                       {"class_weight", c.class_weight}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.seeds = j.value("seeds", d.seeds);
    c.split = j.value("split", d.split);
    c.class_weight = j.value("class_weight", d.class_weight);
}

Split split_dataset(std::span<const int> labels, const std::array<double, 3>& ratios, std::uint64_t seed) {
    Split s;
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) members.push_back(i);
        }
        if (members.size() < 3) {
            throw EmptyClass("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                             " samples, fewer than the three splits");
        }
        Rng rng(mix_seed(seed, 0x5e11 + static_cast<std::uint64_t>(cls)));
        rng.shuffle(members);
        const auto n = static_cast<double>(members.size());
        auto n_train = static_cast<std::size_t>(std::llround(n * ratios[0]));
        auto n_val = static_cast<std::size_t>(std::llround(n * ratios[1]));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 2);
        n_val = std::clamp<std::size_t>(n_val, 1, members.size() - n_train - 1);
        s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.val.insert(s.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                     members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<int> dataset_labels(const Dataset& ds) {
    std::vector<int> labels;
    labels.reserve(ds.samples.size());
    for (const auto& s : ds.samples) labels.push_back(s.label == Label::Malicious ? 1 : 0);
    return labels;
}

namespace {

void check_compatible(const ModelParams<float>& params, const Dataset& ds) {
    if (params.node_dim != ds.header.node_feature_dim()) {
        throw ConfigError("model expects node features of width " + std::to_string(params.node_dim) +
                          " but the dataset provides " + std::to_string(ds.header.node_feature_dim()));
    }
}

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr;
    long step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    Adam(const ModelParams<float>& p, double learning_rate) : lr(learning_rate) {
        for (const auto& t : p.values) {
            m.emplace_back(t.size(), 0.0f);
            v.emplace_back(t.size(), 0.0f);
        }
    }

    void apply(ModelParams<float>& p, const std::vector<std::vector<float>>& grad) {
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t t = 0; t < p.values.size(); ++t) {
            auto& w = p.values[t];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double g = grad[t][i];
                m[t][i] = static_cast<float>(beta1 * m[t][i] + (1.0 - beta1) * g);
                v[t][i] = static_cast<float>(beta2 * v[t][i] + (1.0 - beta2) * g * g);
                const double mh = m[t][i] / c1;
                const double vh = v[t][i] / c2;
                w[i] = static_cast<float>(w[i] - lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }
};

} // namespace

TrainResult train_model(const Dataset& ds, const Split& split, const EncoderConfig& enc, const TrainConfig& cfg,
                        std::uint64_t seed, const WorkerPool& pool, const EpochCallback& on_epoch) {
    cfg.validate();
    enc.validate();
    if (split.train.empty()) throw EmptyClass("training split is empty");
    const auto labels = dataset_labels(ds);
    const std::size_t bits = ds.header.id_bits();

    std::array<double, 2> class_weight{1.0, 1.0};
    if (cfg.class_weight) {
        std::array<std::size_t, 2> counts{0, 0};
        for (auto i : split.train) ++counts[static_cast<std::size_t>(labels[i])];
        for (std::size_t c = 0; c < 2; ++c) {
            class_weight[c] = counts[c] == 0 ? 0.0
                                             : static_cast<double>(split.train.size()) /
                                                   (2.0 * static_cast<double>(counts[c]));
        }
    }

    ModelParams<float> params = ModelParams<float>::init(enc, ds.header.node_feature_dim(), seed);
    Adam adam(params, cfg.learning_rate);
    TrainResult result;
    result.best = params;
    double best_f1 = -1.0;
    int since_best = 0;
    std::size_t batch_counter = 0;

    std::vector<std::size_t> order = split.train;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng(mix_seed(seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch))).shuffle(order);
        double loss_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            std::vector<std::vector<std::vector<float>>> grads(count);
            std::vector<double> losses(count);
            pool.parallel_for(count, [&](std::size_t b) {
                const std::size_t idx = order[start + b];
                const auto inputs = augment_features<float>(ds.samples[idx], bits, enc.walk_length, enc.disable_pos);
                const auto bound = bind(params, true);
                ForwardOptions opts;
                opts.training = true;
                opts.dropout_seed = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(epoch)), idx);
                const auto out = encode_subgraph(inputs, bound, opts);
                const int y = labels[idx];
                const auto loss = cross_entropy_loss(out, std::span<const int>(&y, 1));
                ad::backward(loss);
                losses[b] = loss.item();
                auto& g = grads[b];
                g.reserve(bound.tensors.size());
                for (const auto& t : bound.tensors) g.emplace_back(t.grad().begin(), t.grad().end());
            });

            std::vector<std::vector<float>> total(params.values.size());
            for (std::size_t t = 0; t < total.size(); ++t) total[t].assign(params.values[t].size(), 0.0f);
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < count; ++b) {
                const double w = class_weight[static_cast<std::size_t>(labels[order[start + b]])];
                batch_loss += w * losses[b];
                const auto scale = static_cast<float>(w / static_cast<double>(count));
                for (std::size_t t = 0; t < total.size(); ++t) {
                    for (std::size_t i = 0; i < total[t].size(); ++i) total[t][i] += scale * grads[b][t][i];
                }
            }
            batch_loss /= static_cast<double>(count);
            bool finite = std::isfinite(batch_loss);
            for (const auto& t : total) {
                for (float x : t) finite = finite && std::isfinite(x);
            }
            if (!finite) {
                throw NonFiniteLoss(batch_counter, "non-finite loss or gradient in batch " +
                                                       std::to_string(batch_counter) + " (epoch " +
                                                       std::to_string(epoch) + ")");
            }
            adam.apply(params, total);
            loss_total += batch_loss * static_cast<double>(count);
            ++batch_counter;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_total / static_cast<double>(order.size());
        if (!split.val.empty()) {
            const auto m = evaluate(params, ds, split.val, pool);
            rec.val_f1 = m.f1;
            rec.val_auc = m.auc;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_f1 > best_f1) {
            best_f1 = rec.val_f1;
            result.best = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

std::vector<double> predict(const ModelParams<float>& params, const Dataset& ds, std::span<const std::size_t> indices,
                            const WorkerPool& pool) {
    check_compatible(params, ds);
    const std::size_t bits = ds.header.id_bits();
    const auto bound = bind(params, false);
    std::vector<double> out(indices.size());
    pool.parallel_for(indices.size(), [&](std::size_t i) {
        const auto inputs =
            augment_features<float>(ds.samples[indices[i]], bits, params.cfg.walk_length, params.cfg.disable_pos);
        out[i] = encode_subgraph(inputs, bound).probabilities.at(0, 1);
    });
    return out;
}

Metrics evaluate(const ModelParams<float>& params, const Dataset& ds, std::span<const std::size_t> indices,
                 const WorkerPool& pool) {
    const auto scores = predict(params, ds, indices, pool);
    const auto all = dataset_labels(ds);
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (auto i : indices) labels.push_back(all[i]);
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) c.add(labels[i], scores[i] > 0.5 ? 1 : 0);
    Metrics m = metrics_from_confusion(c);
    bool both = false;
    for (int y : labels) both = both || y != labels.front();
    m.auc = both ? compute_auc(scores, labels) : std::nan("");
    return m;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_f1,val_auc\n";
    for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_f1 << ',' << r.val_auc << '\n';
    return out.str();
}

} // namespace lmd
