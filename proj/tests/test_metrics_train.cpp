#include <doctest.h>

#include <cmath>

#include "lmd/checkpoint.hpp"
#include "lmd/error.hpp"
#include "lmd/metrics.hpp"
#include "lmd/train.hpp"
#include "support.hpp"

using namespace lmd;

namespace {

Confusion confusion(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
    Confusion c;
    c.counts[1][1] = tp;
    c.counts[0][1] = fp;
    c.counts[1][0] = fn;
    c.counts[0][0] = tn;
    return c;
}

// Two motifs: benign samples are a user logging into one host; malicious
// samples are a star of auxiliary hosts reached with NTLM.
Dataset toy_dataset(std::size_t per_class) {
    Dataset ds;
    ds.header.graph_nodes = 64;
    Rng rng(1);
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const bool bad = i % 2 == 1;
        TimeAwareSubgraph g;
        g.event_id = static_cast<std::uint32_t>(i);
        g.label = bad ? Label::Malicious : Label::Benign;
        g.nodes.push_back({static_cast<NodeId>(rng.below(20)), true, NodeKind::User});
        g.nodes.push_back({static_cast<NodeId>(20 + rng.below(20)), true, NodeKind::Host});
        MergedEdge e;
        e.src = 0;
        e.dst = 1;
        e.count = 1;
        e.feature[EdgeVocabulary::kAuthOffset + index_of(bad ? AuthType::NTLM : AuthType::Kerberos)] = 1;
        g.edges.push_back(e);
        if (bad) {
            for (std::uint32_t k = 0; k < 3; ++k) {
                g.nodes.push_back({static_cast<NodeId>(40 + 3 * (i % 7) + k), false, NodeKind::Host});
                MergedEdge a = e;
                a.dst = 2 + k;
                g.edges.push_back(a);
            }
        }
        ds.samples.push_back(g);
    }
    return ds;
}

} // namespace

TEST_CASE("confusion arithmetic") {
    const auto c = confusion(3, 1, 1, 5);
    CHECK(class_precision(c, 1) == doctest::Approx(0.75));
    CHECK(class_recall(c, 1) == doctest::Approx(0.75));
    const auto m = metrics_from_confusion(c);
    CHECK(m.accuracy == doctest::Approx(0.8));

    const auto perfect = metrics_from_confusion(confusion(4, 0, 0, 6));
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.accuracy == 1.0);
    const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
    const std::vector<int> y{1, 1, 0, 0};
    CHECK(evaluate_scores(s, y).auc == 1.0);

    const auto all_benign = metrics_from_confusion(confusion(0, 0, 10, 90));
    CHECK(class_recall(all_benign.confusion, 1) == 0.0);
    CHECK(all_benign.recall == doctest::Approx(0.5));
}

TEST_CASE("AUC examples and the pair-counting oracle") {
    const std::vector<double> s{0.9, 0.4, 0.6, 0.1};
    const std::vector<int> y{1, 1, 0, 0};
    CHECK(compute_auc(s, y) == doctest::Approx(0.75));
    const std::vector<double> flat(4, 0.3);
    CHECK(compute_auc(flat, y) == 0.5);
    const std::vector<int> one_class(4, 1);
    CHECK_THROWS_AS(compute_auc(s, one_class), SingleClass);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < 60; ++i) {
            scores.push_back(static_cast<double>(rng.below(8)) / 8.0);
            labels.push_back(i < 2 ? i : static_cast<int>(rng.below(2)));
        }
        CHECK(compute_auc(scores, labels) == doctest::Approx(testing::auc_by_pairs(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("summaries use the population standard deviation") {
    Metrics a, b;
    a.f1 = 0.8;
    b.f1 = 1.0;
    a.confusion = confusion(1, 0, 0, 1);
    b.confusion = confusion(2, 0, 0, 2);
    const std::vector<Metrics> runs{a, b};
    const auto s = summarize(runs);
    CHECK(s.mean.f1 == doctest::Approx(0.9));
    CHECK(s.std.f1 == doctest::Approx(0.1));
    CHECK(s.mean.confusion.tp() == 3);
}

TEST_CASE("stratified split sizes") {
    std::vector<int> labels(17400, 0);
    for (std::size_t i = 0; i < 400; ++i) labels[i * 40] = 1;
    const auto s = split_dataset(labels, {0.6, 0.2, 0.2}, 0);
    CHECK(s.train.size() == 10440);
    CHECK(s.val.size() == 3480);
    CHECK(s.test.size() == 3480);
    auto positives = [&](const std::vector<std::size_t>& idx) {
        std::size_t c = 0;
        for (auto i : idx) c += static_cast<std::size_t>(labels[i]);
        return c;
    };
    CHECK(positives(s.train) == 240);
    CHECK(positives(s.val) == 80);
    CHECK(positives(s.test) == 80);
    const auto again = split_dataset(labels, {0.6, 0.2, 0.2}, 0);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);

    const std::vector<int> tiny{0, 0, 0, 1, 1};
    CHECK_THROWS_AS(split_dataset(tiny, {0.6, 0.2, 0.2}, 0), EmptyClass);
}

TEST_CASE("training configuration is validated") {
    TrainConfig c;
    c.split = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(nlohmann::json(TrainConfig{}).get<TrainConfig>() == TrainConfig{});
}

TEST_CASE("training separates two motifs and is reproducible") {
    const auto ds = toy_dataset(40);
    const auto split = split_dataset(dataset_labels(ds), {0.6, 0.2, 0.2}, 0);
    auto enc = testing::small_encoder(2);
    enc.dropout = 0.1;
    TrainConfig tc;
    tc.max_epochs = 5;
    tc.patience = 5;
    tc.learning_rate = 0.01;
    tc.batch_size = 8;
    WorkerPool pool(2);
    const auto a = train_model(ds, split, enc, tc, 3, pool);
    REQUIRE(!a.history.empty());
    CHECK(a.history.back().train_loss < std::log(2.0));
    const auto b = train_model(ds, split, enc, tc, 3, WorkerPool(1));
    CHECK(a.best == b.best);
    CHECK(encode_checkpoint({a.best, {}}) == encode_checkpoint({b.best, {}}));
    const auto m = evaluate(a.best, ds, split.test, pool);
    CHECK(m.f1 > 0.9);
    CHECK(history_csv(a.history).rfind("epoch,train_loss,val_f1,val_auc\n", 0) == 0);
}

TEST_CASE("models refuse datasets of another width") {
    const auto ds = toy_dataset(5);
    const auto params = ModelParams<float>::init(testing::small_encoder(2), 3, 0);
    const std::vector<std::size_t> idx{0};
    CHECK_THROWS_AS(predict(params, ds, idx, WorkerPool(1)), ConfigError);
}
