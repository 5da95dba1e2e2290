#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lmd/checkpoint.hpp"
#include "lmd/encoder.hpp"
#include "lmd/error.hpp"
#include "support.hpp"

using namespace lmd;
using Pairs = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

namespace {

double diag(const std::vector<double>& p, std::size_t n, int K, std::size_t i, std::size_t s) {
    return p[(i * n + i) * static_cast<std::size_t>(K) + s];
}

TimeAwareSubgraph permuted_aux(const TimeAwareSubgraph& g, Rng& rng) {
    const std::size_t cores = g.core_count();
    std::vector<std::uint32_t> perm(g.nodes.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::vector<std::uint32_t> tail(perm.begin() + static_cast<std::ptrdiff_t>(cores), perm.end());
    rng.shuffle(tail);
    std::copy(tail.begin(), tail.end(), perm.begin() + static_cast<std::ptrdiff_t>(cores));
    TimeAwareSubgraph out = g;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) out.nodes[perm[i]] = g.nodes[i];
    for (auto& e : out.edges) {
        e.src = perm[e.src];
        e.dst = perm[e.dst];
    }
    return out;
}

} // namespace

TEST_CASE("return probabilities on small graphs") {
    const auto two = position_encoding(2, Pairs{{0, 1}}, 3);
    CHECK(diag(two, 2, 3, 0, 0) == 1.0);
    CHECK(diag(two, 2, 3, 0, 1) == 0.0);
    CHECK(diag(two, 2, 3, 0, 2) == 1.0);

    const auto tri = position_encoding(3, Pairs{{0, 1}, {1, 2}, {2, 0}}, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(diag(tri, 3, 3, i, 0) == doctest::Approx(1.0));
        CHECK(diag(tri, 3, 3, i, 1) == doctest::Approx(0.0));
        CHECK(diag(tri, 3, 3, i, 2) == doctest::Approx(0.5));
    }

    const auto iso = position_encoding(1, Pairs{}, 6);
    for (std::size_t s = 0; s < 6; ++s) CHECK(diag(iso, 1, 6, 0, s) == 1.0);
}

TEST_CASE("position encoding equals walk enumeration") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.below(6);
        const int K = 1 + static_cast<int>(rng.below(5));
        Pairs edges;
        for (std::uint32_t a = 0; a < n; ++a)
            for (std::uint32_t b = 0; b < n; ++b)
                if (a != b && rng.bernoulli(0.35)) edges.emplace_back(a, b);
        const auto got = position_encoding(n, edges, K);
        const auto want = testing::walk_enumeration(n, edges, K);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("augmented feature shapes") {
    Rng rng(2);
    auto g = testing::random_subgraph(rng, 5, 16, 0.2);
    const auto in = augment_features<double>(g, 16, 32, false);
    CHECK(in.x.rows() == 5);
    CHECK(in.x.cols() == 21);
    CHECK(in.x_hat.rows() == 5);
    CHECK(in.x_hat.cols() == 53);
    CHECK(in.e_hat.rows() == 25);
    CHECK(in.e_hat.cols() == 57);

    // Pairs without an edge carry only the position channels.
    const auto pos = compute_position_encoding(g, 32);
    std::set<std::pair<std::uint32_t, std::uint32_t>> linked;
    for (const auto& e : g.edges) linked.insert({e.src, e.dst});
    for (std::uint32_t i = 0; i < 5; ++i)
        for (std::uint32_t j = 0; j < 5; ++j) {
            if (linked.count({i, j})) continue;
            const std::size_t r = i * 5 + j;
            for (std::size_t c = 0; c < kEdgeInputDim; ++c) CHECK(in.e_hat.at(r, c) == 0.0);
            for (std::size_t s = 0; s < 32; ++s) CHECK(in.e_hat.at(r, kEdgeInputDim + s) == pos[r * 32 + s]);
        }

    const auto zeroed = augment_features<double>(g, 16, 32, true);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t s = 0; s < 32; ++s) CHECK(zeroed.x_hat.at(i, 21 + s) == 0.0);
}

TEST_CASE("forward pass matches the scalar reference") {
    Rng rng(77);
    for (int heads : {1, 2}) {
        for (int variant = 0; variant < 4; ++variant) {
            auto cfg = testing::small_encoder(heads);
            cfg.disable_local = variant == 1;
            cfg.disable_global = variant == 2;
            cfg.disable_pos = variant == 3;
            for (int trial = 0; trial < 5; ++trial) {
                const auto g = testing::random_subgraph(rng, 6, 7, 0.3);
                const auto params = ModelParams<double>::init(cfg, kNodeKindCount + 7, rng.next());
                const auto in = augment_features<double>(g, 7, cfg.walk_length, cfg.disable_pos);
                AttentionTrace trace;
                ForwardOptions opts;
                opts.trace = &trace;
                const auto out = encode_subgraph(in, bind(params, false), opts);
                const auto ref = testing::reference_forward(in, params);
                CHECK(std::abs(out.probabilities.at(0, 1) - ref.probabilities[1]) < 1e-10);
                REQUIRE(trace.alpha.size() == ref.alpha.size());
                REQUIRE(trace.beta.size() == ref.beta.size());
                for (std::size_t l = 0; l < ref.alpha.size(); ++l)
                    for (std::size_t i = 0; i < 36; ++i) CHECK(std::abs(trace.alpha[l][i] - ref.alpha[l][i]) < 1e-10);
                for (std::size_t h = 0; h < ref.beta.size(); ++h)
                    for (std::size_t i = 0; i < 36; ++i) CHECK(std::abs(trace.beta[h][i] - ref.beta[h][i]) < 1e-10);
            }
        }
    }
}

TEST_CASE("attention rows are normalised") {
    Rng rng(5);
    const auto cfg = testing::small_encoder(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = testing::random_subgraph(rng, 2 + rng.below(10), 8, 0.2);
        const auto params = ModelParams<double>::init(cfg, kNodeKindCount + 8, static_cast<std::uint64_t>(trial));
        AttentionTrace trace;
        ForwardOptions opts;
        opts.trace = &trace;
        encode_subgraph(augment_features<double>(g, 8, cfg.walk_length, false), bind(params, false), opts);
        const std::size_t n = g.nodes.size();
        for (const auto* list : {&trace.alpha, &trace.beta})
            for (const auto& m : *list)
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += m[i * n + j];
                    CHECK(std::abs(s - 1.0) < 1e-12);
                }
    }
}

TEST_CASE("a node without neighbours attends only to itself") {
    const auto cfg = testing::small_encoder(1);
    const auto params = ModelParams<double>::init(cfg, 6, 1);
    const auto bound = bind(params, false);
    const auto h = ad::Tensor<double>::constant(2, 6, {1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0});
    const std::vector<std::uint8_t> mask{1, 0, 0, 1};
    AttentionTrace trace;
    ForwardOptions opts;
    opts.trace = &trace;
    const auto out = local_attention_layer(h, mask, bound, 0, opts, nullptr);
    CHECK(trace.alpha[0] == std::vector<double>{1, 0, 0, 1});
    const auto proj = ad::matmul(h, bound["local.0.theta_alpha"]);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = proj.value()[i];
        CHECK(out.value()[i] == doctest::Approx(v > 0 ? v : std::expm1(v)));
    }
}

TEST_CASE("identical neighbours receive uniform attention") {
    const auto cfg = testing::small_encoder(1);
    const auto params = ModelParams<double>::init(cfg, 6, 3);
    std::vector<double> rows;
    for (int i = 0; i < 4; ++i) rows.insert(rows.end(), {0, 1, 0, 0, 1, 0});
    const auto h = ad::Tensor<double>::constant(4, 6, rows);
    const std::vector<std::uint8_t> mask(16, 1);
    AttentionTrace trace;
    ForwardOptions opts;
    opts.trace = &trace;
    local_attention_layer(h, mask, bind(params, false), 0, opts, nullptr);
    for (double a : trace.alpha[0]) CHECK(a == doctest::Approx(0.25));
}

TEST_CASE("a single node has unit global attention") {
    auto cfg = testing::small_encoder(1);
    const auto params = ModelParams<double>::init(cfg, kNodeKindCount + 3, 4);
    TimeAwareSubgraph g;
    g.nodes.push_back({5, true, NodeKind::User});
    const auto in = augment_features<double>(g, 3, cfg.walk_length, false);
    AttentionTrace trace;
    ForwardOptions opts;
    opts.trace = &trace;
    const auto bound = bind(params, false);
    const auto out = global_attention_layer(in.x_hat, in.e_hat, bound, opts, nullptr);
    REQUIRE(trace.beta.size() == 1);
    CHECK(trace.beta[0][0] == 1.0);
    const auto ref = testing::reference_forward(in, params);
    CHECK(ref.beta[0][0] == 1.0);
    CHECK(out.rows() == 1);
}

TEST_CASE("cores-only subgraph gives finite output") {
    const auto cfg = testing::small_encoder(2);
    const auto params = ModelParams<float>::init(cfg, kNodeKindCount + 4, 9);
    TimeAwareSubgraph g;
    g.nodes.push_back({1, true, NodeKind::User});
    g.nodes.push_back({2, true, NodeKind::Host});
    const auto out = encode_subgraph(augment_features<float>(g, 4, cfg.walk_length, false), bind(params, false));
    CHECK(std::isfinite(out.logits.at(0, 0)));
    CHECK(std::isfinite(out.logits.at(0, 1)));
}

TEST_CASE("predictions do not depend on auxiliary node order") {
    Rng rng(12);
    const auto cfg = testing::small_encoder(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = testing::random_subgraph(rng, 7, 6, 0.3);
        const auto params = ModelParams<double>::init(cfg, kNodeKindCount + 6, 100 + static_cast<std::uint64_t>(trial));
        const auto bound = bind(params, false);
        const double a =
            encode_subgraph(augment_features<double>(g, 6, cfg.walk_length, false), bound).probabilities.at(0, 1);
        const auto shuffled = permuted_aux(g, rng);
        const double b = encode_subgraph(augment_features<double>(shuffled, 6, cfg.walk_length, false), bound)
                             .probabilities.at(0, 1);
        CHECK(std::abs(a - b) < 1e-12);
    }
}

TEST_CASE("full encoder gradient matches finite differences") {
    Rng rng(6);
    auto g = testing::random_subgraph(rng, 5, 6, 0.3);
    g.label = Label::Malicious;
    const auto check = testing::encoder_gradient_check(g, 6, testing::small_encoder(2), 1);
    CHECK(check.error < 1e-4);
}

TEST_CASE("encoder configuration is validated") {
    EncoderConfig c;
    c.disable_local = c.disable_global = true;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.walk_length = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(nlohmann::json(EncoderConfig{}).get<EncoderConfig>() == EncoderConfig{});
}

TEST_CASE("ablations change which parameters matter") {
    Rng rng(4);
    const auto g = testing::random_subgraph(rng, 6, 6, 0.3);
    auto cfg = testing::small_encoder(2);
    cfg.disable_global = true;
    auto params = ModelParams<double>::init(cfg, kNodeKindCount + 6, 2);
    const auto in = augment_features<double>(g, 6, cfg.walk_length, false);
    const double before = encode_subgraph(in, bind(params, false)).probabilities.at(0, 1);
    for (auto& v : params.values[params.index("global.0.q")]) v += 1.0;
    CHECK(encode_subgraph(in, bind(params, false)).probabilities.at(0, 1) == before);
    for (auto& v : params.values[params.index("local.1.theta_alpha")]) v += 1.0;
    CHECK(encode_subgraph(in, bind(params, false)).probabilities.at(0, 1) != before);
}

TEST_CASE("checkpoints round-trip and reject mismatched shapes") {
    Checkpoint ck;
    ck.params = ModelParams<float>::init(testing::small_encoder(2), 12, 5);
    ck.meta = {{"seed", 5}};
    const auto bytes = encode_checkpoint(ck);
    CHECK(decode_checkpoint(bytes) == ck);
    CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);

    // A tensor whose shape disagrees with the stored config.
    Checkpoint bad = ck;
    bad.params.specs[0].rows += 1;
    bad.params.values[0].resize(bad.params.specs[0].rows * bad.params.specs[0].cols);
    CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(bad)), ShapeMismatch);

    auto damaged = bytes;
    damaged[10] ^= 1;
    CHECK_THROWS_AS(decode_checkpoint(damaged), ChecksumMismatch);
}
