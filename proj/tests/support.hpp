#pragma once

// Independent reference implementations used as test oracles, plus small
// fixtures shared by the unit and acceptance binaries. The oracles favour
// obviousness over speed: full edge scans, ordered maps, scalar loops.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "lmd/encoder.hpp"
#include "lmd/hamg.hpp"
#include "lmd/random.hpp"
#include "lmd/subgraph.hpp"
#include "lmd/synth.hpp"

namespace lmd::testing {

inline Timestamp abs_diff(Timestamp a, Timestamp b) { return a > b ? a - b : b - a; }

// ---- sampler ---------------------------------------------------------------

/// Re-scans the whole edge list for one event.
inline TimeAwareSubgraph brute_force_subgraph(const Hamg& g, const AuthEvent& ev, const SamplerConfig& cfg) {
    std::vector<NodeId> cores{ev.user, ev.device};
    if (ev.object) cores.push_back(*ev.object);
    const std::set<NodeId> core_set(cores.begin(), cores.end());

    std::set<NodeId> members(cores.begin(), cores.end());
    for (int hop = 0; hop < cfg.hops; ++hop) {
        const std::set<NodeId> frontier = members;
        for (const auto& e : g.edges()) {
            if (frontier.count(e.src)) members.insert(e.dst);
            if (frontier.count(e.dst)) members.insert(e.src);
        }
    }

    struct Agg {
        EdgeFeature feature{};
        std::uint32_t count = 0;
        Timestamp t = 0;
        EdgeId id = 0;
    };
    std::map<std::pair<NodeId, NodeId>, Agg> merged;
    for (EdgeId id = 0; id < g.edge_count(); ++id) {
        const auto& e = g.edge(id);
        if (!members.count(e.src) || !members.count(e.dst)) continue;
        if (abs_diff(e.t, ev.t) > cfg.tau) continue;
        const auto code = edge_feature_code(e);
        auto [it, fresh] = merged.try_emplace({e.src, e.dst});
        Agg& a = it->second;
        if (fresh) {
            a = Agg{code, 1, e.t, id};
            continue;
        }
        ++a.count;
        for (std::size_t c = 0; c < code.size(); ++c) a.feature[c] = std::max(a.feature[c], code[c]);
        const Timestamp da = abs_diff(a.t, ev.t), de = abs_diff(e.t, ev.t);
        if (de < da || (de == da && e.t < a.t)) a.t = e.t;
        a.id = std::min(a.id, id);
    }

    using Entry = std::pair<std::pair<NodeId, NodeId>, Agg>;
    std::vector<Entry> kept, core_aux;
    for (const auto& entry : merged) {
        const bool s = core_set.count(entry.first.first) != 0;
        const bool d = core_set.count(entry.first.second) != 0;
        (s != d ? core_aux : kept).push_back(entry);
    }
    std::sort(core_aux.begin(), core_aux.end(), [&](const Entry& x, const Entry& y) {
        const auto kx = std::make_tuple(-static_cast<std::int64_t>(x.second.count), abs_diff(x.second.t, ev.t),
                                        x.second.id);
        const auto ky = std::make_tuple(-static_cast<std::int64_t>(y.second.count), abs_diff(y.second.t, ev.t),
                                        y.second.id);
        return kx < ky;
    });
    if (core_aux.size() > cfg.k) core_aux.resize(cfg.k);
    kept.insert(kept.end(), core_aux.begin(), core_aux.end());

    std::set<NodeId> aux;
    for (const auto& [key, a] : kept) {
        if (!core_set.count(key.first)) aux.insert(key.first);
        if (!core_set.count(key.second)) aux.insert(key.second);
    }
    TimeAwareSubgraph sg;
    sg.event_id = ev.event_id;
    sg.t = ev.t;
    sg.label = ev.label;
    std::map<NodeId, std::uint32_t> local;
    for (NodeId c : cores) {
        local[c] = static_cast<std::uint32_t>(sg.nodes.size());
        sg.nodes.push_back({c, true, g.node(c).kind});
    }
    for (NodeId a : aux) {
        local[a] = static_cast<std::uint32_t>(sg.nodes.size());
        sg.nodes.push_back({a, false, g.node(a).kind});
    }
    for (const auto& [key, a] : kept) sg.edges.push_back({local[key.first], local[key.second], a.feature, a.count, a.t});
    std::sort(sg.edges.begin(), sg.edges.end(),
              [](const MergedEdge& x, const MergedEdge& y) { return std::tie(x.src, x.dst) < std::tie(y.src, y.dst); });
    return sg;
}

// ---- position encoding -----------------------------------------------------

/// Sums the probabilities of every walk of length s from i to j, for
/// s = 0..K-1, by explicit enumeration over the symmetrized adjacency.
inline std::vector<double> walk_enumeration(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                                            int K) {
    std::vector<std::set<std::size_t>> nbr(n);
    for (const auto& [a, b] : edges) {
        nbr[a].insert(b);
        nbr[b].insert(a);
    }
    auto step = [&](std::size_t from, std::size_t to) {
        if (nbr[from].empty()) return from == to ? 1.0 : 0.0;
        return nbr[from].count(to) ? 1.0 / static_cast<double>(nbr[from].size()) : 0.0;
    };
    const auto k = static_cast<std::size_t>(K);
    std::vector<double> out(n * n * k, 0.0);
    std::vector<std::size_t> path;
    // Depth-first over all node sequences of length s + 1 starting at i.
    auto walk = [&](auto&& self, std::size_t i, std::size_t s, double prob) -> void {
        const std::size_t len = path.size() - 1;
        if (len == s) {
            out[(i * n + path.back()) * k + s] += prob;
            return;
        }
        for (std::size_t next = 0; next < n; ++next) {
            const double p = step(path.back(), next);
            if (p == 0.0) continue;
            path.push_back(next);
            self(self, i, s, prob * p);
            path.pop_back();
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < k; ++s) {
            path.assign(1, i);
            walk(walk, i, s, 1.0);
        }
    }
    return out;
}

// ---- encoder ---------------------------------------------------------------

/// Scalar-loop forward pass in double. Returns the class probabilities and
/// fills the attention matrices of every local layer and global head.
struct ReferenceForward {
    std::vector<double> probabilities;
    std::vector<std::vector<double>> alpha;
    std::vector<std::vector<double>> beta;
};

inline ReferenceForward reference_forward(const EncoderInputs<double>& in, const ModelParams<double>& p) {
    const auto& cfg = p.cfg;
    const std::size_t n = in.n;
    const auto h = static_cast<std::size_t>(cfg.hidden);
    const auto dh = static_cast<std::size_t>(cfg.head_width());
    auto W = [&](const std::string& name) -> const std::vector<double>& { return p.values[p.index(name)]; };

    // y = a (r x c) * w (c x m)
    auto mul = [](const std::vector<double>& a, std::size_t r, std::size_t c, const std::vector<double>& w,
                  std::size_t m) {
        std::vector<double> y(r * m, 0.0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t q = 0; q < c; ++q) acc += a[i * c + q] * w[q * m + j];
                y[i * m + j] = acc;
            }
        return y;
    };

    ReferenceForward ref;
    std::vector<double> pooled(h, 0.0);

    if (!cfg.disable_local) {
        std::vector<double> cur(in.x.value().begin(), in.x.value().end());
        std::size_t width = in.x.cols();
        for (int l = 0; l < cfg.layers; ++l) {
            const std::string pre = "local." + std::to_string(l) + ".";
            const auto t = mul(cur, n, width, W(pre + "theta_n"), h);
            const auto& a = W(pre + "a");
            std::vector<double> alpha(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> score(n, 0.0);
                double mx = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) {
                    if (!in.neighbor_mask[i * n + j]) continue;
                    double e = 0.0;
                    for (std::size_t c = 0; c < h; ++c) e += t[i * h + c] * a[c] + t[j * h + c] * a[h + c];
                    score[j] = e > 0 ? e : 0.01 * e;
                    mx = std::max(mx, score[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if (in.neighbor_mask[i * n + j]) z += std::exp(score[j] - mx);
                for (std::size_t j = 0; j < n; ++j)
                    if (in.neighbor_mask[i * n + j]) alpha[i * n + j] = std::exp(score[j] - mx) / z;
            }
            const auto v = mul(cur, n, width, W(pre + "theta_alpha"), h);
            std::vector<double> next(n * h, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < h; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += alpha[i * n + j] * v[j * h + c];
                    next[i * h + c] = acc > 0 ? acc : std::expm1(acc);
                }
            ref.alpha.push_back(alpha);
            cur = next;
            width = h;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < h; ++c) pooled[c] += cur[i * h + c];
    }

    if (!cfg.disable_global) {
        const std::vector<double> xh(in.x_hat.value().begin(), in.x_hat.value().end());
        const std::vector<double> eh(in.e_hat.value().begin(), in.e_hat.value().end());
        auto X = mul(xh, n, in.x_hat.cols(), W("global.x_in.w"), h);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < h; ++c) X[i * h + c] += W("global.x_in.b")[c];
        auto E = mul(eh, n * n, in.e_hat.cols(), W("global.e_in.w"), h);
        for (std::size_t r = 0; r < n * n; ++r)
            for (std::size_t c = 0; c < h; ++c) E[r * h + c] += W("global.e_in.b")[c];

        std::vector<double> concat(n * h, 0.0);
        for (int head = 0; head < cfg.heads; ++head) {
            const std::string pre = "global." + std::to_string(head) + ".";
            const auto Q = mul(X, n, h, W(pre + "q"), dh);
            const auto K = mul(X, n, h, W(pre + "k"), dh);
            const auto V = mul(X, n, h, W(pre + "v"), dh);
            const auto G = mul(E, n * n, h, W(pre + "theta_e"), dh);
            const auto B = mul(E, n * n, h, W(pre + "theta_b"), dh);
            const auto& tb = W(pre + "theta_beta");
            const auto& tg = W(pre + "theta_g");

            std::vector<double> bij(n * n * dh);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t c = 0; c < dh; ++c) {
                        const std::size_t r = i * n + j;
                        const double u = (Q[i * dh + c] + K[j * dh + c]) * G[r * dh + c];
                        const double s = u >= 0 ? std::sqrt(u) : -std::sqrt(-u);
                        bij[r * dh + c] = std::max(0.0, s + B[r * dh + c]);
                    }
            std::vector<double> beta(n * n);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> score(n);
                double mx = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) acc += bij[(i * n + j) * dh + c] * tb[c];
                    score[j] = acc;
                    mx = std::max(mx, acc);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < n; ++j) z += std::exp(score[j] - mx);
                for (std::size_t j = 0; j < n; ++j) beta[i * n + j] = std::exp(score[j] - mx) / z;
            }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        double gate = 0.0;
                        for (std::size_t q = 0; q < dh; ++q) gate += bij[(i * n + j) * dh + q] * tg[q * dh + c];
                        acc += beta[i * n + j] * (V[j * dh + c] + gate);
                    }
                    concat[i * h + static_cast<std::size_t>(head) * dh + c] = acc;
                }
            ref.beta.push_back(beta);
        }
        const auto out = mul(concat, n, h, W("global.out.w"), h);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < h; ++c) pooled[c] += out[i * h + c];
    }

    const auto logits = mul(pooled, 1, h, W("head.theta_p"), 2);
    const double mx = std::max(logits[0], logits[1]);
    const double z = std::exp(logits[0] - mx) + std::exp(logits[1] - mx);
    ref.probabilities = {std::exp(logits[0] - mx) / z, std::exp(logits[1] - mx) / z};
    return ref;
}

// ---- gradient check --------------------------------------------------------

struct GradientCheck {
    double error = 0.0;
    double kink_distance = 0.0;
    double sqrt_distance = 0.0;
    int attempts = 0;
};

struct GradientCheckOptions {
    /// Smallest |x| allowed at a relu, leaky relu or signed sqrt input.
    double min_kink = 1e-4;
    int max_attempts = 50;
    /// First central-difference step; later steps shrink by 1.4.
    double eps = 1e-5;
    /// Relative-error denominator floor, per unit of loss.
    double floor = 1e-8;
};

/// Central differences at shrinking steps, Richardson-extrapolated to a
/// zero step (Ridders). Returns the tableau entry with the smallest
/// estimated error.
template <typename T, typename F>
T extrapolated_derivative(F&& at, T h) {
    constexpr int kRounds = 8;
    constexpr T kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2;
    T table[kRounds][kRounds];
    table[0][0] = (at(h) - at(-h)) / (2 * h);
    T best = table[0][0];
    T err = std::numeric_limits<T>::infinity();
    for (int i = 1; i < kRounds; ++i) {
        h /= kShrink;
        table[0][i] = (at(h) - at(-h)) / (2 * h);
        T fac = kShrink2;
        for (int j = 1; j <= i; ++j) {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1);
            fac *= kShrink2;
            const T e = std::max(std::abs(table[j][i] - table[j - 1][i]), std::abs(table[j][i] - table[j - 1][i - 1]));
            if (e <= err) {
                err = e;
                best = table[j][i];
            }
        }
        if (std::abs(table[i][i] - table[i - 1][i - 1]) >= kSafe * err) break;
    }
    return best;
}

/// Checks the double-precision analytic gradient of the full encoder loss
/// at a random parameter point against extrapolated central differences of
/// the same loss in long double. The wider type keeps the oracle's
/// roundoff far below the tolerance; extrapolation removes the curvature
/// term near signed sqrt inputs. Biases are randomised too, so no
/// pre-activation sits exactly on a kink; points closer than `min_kink` to
/// one are redrawn.
inline GradientCheck encoder_gradient_check(const TimeAwareSubgraph& g, std::size_t bits, const EncoderConfig& cfg,
                                            std::uint64_t seed, const GradientCheckOptions& opts = {}) {
    using Wide = long double;
    const auto in = augment_features<double>(g, bits, cfg.walk_length, cfg.disable_pos);
    const auto in_wide = augment_features<Wide>(g, bits, cfg.walk_length, cfg.disable_pos);
    const std::vector<int> label{g.label == Label::Malicious ? 1 : 0};
    GradientCheck out;
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        const auto point_seed = mix_seed(seed, static_cast<std::uint64_t>(attempt));
        auto params = ModelParams<double>::init(cfg, kNodeKindCount + bits, point_seed);
        Rng rng(mix_seed(point_seed, 0xb1a5));
        for (std::size_t i = 0; i < params.specs.size(); ++i) {
            const auto& name = params.specs[i].name;
            if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
                for (auto& v : params.values[i]) v = rng.uniform(-0.5, 0.5);
            }
        }
        auto bound = bind(params, true);
        for (auto& t : bound.tensors) t.zero_grad();
        bool clear;
        double loss_scale;
        {
            ad::KinkMonitor monitor;
            const auto loss = cross_entropy_loss(encode_subgraph(in, bound), std::span<const int>(label));
            ad::backward(loss);
            loss_scale = std::max(1.0, std::abs(loss.item()));
            out.kink_distance = monitor.min_distance();
            out.sqrt_distance = monitor.min_sqrt_distance();
            clear = out.kink_distance >= opts.min_kink && out.sqrt_distance >= opts.min_kink;
        }
        ++out.attempts;
        if (!clear) continue;

        const auto params_wide = params.cast<Wide>();
        auto bound_wide = bind(params_wide, false);
        const auto loss_wide = [&] {
            return cross_entropy_loss(encode_subgraph(in_wide, bound_wide), std::span<const int>(label)).item();
        };
        const Wide h = static_cast<Wide>(opts.eps);
        double worst = 0.0;
        for (std::size_t p = 0; p < bound.tensors.size(); ++p) {
            const auto grad = bound.tensors[p].grad();
            auto values = bound_wide.tensors[p].value();
            for (std::size_t c = 0; c < values.size(); ++c) {
                const Wide saved = values[c];
                const auto at = [&](Wide offset) {
                    values[c] = saved + offset;
                    const Wide v = loss_wide();
                    values[c] = saved;
                    return v;
                };
                const double numeric = static_cast<double>(extrapolated_derivative(at, h));
                const double rel =
                    std::abs(grad[c] - numeric) / std::max(opts.floor * loss_scale, std::abs(grad[c]) + std::abs(numeric));
                worst = std::max(worst, rel);
            }
        }
        out.error = worst;
        return out;
    }
    out.error = INFINITY;
    return out;
}

// ---- metrics ---------------------------------------------------------------

/// Fraction of (positive, negative) pairs ordered correctly, ties one half.
inline double auc_by_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
    double good = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) good += 1.0;
            else if (scores[i] == scores[j]) good += 0.5;
        }
    }
    return good / pairs;
}

// ---- fixtures --------------------------------------------------------------

/// Random subgraph with n nodes (3 cores), random kinds, edge codes and
/// counts. Global ids are distinct and below 2^bits.
inline TimeAwareSubgraph random_subgraph(Rng& rng, std::size_t n, std::size_t bits, double edge_prob) {
    TimeAwareSubgraph g;
    g.t = 1000;
    std::set<NodeId> used;
    const std::uint64_t id_space = std::uint64_t{1} << bits;
    for (std::size_t i = 0; i < n; ++i) {
        NodeId id;
        do {
            id = static_cast<NodeId>(rng.below(id_space));
        } while (!used.insert(id).second);
        NodeKind kind;
        if (i == 0) kind = NodeKind::User;
        else if (i == 1) kind = NodeKind::Host;
        else if (i == 2) kind = NodeKind::File;
        else kind = static_cast<NodeKind>(rng.below(kNodeKindCount));
        g.nodes.push_back({id, i < 3, kind});
    }
    for (std::uint32_t a = 0; a < n; ++a) {
        for (std::uint32_t b = 0; b < n; ++b) {
            if (a == b || !rng.bernoulli(edge_prob)) continue;
            MergedEdge e;
            e.src = a;
            e.dst = b;
            e.feature[rng.below(kInteractionCount)] = 1;
            e.feature[EdgeVocabulary::kAuthOffset + rng.below(kAuthTypeCount)] = 1;
            e.feature[EdgeVocabulary::kLogonOffset + rng.below(kLogonTypeCount)] = 1;
            e.feature[EdgeVocabulary::kOrientationOffset + rng.below(kOrientationCount)] = 1;
            e.feature[EdgeVocabulary::kSuccessOffset] = static_cast<std::uint8_t>(rng.below(2));
            e.count = static_cast<std::uint32_t>(1 + rng.below(5));
            e.t_repr = 1000;
            g.edges.push_back(e);
        }
    }
    return g;
}

/// Small encoder used where the default width would make oracles slow.
inline EncoderConfig small_encoder(int heads = 2) {
    EncoderConfig c;
    c.layers = 2;
    c.walk_length = 4;
    c.heads = heads;
    c.hidden = 4 * heads;
    c.dropout = 0.0;
    return c;
}

/// Fresh scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("lmd_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

} // namespace lmd::testing
