#include "lmd/encoder.hpp"

#include <cmath>

#include "lmd/error.hpp"
#include "lmd/random.hpp"

namespace lmd {

using ad::Tensor;

void EncoderConfig::validate() const {
    if (walk_length < 1) throw ConfigError("walk length K must be at least 1");
    if (layers < 1) throw ConfigError("at least one local attention layer is required");
    if (heads < 1 || hidden < 1 || hidden % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden (" + std::to_string(hidden) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (disable_local && disable_global) throw ConfigError("cannot disable both the local and the global branch");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = nlohmann::json{{"layers", c.layers},
                       {"walk_length", c.walk_length},
                       {"heads", c.heads},
                       {"hidden", c.hidden},
                       {"dropout", c.dropout},
                       {"disable_local", c.disable_local},
                       {"disable_global", c.disable_global},
                       {"disable_pos", c.disable_pos}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
    EncoderConfig d;
    c.layers = j.value("layers", d.layers);
    c.walk_length = j.value("walk_length", d.walk_length);
    c.heads = j.value("heads", d.heads);
    c.hidden = j.value("hidden", d.hidden);
    c.dropout = j.value("dropout", d.dropout);
    c.disable_local = j.value("disable_local", d.disable_local);
    c.disable_global = j.value("disable_global", d.disable_global);
    c.disable_pos = j.value("disable_pos", d.disable_pos);
}

std::vector<ParamSpec> parameter_layout(const EncoderConfig& cfg, std::size_t node_dim) {
    cfg.validate();
    const auto h = static_cast<std::size_t>(cfg.hidden);
    const auto dh = static_cast<std::size_t>(cfg.head_width());
    const auto k = static_cast<std::size_t>(cfg.walk_length);
    std::vector<ParamSpec> specs;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "local." + std::to_string(l) + ".";
        const std::size_t in = l == 0 ? node_dim : h;
        specs.push_back({p + "theta_n", in, h});
        specs.push_back({p + "a", 2 * h, 1});
        specs.push_back({p + "theta_alpha", in, h});
    }
    specs.push_back({"global.x_in.w", node_dim + k, h});
    specs.push_back({"global.x_in.b", 1, h});
    specs.push_back({"global.e_in.w", kEdgeInputDim + k, h});
    specs.push_back({"global.e_in.b", 1, h});
    for (int head = 0; head < cfg.heads; ++head) {
        const std::string p = "global." + std::to_string(head) + ".";
        for (const char* m : {"q", "k", "v", "theta_e", "theta_b"}) specs.push_back({p + m, h, dh});
        specs.push_back({p + "theta_beta", dh, 1});
        specs.push_back({p + "theta_g", dh, dh});
    }
    specs.push_back({"global.out.w", h, h});
    specs.push_back({"head.theta_p", h, 2});
    return specs;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const EncoderConfig& cfg, std::size_t node_dim, std::uint64_t seed) {
    ModelParams p;
    p.cfg = cfg;
    p.node_dim = node_dim;
    p.specs = parameter_layout(cfg, node_dim);
    Rng rng(mix_seed(seed, 0x1417));
    for (const auto& s : p.specs) {
        std::vector<T> v(s.rows * s.cols, T(0));
        const bool bias = s.name.size() > 2 && s.name.compare(s.name.size() - 2, 2, ".b") == 0;
        if (!bias) {
            const double bound = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
            for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
        }
        p.values.push_back(std::move(v));
    }
    return p;
}

template <typename T>
std::size_t ModelParams<T>::index(const std::string& name) const {
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].name == name) return i;
    }
    throw ConfigError("unknown parameter " + name);
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const noexcept {
    std::size_t total = 0;
    for (const auto& v : values) total += v.size();
    return total;
}

template <typename T>
BoundParams<T> bind(const ModelParams<T>& params, bool trainable) {
    BoundParams<T> b;
    b.source = &params;
    b.tensors.reserve(params.specs.size());
    for (std::size_t i = 0; i < params.specs.size(); ++i) {
        const auto& s = params.specs[i];
        b.tensors.push_back(trainable ? Tensor<T>::parameter(s.rows, s.cols, params.values[i])
                                      : Tensor<T>::constant(s.rows, s.cols, params.values[i]));
    }
    return b;
}

template <typename T>
EncoderInputs<T> augment_features(const TimeAwareSubgraph& g, std::size_t id_bits, int K, bool zero_positions) {
    if (K < 1) throw ConfigError("walk length K must be at least 1");
    const std::size_t n = g.nodes.size();
    const auto k = static_cast<std::size_t>(K);
    const std::size_t dv = kNodeKindCount + id_bits;
    const std::size_t de = kEdgeInputDim + k;

    std::vector<double> pos = zero_positions ? std::vector<double>(n * n * k, 0.0) : compute_position_encoding(g, K);

    EncoderInputs<T> in;
    in.n = n;
    std::vector<float> row(dv);
    std::vector<T> x(n * dv), x_hat(n * (dv + k));
    for (std::size_t i = 0; i < n; ++i) {
        write_node_features(g.nodes[i].kind, g.nodes[i].global, id_bits, row);
        for (std::size_t c = 0; c < dv; ++c) {
            x[i * dv + c] = static_cast<T>(row[c]);
            x_hat[i * (dv + k) + c] = static_cast<T>(row[c]);
        }
        for (std::size_t s = 0; s < k; ++s) x_hat[i * (dv + k) + dv + s] = static_cast<T>(pos[(i * n + i) * k + s]);
    }

    std::vector<T> e_hat(n * n * de, T(0));
    for (const auto& e : g.edges) {
        T* r = e_hat.data() + (static_cast<std::size_t>(e.src) * n + e.dst) * de;
        for (std::size_t c = 0; c < kEdgeFeatureDim; ++c) r[c] = static_cast<T>(e.feature[c]);
        r[kEdgeFeatureDim] = static_cast<T>(std::log1p(static_cast<double>(e.count)));
    }
    for (std::size_t pair = 0; pair < n * n; ++pair) {
        for (std::size_t s = 0; s < k; ++s) e_hat[pair * de + kEdgeInputDim + s] = static_cast<T>(pos[pair * k + s]);
    }

    in.neighbor_mask.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) in.neighbor_mask[i * n + i] = 1;
    for (const auto& e : g.edges) {
        in.neighbor_mask[static_cast<std::size_t>(e.src) * n + e.dst] = 1;
        in.neighbor_mask[static_cast<std::size_t>(e.dst) * n + e.src] = 1;
    }

    in.x = Tensor<T>::constant(n, dv, std::move(x));
    in.x_hat = Tensor<T>::constant(n, dv + k, std::move(x_hat));
    in.e_hat = Tensor<T>::constant(n * n, de, std::move(e_hat));
    return in;
}

namespace {

template <typename T>
void record(std::vector<std::vector<double>>& sink, const Tensor<T>& t) {
    sink.emplace_back(t.value().begin(), t.value().end());
}

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& t, const BoundParams<T>& p, Rng* rng) {
    const double rate = p.source->cfg.dropout;
    if (!rng || rate == 0.0) return t;
    return ad::dropout(t, static_cast<T>(rate), *rng);
}

} // namespace

template <typename T>
Tensor<T> local_attention_layer(const Tensor<T>& h, std::span<const std::uint8_t> mask, const BoundParams<T>& p,
                                int layer, const ForwardOptions& opts, Rng* rng) {
    const std::size_t n = h.rows();
    if (mask.size() != n * n) throw ShapeMismatch("local attention: mask does not match " + h.shape_string());
    const std::string prefix = "local." + std::to_string(layer) + ".";
    const auto hidden = static_cast<std::size_t>(p.source->cfg.hidden);

    const auto transformed = ad::matmul(h, p[prefix + "theta_n"]);
    const auto& a = p[prefix + "a"];
    const auto s_self = ad::matmul(transformed, ad::slice_rows(a, 0, hidden));
    const auto s_nbr = ad::matmul(transformed, ad::slice_rows(a, hidden, hidden));
    auto alpha = ad::masked_row_softmax(ad::leaky_relu(ad::outer_add(s_self, s_nbr)), mask);
    if (opts.trace) record(opts.trace->alpha, alpha);
    alpha = maybe_dropout(alpha, p, rng);
    const auto out = ad::elu(ad::matmul(alpha, ad::matmul(h, p[prefix + "theta_alpha"])));
    return maybe_dropout(out, p, rng);
}

template <typename T>
Tensor<T> global_attention_layer(const Tensor<T>& x_hat, const Tensor<T>& e_hat, const BoundParams<T>& p,
                                 const ForwardOptions& opts, Rng* rng) {
    const std::size_t n = x_hat.rows();
    if (e_hat.rows() != n * n) {
        throw ShapeMismatch("global attention: " + x_hat.shape_string() + " nodes with " + e_hat.shape_string() +
                            " edge table");
    }
    const auto& cfg = p.source->cfg;
    const auto dh = static_cast<std::size_t>(cfg.head_width());

    const auto x = ad::add_row(ad::matmul(x_hat, p["global.x_in.w"]), p["global.x_in.b"]);
    const auto e = ad::add_row(ad::matmul(e_hat, p["global.e_in.w"]), p["global.e_in.b"]);

    auto stacked = [&](const char* name) {
        std::vector<Tensor<T>> parts;
        for (int head = 0; head < cfg.heads; ++head) parts.push_back(p["global." + std::to_string(head) + "." + name]);
        return ad::concat_cols(parts);
    };
    const auto xq = ad::matmul(x, stacked("q"));
    const auto xk = ad::matmul(x, stacked("k"));
    const auto xv = ad::matmul(x, stacked("v"));
    const auto gate = ad::matmul(e, stacked("theta_e"));
    const auto shift = ad::matmul(e, stacked("theta_b"));
    const auto b = ad::relu(ad::add(ad::signed_sqrt(ad::hadamard(ad::pair_sum(xq, xk), gate)), shift));

    std::vector<Tensor<T>> heads;
    for (int head = 0; head < cfg.heads; ++head) {
        const std::string prefix = "global." + std::to_string(head) + ".";
        const auto offset = static_cast<std::size_t>(head) * dh;
        const auto bh = ad::slice_cols(b, offset, dh);
        auto beta = ad::row_softmax(ad::reshape(ad::matmul(bh, p[prefix + "theta_beta"]), n, n));
        if (opts.trace) record(opts.trace->beta, beta);
        beta = maybe_dropout(beta, p, rng);
        heads.push_back(ad::add(ad::matmul(beta, ad::slice_cols(xv, offset, dh)),
                                ad::pair_weighted_sum(beta, ad::matmul(bh, p[prefix + "theta_g"]))));
    }
    const auto out = ad::matmul(ad::concat_cols(heads), p["global.out.w"]);
    return maybe_dropout(out, p, rng);
}

template <typename T>
EncoderOutput<T> encode_subgraph(const EncoderInputs<T>& in, const BoundParams<T>& p, const ForwardOptions& opts) {
    const auto& cfg = p.source->cfg;
    cfg.validate();
    Rng rng(opts.dropout_seed);
    Rng* dropout_rng = opts.training ? &rng : nullptr;

    Tensor<T> combined;
    if (!cfg.disable_local) {
        Tensor<T> h = in.x;
        for (int l = 0; l < cfg.layers; ++l) h = local_attention_layer(h, in.neighbor_mask, p, l, opts, dropout_rng);
        combined = h;
    }
    if (!cfg.disable_global) {
        const auto g = global_attention_layer(in.x_hat, in.e_hat, p, opts, dropout_rng);
        combined = combined.defined() ? ad::add(combined, g) : g;
    }
    const auto pooled = ad::sum_rows(combined);
    EncoderOutput<T> out;
    out.logits = ad::matmul(pooled, p["head.theta_p"]);
    out.probabilities = ad::row_softmax(out.logits);
    return out;
}

nlohmann::json attention_trace_json(const AttentionTrace& trace, std::size_t n) {
    auto matrices = [n](const std::vector<std::vector<double>>& list) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& m : list) {
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t i = 0; i < n; ++i) {
                rows.push_back(std::vector<double>(m.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                   m.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
            }
            arr.push_back(std::move(rows));
        }
        return arr;
    };
    return {{"alpha", matrices(trace.alpha)}, {"beta", matrices(trace.beta)}};
}

#define LMD_INSTANTIATE(T)                                                                                        \
    template struct ModelParams<T>;                                                                              \
    template BoundParams<T> bind<T>(const ModelParams<T>&, bool);                                                \
    template EncoderInputs<T> augment_features<T>(const TimeAwareSubgraph&, std::size_t, int, bool);             \
    template Tensor<T> local_attention_layer<T>(const Tensor<T>&, std::span<const std::uint8_t>,                 \
                                                const BoundParams<T>&, int, const ForwardOptions&, Rng*);        \
    template Tensor<T> global_attention_layer<T>(const Tensor<T>&, const Tensor<T>&, const BoundParams<T>&,      \
                                                 const ForwardOptions&, Rng*);                                   \
    template EncoderOutput<T> encode_subgraph<T>(const EncoderInputs<T>&, const BoundParams<T>&,                 \
                                                 const ForwardOptions&);

LMD_INSTANTIATE(float)
LMD_INSTANTIATE(double)
LMD_INSTANTIATE(long double)

#undef LMD_INSTANTIATE

} // namespace lmd
