#include "lmd/subgraph.hpp"

#include <algorithm>
#include <unordered_map>

#include "lmd/error.hpp"
#include "lmd/random.hpp"

namespace lmd {

namespace {

Timestamp distance(Timestamp a, Timestamp b) noexcept { return a > b ? a - b : b - a; }

std::vector<NodeId> core_nodes(const Hamg& graph, const AuthEvent& ev) {
    std::vector<NodeId> cores{ev.user, ev.device};
    if (ev.object) cores.push_back(*ev.object);
    const EntityClass expected[3] = {EntityClass::U, EntityClass::D, EntityClass::O};
    for (std::size_t i = 0; i < cores.size(); ++i) {
        if (graph.node(cores[i]).klass() != expected[i]) {
            throw UnknownNode("event " + std::to_string(ev.event_id) + " references node " +
                              std::to_string(cores[i]) + " of the wrong entity class");
        }
    }
    return cores;
}

void add_neighbors(const Hamg& graph, NodeId v, std::vector<NodeId>& out) {
    for (EdgeId e : graph.adjacency(v)) out.push_back(graph.other_end(e, v));
}

void sort_unique(std::vector<NodeId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Shared tail: merge, mark cores, prune core-auxiliary edges to k, drop
// isolated auxiliaries, relabel locally.
TimeAwareSubgraph finish_subgraph(const Hamg& graph, const AuthEvent& ev, const std::vector<NodeId>& cores,
                                  std::vector<MergeItem> raw, std::size_t k) {
    auto merged = merge_parallel_edges(std::move(raw), ev.t);
    auto is_core = [&](NodeId g) { return std::find(cores.begin(), cores.end(), g) != cores.end(); };

    std::vector<MergeItem> kept, core_aux;
    for (auto& m : merged) {
        const bool sc = is_core(m.src), dc = is_core(m.dst);
        if (sc != dc) {
            core_aux.push_back(m);
        } else {
            kept.push_back(m);
        }
    }
    std::sort(core_aux.begin(), core_aux.end(), [&](const MergeItem& a, const MergeItem& b) {
        if (a.count != b.count) return a.count > b.count;
        const Timestamp da = distance(a.t, ev.t), db = distance(b.t, ev.t);
        if (da != db) return da < db;
        return a.id < b.id;
    });
    if (core_aux.size() > k) core_aux.resize(k);
    kept.insert(kept.end(), core_aux.begin(), core_aux.end());

    std::vector<NodeId> aux;
    for (const auto& m : kept) {
        if (!is_core(m.src)) aux.push_back(m.src);
        if (!is_core(m.dst)) aux.push_back(m.dst);
    }
    sort_unique(aux);

    TimeAwareSubgraph sg;
    sg.event_id = ev.event_id;
    sg.t = ev.t;
    sg.label = ev.label;
    std::unordered_map<NodeId, std::uint32_t> local;
    for (NodeId c : cores) {
        local.emplace(c, static_cast<std::uint32_t>(sg.nodes.size()));
        sg.nodes.push_back(SubgraphNode{c, true, graph.node(c).kind});
    }
    for (NodeId a : aux) {
        local.emplace(a, static_cast<std::uint32_t>(sg.nodes.size()));
        sg.nodes.push_back(SubgraphNode{a, false, graph.node(a).kind});
    }
    sg.edges.reserve(kept.size());
    for (const auto& m : kept) {
        sg.edges.push_back(MergedEdge{local.at(m.src), local.at(m.dst), m.feature, m.count, m.t});
    }
    std::sort(sg.edges.begin(), sg.edges.end(), [](const MergedEdge& a, const MergedEdge& b) {
        return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });
    return sg;
}

MergeItem raw_item(const Hamg& graph, EdgeId id) {
    const auto& e = graph.edge(id);
    return MergeItem{e.src, e.dst, edge_feature_code(e), 1, e.t, id};
}

} // namespace

void SamplerConfig::validate() const {
    if (tau <= 0) throw ConfigError("tau must be positive");
    if (k < 1) throw ConfigError("top-k must be at least 1");
    if (hops != 1 && hops != 2) throw ConfigError("hops must be 1 or 2");
}

Timestamp default_tau(LogFormat format) noexcept { return format == LogFormat::Cert ? 10800 : 3600; }

std::size_t TimeAwareSubgraph::core_count() const noexcept {
    std::size_t c = 0;
    for (const auto& n : nodes) c += n.core ? 1 : 0;
    return c;
}

EdgeFeature edge_feature_code(const EdgeRef& e) {
    std::array<float, kEdgeFeatureDim> f{};
    write_edge_features(e, f);
    EdgeFeature out{};
    for (std::size_t i = 0; i < kEdgeFeatureDim; ++i) out[i] = f[i] > 0.5f ? 1 : 0;
    return out;
}

std::vector<MergeItem> merge_parallel_edges(std::vector<MergeItem> items, Timestamp t_event) {
    std::sort(items.begin(), items.end(), [](const MergeItem& a, const MergeItem& b) {
        if (a.src != b.src) return a.src < b.src;
        if (a.dst != b.dst) return a.dst < b.dst;
        return a.id < b.id;
    });
    std::vector<MergeItem> out;
    for (const auto& it : items) {
        if (out.empty() || out.back().src != it.src || out.back().dst != it.dst) {
            out.push_back(it);
            continue;
        }
        auto& m = out.back();
        m.count += it.count;
        for (std::size_t i = 0; i < kEdgeFeatureDim; ++i) m.feature[i] = std::max(m.feature[i], it.feature[i]);
        const Timestamp dm = distance(m.t, t_event), di = distance(it.t, t_event);
        if (di < dm || (di == dm && it.t < m.t)) m.t = it.t;
        m.id = std::min(m.id, it.id);
    }
    return out;
}

std::vector<NodeId> build_event_neighborhood(const Hamg& graph, const AuthEvent& event, int hops) {
    if (hops != 1 && hops != 2) throw ConfigError("hops must be 1 or 2");
    const auto cores = core_nodes(graph, event);
    std::vector<NodeId> set(cores.begin(), cores.end());
    for (NodeId c : cores) add_neighbors(graph, c, set);
    sort_unique(set);
    if (hops == 2) {
        const std::vector<NodeId> first(set);
        for (NodeId v : first) add_neighbors(graph, v, set);
        sort_unique(set);
    }
    return set;
}

TimeAwareSubgraph generate_time_aware_subgraph(const Hamg& graph, const AuthEvent& event, const SamplerConfig& cfg) {
    cfg.validate();
    const auto cores = core_nodes(graph, event);
    const auto members = build_event_neighborhood(graph, event, cfg.hops);
    auto member = [&](NodeId v) { return std::binary_search(members.begin(), members.end(), v); };

    // Induced edges restricted to the window: each edge is collected from
    // its source endpoint only.
    std::vector<MergeItem> raw;
    for (NodeId v : members) {
        for (EdgeId e : graph.query_time_window(v, event.t, cfg.tau)) {
            const auto& ed = graph.edge(e);
            if (ed.src == v && member(ed.dst)) raw.push_back(raw_item(graph, e));
        }
    }
    return finish_subgraph(graph, event, cores, std::move(raw), cfg.k);
}

TimeAwareSubgraph generate_random_subgraph(const Hamg& graph, const AuthEvent& event, const SamplerConfig& cfg,
                                           std::size_t raw_edges, std::uint64_t seed) {
    cfg.validate();
    const auto cores = core_nodes(graph, event);
    const auto members = build_event_neighborhood(graph, event, cfg.hops);
    auto member = [&](NodeId v) { return std::binary_search(members.begin(), members.end(), v); };

    Rng rng(mix_seed(seed, event.event_id));
    std::vector<EdgeId> reservoir;
    reservoir.reserve(raw_edges);
    std::size_t seen = 0;
    for (NodeId v : members) {
        for (EdgeId e : graph.adjacency(v)) {
            const auto& ed = graph.edge(e);
            if (ed.src != v || !member(ed.dst)) continue;
            ++seen;
            if (reservoir.size() < raw_edges) {
                reservoir.push_back(e);
            } else if (raw_edges > 0) {
                const auto j = rng.below(seen);
                if (j < raw_edges) reservoir[j] = e;
            }
        }
    }
    std::sort(reservoir.begin(), reservoir.end());
    std::vector<MergeItem> raw;
    raw.reserve(reservoir.size());
    for (EdgeId e : reservoir) raw.push_back(raw_item(graph, e));
    return finish_subgraph(graph, event, cores, std::move(raw), cfg.k);
}

DatasetBuildResult build_dataset(const Hamg& graph, std::span<const AuthEvent> events, const SamplerConfig& cfg,
                                 const WorkerPool& pool) {
    cfg.validate();
    std::vector<std::optional<TimeAwareSubgraph>> slots(events.size());
    pool.parallel_for(events.size(), [&](std::size_t i) {
        try {
            slots[i] = generate_time_aware_subgraph(graph, events[i], cfg);
        } catch (const UnknownNode&) {
            slots[i].reset();
        }
    });
    DatasetBuildResult out;
    auto& h = out.dataset.header;
    h.cfg = cfg;
    h.sampler = SamplerKind::TimeAware;
    h.vocab_hash = EdgeVocabulary::hash();
    h.graph_checksum = graph.checksum();
    h.graph_nodes = graph.node_count();
    out.dataset.samples.reserve(events.size());
    for (auto& s : slots) {
        if (s) {
            out.dataset.samples.push_back(std::move(*s));
        } else {
            ++out.failed;
        }
    }
    return out;
}

DatasetBuildResult build_random_dataset(const Hamg& graph, std::span<const AuthEvent> events,
                                        const Dataset& reference, std::uint64_t seed, const WorkerPool& pool) {
    std::unordered_map<std::uint32_t, std::size_t> raw_counts;
    for (const auto& s : reference.samples) {
        std::size_t total = 0;
        for (const auto& e : s.edges) total += e.count;
        raw_counts[s.event_id] = total;
    }
    std::vector<std::optional<TimeAwareSubgraph>> slots(events.size());
    pool.parallel_for(events.size(), [&](std::size_t i) {
        const auto it = raw_counts.find(events[i].event_id);
        if (it == raw_counts.end()) return;
        try {
            slots[i] = generate_random_subgraph(graph, events[i], reference.header.cfg, it->second, seed);
        } catch (const UnknownNode&) {
            slots[i].reset();
        }
    });
    DatasetBuildResult out;
    out.dataset.header = reference.header;
    out.dataset.header.sampler = SamplerKind::Random;
    out.dataset.header.seed = seed;
    for (auto& s : slots) {
        if (s) {
            out.dataset.samples.push_back(std::move(*s));
        } else {
            ++out.failed;
        }
    }
    return out;
}

} // namespace lmd
