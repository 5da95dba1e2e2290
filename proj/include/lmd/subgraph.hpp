#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lmd/hamg.hpp"
#include "lmd/parallel.hpp"

namespace lmd {

struct SamplerConfig {
    Timestamp tau = 3600;
    std::size_t k = 150;
    int hops = 1;

    /// Throws ConfigError unless tau > 0, k >= 1 and hops is 1 or 2.
    void validate() const;
    bool operator==(const SamplerConfig&) const = default;
};

/// Default time window for a log format: 3600 s for LANL-style and generic
/// logs, 10800 s for CERT-style logs.
Timestamp default_tau(LogFormat format) noexcept;

using EdgeFeature = std::array<std::uint8_t, kEdgeFeatureDim>;

struct SubgraphNode {
    NodeId global = 0;
    bool core = false;
    NodeKind kind = NodeKind::User;

    bool operator==(const SubgraphNode&) const = default;
};

/// Parallel edges of one ordered pair collapsed into one. `feature` is the
/// element-wise max of the constituent codes, `count` is the interaction
/// frequency T, and `t_repr` the constituent timestamp closest to the event.
struct MergedEdge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    EdgeFeature feature{};
    std::uint32_t count = 0;
    Timestamp t_repr = 0;

    bool operator==(const MergedEdge&) const = default;
};

/// Event-centred subgraph. Core nodes occupy local indices 0, 1 (and 2 when
/// the event has an object); auxiliary nodes follow in global-id order.
struct TimeAwareSubgraph {
    std::uint32_t event_id = 0;
    Timestamp t = 0;
    std::vector<SubgraphNode> nodes;
    std::vector<MergedEdge> edges;
    Label label = Label::Benign;

    std::size_t core_count() const noexcept;
    bool operator==(const TimeAwareSubgraph&) const = default;
};

/// Item of the edge-merging step; raw edges enter with count 1.
struct MergeItem {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    EdgeFeature feature{};
    std::uint32_t count = 1;
    Timestamp t = 0;
    EdgeId id = 0;

    bool operator==(const MergeItem&) const = default;
};

/// Collapses items sharing (src, dst). Counts add, features take the max,
/// t is the one closest to t_event (earlier wins ties), id is the minimum.
/// Output is sorted by (src, dst); merging a merged set returns it unchanged.
std::vector<MergeItem> merge_parallel_edges(std::vector<MergeItem> items, Timestamp t_event);

EdgeFeature edge_feature_code(const EdgeRef& e);

/// Sorted node set N_z: the core entities and their neighbours (over all
/// time) up to `hops` steps, edges taken as undirected.
std::vector<NodeId> build_event_neighborhood(const Hamg& graph, const AuthEvent& event, int hops);

/// Time-aware subgraph generation (neighbourhood union, induced subgraph,
/// window filter, edge merging, core marking, top-k pruning of core-auxiliary
/// edges, isolated auxiliary removal, label copy).
TimeAwareSubgraph generate_time_aware_subgraph(const Hamg& graph, const AuthEvent& event, const SamplerConfig& cfg);

/// Size-matched random counterpart: draws `raw_edges` edges uniformly from the
/// all-time induced subgraph over N_z, ignoring timestamps, then merges,
/// prunes and drops isolated auxiliaries exactly as the time-aware sampler.
TimeAwareSubgraph generate_random_subgraph(const Hamg& graph, const AuthEvent& event, const SamplerConfig& cfg,
                                           std::size_t raw_edges, std::uint64_t seed);

enum class SamplerKind : std::uint8_t { TimeAware, Random };

struct DatasetHeader {
    SamplerConfig cfg;
    SamplerKind sampler = SamplerKind::TimeAware;
    std::uint64_t seed = 0;
    std::uint64_t vocab_hash = 0;
    std::uint64_t graph_checksum = 0;
    std::uint64_t graph_nodes = 0;

    std::size_t node_feature_dim() const noexcept { return lmd::node_feature_dim(graph_nodes); }
    std::size_t id_bits() const noexcept { return lmd::id_bits(graph_nodes); }
    bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
    DatasetHeader header;
    std::vector<TimeAwareSubgraph> samples;

    bool operator==(const Dataset&) const = default;
};

struct DatasetBuildResult {
    Dataset dataset;
    std::size_t failed = 0;
};

/// One subgraph per event, in event order. Events referencing unknown nodes
/// are skipped and counted.
DatasetBuildResult build_dataset(const Hamg& graph, std::span<const AuthEvent> events, const SamplerConfig& cfg,
                                 const WorkerPool& pool);

/// Random-subgraph dataset matched in raw edge count to `reference`.
DatasetBuildResult build_random_dataset(const Hamg& graph, std::span<const AuthEvent> events,
                                        const Dataset& reference, std::uint64_t seed, const WorkerPool& pool);

// Dataset containers: JSON lines (header line + one line per sample) and the
// binary "TASG" container. Both decode to identical datasets.
std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(std::string_view text);
std::vector<std::uint8_t> dataset_to_binary(const Dataset& ds);
Dataset dataset_from_binary(std::span<const std::uint8_t> bytes);

/// Writes binary when the path ends in ".tasg", JSON lines otherwise.
void save_dataset(const Dataset& ds, const std::string& path);
/// Detects the container from its first bytes.
Dataset load_dataset(const std::string& path);

} // namespace lmd
