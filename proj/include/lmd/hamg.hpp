#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lmd/log_ingest.hpp"

namespace lmd {

enum class NodeKind : std::uint8_t { User, Host, Server, File, Process };
enum class EntityClass : std::uint8_t { U, D, O };

inline constexpr std::size_t kNodeKindCount = 5;
inline constexpr std::array<std::string_view, kNodeKindCount> kNodeKindNames{"user", "host", "server", "file",
                                                                             "process"};

constexpr EntityClass class_of(NodeKind k) noexcept {
    switch (k) {
    case NodeKind::User: return EntityClass::U;
    case NodeKind::Host:
    case NodeKind::Server: return EntityClass::D;
    case NodeKind::File:
    case NodeKind::Process: return EntityClass::O;
    }
    return EntityClass::O;
}

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

struct NodeRef {
    NodeId id = 0;
    NodeKind kind = NodeKind::User;
    std::string name;

    EntityClass klass() const noexcept { return class_of(kind); }
    bool operator==(const NodeRef&) const = default;
};

/// A timestamped interaction. Login and connection edges run user -> target
/// device; access and creation edges run device -> object. `origin` is the
/// record's source device and `local` marks self-authentication
/// (source device == destination device).
struct EdgeRef {
    NodeId src = 0;
    NodeId dst = 0;
    Timestamp t = 0;
    Interaction kind = Interaction::Login;
    AuthType auth_type = AuthType::Unknown;
    LogonType logon_type = LogonType::Unknown;
    Orientation orientation = Orientation::Unknown;
    Outcome outcome = Outcome::Unknown;
    NodeId user = 0;
    NodeId origin = 0;
    bool local = false;

    bool operator==(const EdgeRef&) const = default;
};

enum class Label : std::uint8_t { Benign = 0, Malicious = 1 };

/// A login-class event z = <t, U, D, O> to be classified.
struct AuthEvent {
    std::uint32_t event_id = 0;
    Timestamp t = 0;
    NodeId user = 0;
    NodeId device = 0;
    std::optional<NodeId> object;
    Label label = Label::Benign;
    EdgeId edge = 0;

    bool operator==(const AuthEvent&) const = default;
};

/// Edge one-hot layout: interaction | auth type | logon type | orientation | success bit.
struct EdgeVocabulary {
    static constexpr std::size_t kInteractionOffset = 0;
    static constexpr std::size_t kAuthOffset = kInteractionOffset + kInteractionCount;
    static constexpr std::size_t kLogonOffset = kAuthOffset + kAuthTypeCount;
    static constexpr std::size_t kOrientationOffset = kLogonOffset + kLogonTypeCount;
    static constexpr std::size_t kSuccessOffset = kOrientationOffset + kOrientationCount;
    static constexpr std::size_t kDim = kSuccessOffset + 1;

    /// (block name, category names) in layout order.
    static std::vector<std::pair<std::string, std::vector<std::string>>> blocks();
    static std::uint64_t hash();
};

inline constexpr std::size_t kEdgeFeatureDim = EdgeVocabulary::kDim;

/// Width of the binary id code: max(1, ceil(log2 n)).
std::size_t id_bits(std::size_t node_count) noexcept;

inline std::size_t node_feature_dim(std::size_t node_count) noexcept { return kNodeKindCount + id_bits(node_count); }

/// Writes [one-hot(kind) | binary(id), most significant bit first] into out.
void write_node_features(NodeKind kind, NodeId id, std::size_t bits, std::span<float> out);

/// Writes the one-hot edge code into out (length kEdgeFeatureDim).
void write_edge_features(const EdgeRef& e, std::span<float> out);

/// Dense row-major float matrix used for feature tables.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

/// Immutable heterogeneous authentication multigraph.
class Hamg {
public:
    Hamg() { index(); }
    Hamg(std::vector<NodeRef> nodes, std::vector<EdgeRef> edges);

    const std::vector<NodeRef>& nodes() const noexcept { return nodes_; }
    const std::vector<EdgeRef>& edges() const noexcept { return edges_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    const NodeRef& node(NodeId id) const;
    const EdgeRef& edge(EdgeId id) const { return edges_.at(id); }

    /// Incident edges of a node, ordered by (t, edge id).
    std::span<const EdgeId> adjacency(NodeId id) const;

    std::optional<NodeId> find(NodeKind kind, std::string_view name) const;
    /// Device lookup irrespective of host/server assignment.
    std::optional<NodeId> find_device(std::string_view name) const;

    /// Incident edges with |t - center| <= tau, ascending t. Throws UnknownNode.
    std::span<const EdgeId> query_time_window(NodeId id, Timestamp center, Timestamp tau) const;

    /// Endpoint of `e` opposite to `from` (from itself for self-loops).
    NodeId other_end(EdgeId e, NodeId from) const noexcept {
        const auto& ed = edges_[e];
        return ed.src == from ? ed.dst : ed.src;
    }

    bool operator==(const Hamg& other) const {
        return nodes_ == other.nodes_ && edges_ == other.edges_ && adj_offsets_ == other.adj_offsets_ &&
               adj_edges_ == other.adj_edges_;
    }

    std::vector<std::uint8_t> serialize() const;
    static Hamg deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::string& path) const;
    static Hamg load(const std::string& path);

    /// FNV-1a of the serialized form (the trailing checksum).
    std::uint64_t checksum() const;

    nlohmann::json stats() const;

    static constexpr std::uint32_t kFormatVersion = 1;

private:
    void index();

    std::vector<NodeRef> nodes_;
    std::vector<EdgeRef> edges_;
    std::vector<std::size_t> adj_offsets_;
    std::vector<EdgeId> adj_edges_;
    std::vector<Timestamp> adj_times_;
    std::unordered_map<std::string, NodeId> dictionary_;
};

/// How devices are split into hosts and servers. A device is a server when
/// its login in-degree exceeds `min_in_degree` if set; otherwise the top
/// floor(top_fraction * devices) devices by login in-degree (ties by name)
/// with non-zero in-degree are servers.
struct ServerRule {
    double top_fraction = 0.01;
    std::optional<std::size_t> min_in_degree;
};

struct BuildOptions {
    ServerRule servers;
    Timestamp object_window = 1;
};

struct BuildResult {
    Hamg graph;
    std::vector<AuthEvent> events;
    std::size_t orphan_labels = 0;
    std::vector<LabelKey> orphan_samples;
};

/// Builds the multigraph from a normalized record stream. One node per
/// distinct (kind, name), one edge per record, one event per login record.
BuildResult build_hamg(std::span<const LogRecord> records, const LabelSet& labels, const BuildOptions& opts = {});

FeatureMatrix encode_node_features(const Hamg& graph);
FeatureMatrix encode_edge_features(const Hamg& graph);

} // namespace lmd
