#include "lmd/hamg.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "lmd/binary_io.hpp"
#include "lmd/error.hpp"

namespace lmd {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'H', 'A', 'M', 'G'};

std::string dict_key(NodeKind kind, std::string_view name) {
    std::string k(1, static_cast<char>('0' + static_cast<int>(kind)));
    k += name;
    return k;
}

template <typename E, std::size_t N>
E checked_enum(std::uint8_t v, const std::array<std::string_view, N>&, const char* what) {
    if (v >= N) throw IoError(std::string("invalid ") + what + " code " + std::to_string(v));
    return static_cast<E>(v);
}

template <std::size_t N>
std::vector<std::string> to_strings(const std::array<std::string_view, N>& names) {
    return {names.begin(), names.end()};
}

} // namespace

std::vector<std::pair<std::string, std::vector<std::string>>> EdgeVocabulary::blocks() {
    return {{"interaction", to_strings(kInteractionNames)},
            {"auth_type", to_strings(kAuthTypeNames)},
            {"logon_type", to_strings(kLogonTypeNames)},
            {"orientation", to_strings(kOrientationNames)},
            {"success", {"success"}}};
}

std::uint64_t EdgeVocabulary::hash() {
    Fnv1a64 h;
    for (const auto& [name, cats] : blocks()) {
        h.update(name);
        h.update(std::string_view("\x1e", 1));
        for (const auto& c : cats) {
            h.update(c);
            h.update(std::string_view("\x1f", 1));
        }
    }
    return h.digest();
}

std::size_t id_bits(std::size_t node_count) noexcept {
    std::size_t w = 0;
    while (w < 63 && (std::size_t{1} << w) < node_count) ++w;
    return std::max<std::size_t>(1, w);
}

void write_node_features(NodeKind kind, NodeId id, std::size_t bits, std::span<float> out) {
    std::fill(out.begin(), out.end(), 0.0f);
    out[static_cast<std::size_t>(kind)] = 1.0f;
    for (std::size_t b = 0; b < bits; ++b) {
        const std::size_t shift = bits - 1 - b;
        out[kNodeKindCount + b] = ((static_cast<std::uint64_t>(id) >> shift) & 1U) ? 1.0f : 0.0f;
    }
}

void write_edge_features(const EdgeRef& e, std::span<float> out) {
    std::fill(out.begin(), out.end(), 0.0f);
    out[EdgeVocabulary::kInteractionOffset + index_of(e.kind)] = 1.0f;
    out[EdgeVocabulary::kAuthOffset + index_of(e.auth_type)] = 1.0f;
    out[EdgeVocabulary::kLogonOffset + index_of(e.logon_type)] = 1.0f;
    out[EdgeVocabulary::kOrientationOffset + index_of(e.orientation)] = 1.0f;
    out[EdgeVocabulary::kSuccessOffset] = e.outcome == Outcome::Success ? 1.0f : 0.0f;
}

Hamg::Hamg(std::vector<NodeRef> nodes, std::vector<EdgeRef> edges) : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    index();
}

void Hamg::index() {
    const std::size_t n = nodes_.size();
    dictionary_.clear();
    dictionary_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (nodes_[i].id != i) throw Error("node ids must be contiguous");
        if (!dictionary_.emplace(dict_key(nodes_[i].kind, nodes_[i].name), static_cast<NodeId>(i)).second) {
            throw Error("duplicate node (" + std::string(kNodeKindNames[static_cast<std::size_t>(nodes_[i].kind)]) +
                        ", " + nodes_[i].name + ")");
        }
    }
    std::vector<std::size_t> degree(n, 0);
    for (const auto& e : edges_) {
        if (e.src >= n || e.dst >= n) throw UnknownNode("edge references unknown node");
        ++degree[e.src];
        if (e.dst != e.src) ++degree[e.dst];
    }
    adj_offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) adj_offsets_[i + 1] = adj_offsets_[i] + degree[i];
    adj_edges_.assign(adj_offsets_[n], 0);
    std::vector<std::size_t> cursor(adj_offsets_.begin(), adj_offsets_.end() - 1);
    for (std::size_t id = 0; id < edges_.size(); ++id) {
        const auto& e = edges_[id];
        adj_edges_[cursor[e.src]++] = static_cast<EdgeId>(id);
        if (e.dst != e.src) adj_edges_[cursor[e.dst]++] = static_cast<EdgeId>(id);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto first = adj_edges_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i]);
        auto last = adj_edges_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i + 1]);
        std::sort(first, last, [this](EdgeId a, EdgeId b) {
            return edges_[a].t != edges_[b].t ? edges_[a].t < edges_[b].t : a < b;
        });
    }
    adj_times_.resize(adj_edges_.size());
    for (std::size_t i = 0; i < adj_edges_.size(); ++i) adj_times_[i] = edges_[adj_edges_[i]].t;
}

const NodeRef& Hamg::node(NodeId id) const {
    if (id >= nodes_.size()) throw UnknownNode("unknown node id " + std::to_string(id));
    return nodes_[id];
}

std::span<const EdgeId> Hamg::adjacency(NodeId id) const {
    if (id >= nodes_.size()) throw UnknownNode("unknown node id " + std::to_string(id));
    return {adj_edges_.data() + adj_offsets_[id], adj_offsets_[id + 1] - adj_offsets_[id]};
}

std::optional<NodeId> Hamg::find(NodeKind kind, std::string_view name) const {
    const auto it = dictionary_.find(dict_key(kind, name));
    if (it == dictionary_.end()) return std::nullopt;
    return it->second;
}

std::optional<NodeId> Hamg::find_device(std::string_view name) const {
    if (auto h = find(NodeKind::Host, name)) return h;
    return find(NodeKind::Server, name);
}

std::span<const EdgeId> Hamg::query_time_window(NodeId id, Timestamp center, Timestamp tau) const {
    if (id >= nodes_.size()) throw UnknownNode("unknown node id " + std::to_string(id));
    if (tau < 0) throw ConfigError("tau must be non-negative");
    const auto first = adj_times_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[id]);
    const auto last = adj_times_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[id + 1]);
    const auto lo = std::lower_bound(first, last, center - tau);
    const auto hi = std::upper_bound(lo, last, center + tau);
    const auto begin = static_cast<std::size_t>(lo - adj_times_.begin());
    return {adj_edges_.data() + begin, static_cast<std::size_t>(hi - lo)};
}

std::vector<std::uint8_t> Hamg::serialize() const {
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kFormatVersion);
    // dictionary
    w.u32(static_cast<std::uint32_t>(nodes_.size()));
    for (const auto& n : nodes_) w.str(n.name);
    // node table
    w.u32(static_cast<std::uint32_t>(nodes_.size()));
    for (const auto& n : nodes_) w.u8(static_cast<std::uint8_t>(n.kind));
    // edge table
    w.u64(edges_.size());
    for (const auto& e : edges_) {
        w.u32(e.src);
        w.u32(e.dst);
        w.i64(e.t);
        w.u8(static_cast<std::uint8_t>(e.kind));
        w.u8(static_cast<std::uint8_t>(e.auth_type));
        w.u8(static_cast<std::uint8_t>(e.logon_type));
        w.u8(static_cast<std::uint8_t>(e.orientation));
        w.u8(static_cast<std::uint8_t>(e.outcome));
        w.u32(e.user);
        w.u32(e.origin);
        w.u8(e.local ? 1 : 0);
    }
    // vocabulary header
    const auto blocks = EdgeVocabulary::blocks();
    w.u32(static_cast<std::uint32_t>(blocks.size()));
    for (const auto& [name, cats] : blocks) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(cats.size()));
        for (const auto& c : cats) w.str(c);
    }
    seal_with_checksum(w);
    return w.take();
}

Hamg Hamg::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw IoError("not a HAMG file (bad magic)");
    }
    {
        ByteReader head(bytes.subspan(4, 4));
        const std::uint32_t version = head.u32();
        if (version != kFormatVersion) {
            throw VersionMismatch("HAMG version " + std::to_string(version) + ", expected " +
                                  std::to_string(kFormatVersion));
        }
    }
    ByteReader r(verify_checksum(bytes));
    r.raw(8);
    const std::uint32_t name_count = r.u32();
    std::vector<NodeRef> nodes(name_count);
    for (std::uint32_t i = 0; i < name_count; ++i) {
        nodes[i].id = i;
        nodes[i].name = r.str();
    }
    if (r.u32() != name_count) throw IoError("node table size differs from dictionary");
    for (auto& n : nodes) n.kind = checked_enum<NodeKind>(r.u8(), kNodeKindNames, "node kind");
    const std::uint64_t edge_count = r.u64();
    std::vector<EdgeRef> edges;
    edges.reserve(edge_count);
    for (std::uint64_t i = 0; i < edge_count; ++i) {
        EdgeRef e;
        e.src = r.u32();
        e.dst = r.u32();
        e.t = r.i64();
        e.kind = checked_enum<Interaction>(r.u8(), kInteractionNames, "interaction");
        e.auth_type = checked_enum<AuthType>(r.u8(), kAuthTypeNames, "auth type");
        e.logon_type = checked_enum<LogonType>(r.u8(), kLogonTypeNames, "logon type");
        e.orientation = checked_enum<Orientation>(r.u8(), kOrientationNames, "orientation");
        e.outcome = checked_enum<Outcome>(r.u8(), kOutcomeNames, "outcome");
        e.user = r.u32();
        e.origin = r.u32();
        e.local = r.u8() != 0;
        edges.push_back(e);
    }
    const auto expected = EdgeVocabulary::blocks();
    const std::uint32_t block_count = r.u32();
    bool same = block_count == expected.size();
    for (std::uint32_t b = 0; b < block_count; ++b) {
        std::string name = r.str();
        const std::uint32_t n = r.u32();
        std::vector<std::string> cats(n);
        for (auto& c : cats) c = r.str();
        if (same && (name != expected[b].first || cats != expected[b].second)) same = false;
    }
    if (!same) throw VersionMismatch("graph file uses a different edge vocabulary");
    if (r.remaining() != 0) throw IoError("trailing bytes in HAMG file");
    return Hamg(std::move(nodes), std::move(edges));
}

void Hamg::save(const std::string& path) const { write_file_bytes(path, serialize()); }

Hamg Hamg::load(const std::string& path) { return deserialize(read_file_bytes(path)); }

std::uint64_t Hamg::checksum() const {
    const auto bytes = serialize();
    ByteReader r(std::span<const std::uint8_t>(bytes).last(8));
    return r.u64();
}

nlohmann::json Hamg::stats() const {
    nlohmann::ordered_json nodes_by_kind, edges_by_kind;
    std::array<std::size_t, kNodeKindCount> nk{};
    std::array<std::size_t, kInteractionCount> ek{};
    for (const auto& n : nodes_) ++nk[static_cast<std::size_t>(n.kind)];
    std::size_t local = 0;
    for (const auto& e : edges_) {
        ++ek[index_of(e.kind)];
        local += e.local ? 1 : 0;
    }
    for (std::size_t i = 0; i < kNodeKindCount; ++i) nodes_by_kind[std::string(kNodeKindNames[i])] = nk[i];
    for (std::size_t i = 0; i < kInteractionCount; ++i) edges_by_kind[std::string(kInteractionNames[i])] = ek[i];
    nlohmann::ordered_json j;
    j["nodes"] = nodes_.size();
    j["edges"] = edges_.size();
    j["node_kinds"] = nodes_by_kind;
    j["edge_kinds"] = edges_by_kind;
    j["self_authentications"] = local;
    j["node_feature_dim"] = node_feature_dim(nodes_.size());
    j["edge_feature_dim"] = kEdgeFeatureDim;
    return j;
}

BuildResult build_hamg(std::span<const LogRecord> records, const LabelSet& labels, const BuildOptions& opts) {
    std::set<std::string> users, devices;
    std::set<std::pair<NodeKind, std::string>> objects;
    std::map<std::string, std::size_t> login_in_degree;
    for (const auto& r : records) {
        users.insert(r.src_user);
        users.insert(r.dst_user);
        devices.insert(r.src_device);
        devices.insert(r.dst_device);
        if (r.interaction == Interaction::Access || r.interaction == Interaction::Creation) {
            objects.emplace(r.interaction == Interaction::Access ? NodeKind::File : NodeKind::Process, *r.object);
        }
        if (r.interaction == Interaction::Login) ++login_in_degree[r.dst_device];
    }

    std::set<std::string> servers;
    if (opts.servers.min_in_degree) {
        for (const auto& [name, deg] : login_in_degree) {
            if (deg > *opts.servers.min_in_degree) servers.insert(name);
        }
    } else {
        const auto quota = static_cast<std::size_t>(opts.servers.top_fraction * static_cast<double>(devices.size()));
        std::vector<std::pair<std::size_t, std::string>> ranked;
        for (const auto& [name, deg] : login_in_degree) {
            if (deg > 0) ranked.emplace_back(deg, name);
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (std::size_t i = 0; i < std::min(quota, ranked.size()); ++i) servers.insert(ranked[i].second);
    }

    std::vector<std::pair<NodeKind, std::string>> entities;
    entities.reserve(users.size() + devices.size() + objects.size());
    for (const auto& u : users) entities.emplace_back(NodeKind::User, u);
    for (const auto& d : devices) entities.emplace_back(servers.count(d) ? NodeKind::Server : NodeKind::Host, d);
    for (const auto& o : objects) entities.push_back(o);
    std::sort(entities.begin(), entities.end());

    std::vector<NodeRef> nodes;
    nodes.reserve(entities.size());
    std::unordered_map<std::string, NodeId> by_key;
    std::unordered_map<std::string, NodeId> device_id;
    for (auto& [kind, name] : entities) {
        const auto id = static_cast<NodeId>(nodes.size());
        by_key.emplace(dict_key(kind, name), id);
        if (kind == NodeKind::Host || kind == NodeKind::Server) device_id.emplace(name, id);
        nodes.push_back(NodeRef{id, kind, std::move(name)});
    }
    auto user_of = [&](const std::string& name) { return by_key.at(dict_key(NodeKind::User, name)); };

    std::vector<EdgeRef> edges;
    edges.reserve(records.size());
    // device -> (t, object node) for O-entity correlation
    std::unordered_map<NodeId, std::vector<std::pair<Timestamp, NodeId>>> objects_at;
    for (const auto& r : records) {
        EdgeRef e;
        e.t = r.t;
        e.kind = r.interaction;
        e.auth_type = r.auth_type;
        e.logon_type = r.logon_type;
        e.orientation = r.orientation;
        e.outcome = r.outcome;
        e.user = user_of(r.src_user);
        e.origin = device_id.at(r.src_device);
        e.local = r.src_device == r.dst_device;
        const NodeId device = device_id.at(r.dst_device);
        if (r.interaction == Interaction::Login || r.interaction == Interaction::Connection) {
            e.src = e.user;
            e.dst = device;
        } else {
            const NodeKind ok = r.interaction == Interaction::Access ? NodeKind::File : NodeKind::Process;
            e.src = device;
            e.dst = by_key.at(dict_key(ok, *r.object));
            objects_at[device].emplace_back(r.t, e.dst);
        }
        edges.push_back(e);
    }
    for (auto& [device, list] : objects_at) std::sort(list.begin(), list.end());

    BuildResult out;
    std::set<LabelKey> matched;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.interaction != Interaction::Login) continue;
        AuthEvent ev;
        ev.event_id = static_cast<std::uint32_t>(out.events.size());
        ev.t = r.t;
        ev.user = edges[i].src;
        ev.device = edges[i].dst;
        ev.edge = static_cast<EdgeId>(i);
        if (const auto it = objects_at.find(ev.device); it != objects_at.end()) {
            const auto& list = it->second;
            auto lo = std::lower_bound(list.begin(), list.end(), std::make_pair(r.t - opts.object_window, NodeId{0}));
            std::optional<std::pair<Timestamp, NodeId>> best;
            for (; lo != list.end() && lo->first <= r.t + opts.object_window; ++lo) {
                const Timestamp d = lo->first > r.t ? lo->first - r.t : r.t - lo->first;
                if (!best || d < (best->first > r.t ? best->first - r.t : r.t - best->first)) best = *lo;
            }
            if (best) ev.object = best->second;
        }
        const LabelKey key = label_key_of(r);
        if (labels.contains(key)) {
            ev.label = Label::Malicious;
            matched.insert(key);
        }
        out.events.push_back(ev);
    }
    for (const auto& k : labels.entries) {
        if (!matched.count(k)) {
            ++out.orphan_labels;
            if (out.orphan_samples.size() < 8) out.orphan_samples.push_back(k);
        }
    }
    out.graph = Hamg(std::move(nodes), std::move(edges));
    return out;
}

FeatureMatrix encode_node_features(const Hamg& graph) {
    FeatureMatrix m;
    m.rows = graph.node_count();
    const std::size_t bits = id_bits(m.rows);
    m.cols = kNodeKindCount + bits;
    m.values.assign(m.rows * m.cols, 0.0f);
    for (const auto& n : graph.nodes()) {
        write_node_features(n.kind, n.id, bits, std::span<float>(m.values.data() + n.id * m.cols, m.cols));
    }
    return m;
}

FeatureMatrix encode_edge_features(const Hamg& graph) {
    FeatureMatrix m;
    m.rows = graph.edge_count();
    m.cols = kEdgeFeatureDim;
    m.values.assign(m.rows * m.cols, 0.0f);
    for (std::size_t i = 0; i < m.rows; ++i) {
        write_edge_features(graph.edge(static_cast<EdgeId>(i)), std::span<float>(m.values.data() + i * m.cols, m.cols));
    }
    return m;
}

} // namespace lmd
