#include <algorithm>
#include <cstdlib>

#include <json.hpp>

#include "lmd/binary_io.hpp"
#include "lmd/error.hpp"
#include "lmd/subgraph.hpp"

namespace lmd {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'T', 'A', 'S', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kJsonFormat = "lmdetect-dataset";

std::string_view sampler_name(SamplerKind k) { return k == SamplerKind::Random ? "random" : "time-aware"; }

SamplerKind sampler_from(std::string_view s) {
    if (s == "time-aware") return SamplerKind::TimeAware;
    if (s == "random") return SamplerKind::Random;
    throw IoError("unknown sampler '" + std::string(s) + "'");
}

std::uint64_t parse_hex(const std::string& s) {
    char* end = nullptr;
    const auto v = std::strtoull(s.c_str(), &end, 16);
    if (s.empty() || end != s.c_str() + s.size()) throw IoError("bad hex value '" + s + "'");
    return v;
}

NodeKind kind_from(std::uint64_t v) {
    if (v >= kNodeKindCount) throw IoError("invalid node kind " + std::to_string(v));
    return static_cast<NodeKind>(v);
}

void check_sample(const TimeAwareSubgraph& s) {
    for (const auto& e : s.edges) {
        if (e.src >= s.nodes.size() || e.dst >= s.nodes.size()) {
            throw IoError("sample " + std::to_string(s.event_id) + " has an edge to a missing node");
        }
    }
}

} // namespace

std::string dataset_to_jsonl(const Dataset& ds) {
    const auto& h = ds.header;
    nlohmann::ordered_json head;
    head["format"] = kJsonFormat;
    head["version"] = kVersion;
    head["cfg"] = {{"tau", h.cfg.tau}, {"k", h.cfg.k}, {"hops", h.cfg.hops}};
    head["sampler"] = sampler_name(h.sampler);
    head["seed"] = h.seed;
    head["vocab_hash"] = hex64(h.vocab_hash);
    head["graph_checksum"] = hex64(h.graph_checksum);
    head["graph_nodes"] = h.graph_nodes;
    head["node_feature_dim"] = h.node_feature_dim();
    head["edge_feature_dim"] = kEdgeFeatureDim;
    head["count"] = ds.samples.size();
    std::string out = head.dump();
    out += '\n';
    for (const auto& s : ds.samples) {
        nlohmann::ordered_json j;
        j["event_id"] = s.event_id;
        j["t"] = s.t;
        j["label"] = static_cast<int>(s.label);
        auto nodes = nlohmann::ordered_json::array();
        for (const auto& n : s.nodes) {
            nodes.push_back({n.global, n.core ? 1 : 0, static_cast<int>(n.kind)});
        }
        j["nodes"] = std::move(nodes);
        auto edges = nlohmann::ordered_json::array();
        for (const auto& e : s.edges) {
            auto feat = nlohmann::ordered_json::array();
            for (auto f : e.feature) feat.push_back(static_cast<int>(f));
            edges.push_back({e.src, e.dst, std::move(feat), e.count, e.t_repr});
        }
        j["edges"] = std::move(edges);
        out += j.dump();
        out += '\n';
    }
    return out;
}

Dataset dataset_from_jsonl(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw IoError("empty dataset file");
    Dataset ds;
    try {
        const auto head = nlohmann::json::parse(lines[0]);
        if (head.at("format") != kJsonFormat) throw IoError("not a dataset file");
        if (head.at("version").get<std::uint32_t>() != kVersion) throw VersionMismatch("unsupported dataset version");
        auto& h = ds.header;
        h.cfg.tau = head.at("cfg").at("tau").get<Timestamp>();
        h.cfg.k = head.at("cfg").at("k").get<std::size_t>();
        h.cfg.hops = head.at("cfg").at("hops").get<int>();
        h.sampler = sampler_from(head.at("sampler").get<std::string>());
        h.seed = head.at("seed").get<std::uint64_t>();
        h.vocab_hash = parse_hex(head.at("vocab_hash").get<std::string>());
        h.graph_checksum = parse_hex(head.at("graph_checksum").get<std::string>());
        h.graph_nodes = head.at("graph_nodes").get<std::uint64_t>();
        if (h.vocab_hash != EdgeVocabulary::hash()) throw VersionMismatch("dataset uses a different edge vocabulary");
        const auto count = head.at("count").get<std::size_t>();
        if (lines.size() - 1 != count) {
            throw IoError("dataset header announces " + std::to_string(count) + " samples, file has " +
                          std::to_string(lines.size() - 1));
        }
        ds.samples.reserve(count);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto j = nlohmann::json::parse(lines[i]);
            TimeAwareSubgraph s;
            s.event_id = j.at("event_id").get<std::uint32_t>();
            s.t = j.at("t").get<Timestamp>();
            s.label = j.at("label").get<int>() ? Label::Malicious : Label::Benign;
            for (const auto& n : j.at("nodes")) {
                s.nodes.push_back(SubgraphNode{n.at(0).get<NodeId>(), n.at(1).get<int>() != 0,
                                               kind_from(n.at(2).get<std::uint64_t>())});
            }
            for (const auto& e : j.at("edges")) {
                MergedEdge m;
                m.src = e.at(0).get<std::uint32_t>();
                m.dst = e.at(1).get<std::uint32_t>();
                const auto& feat = e.at(2);
                if (feat.size() != kEdgeFeatureDim) throw IoError("edge feature has wrong width");
                for (std::size_t f = 0; f < kEdgeFeatureDim; ++f) m.feature[f] = feat[f].get<std::uint8_t>();
                m.count = e.at(3).get<std::uint32_t>();
                m.t_repr = e.at(4).get<Timestamp>();
                s.edges.push_back(m);
            }
            check_sample(s);
            ds.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed dataset JSON: ") + e.what());
    }
    return ds;
}

std::vector<std::uint8_t> dataset_to_binary(const Dataset& ds) {
    const auto& h = ds.header;
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.i64(h.cfg.tau);
    w.u64(h.cfg.k);
    w.u32(static_cast<std::uint32_t>(h.cfg.hops));
    w.u8(static_cast<std::uint8_t>(h.sampler));
    w.u64(h.seed);
    w.u64(h.vocab_hash);
    w.u64(h.graph_checksum);
    w.u64(h.graph_nodes);
    w.u64(ds.samples.size());
    for (const auto& s : ds.samples) {
        w.u32(s.event_id);
        w.i64(s.t);
        w.u8(static_cast<std::uint8_t>(s.label));
        w.u32(static_cast<std::uint32_t>(s.nodes.size()));
        for (const auto& n : s.nodes) {
            w.u32(n.global);
            w.u8(n.core ? 1 : 0);
            w.u8(static_cast<std::uint8_t>(n.kind));
        }
        w.u32(static_cast<std::uint32_t>(s.edges.size()));
        for (const auto& e : s.edges) {
            w.u32(e.src);
            w.u32(e.dst);
            w.raw(e.feature);
            w.u32(e.count);
            w.i64(e.t_repr);
        }
    }
    seal_with_checksum(w);
    return w.take();
}

Dataset dataset_from_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw IoError("not a TASG file (bad magic)");
    }
    {
        ByteReader head(bytes.subspan(4, 4));
        const auto v = head.u32();
        if (v != kVersion) throw VersionMismatch("TASG version " + std::to_string(v) + " unsupported");
    }
    ByteReader r(verify_checksum(bytes));
    r.raw(8);
    Dataset ds;
    auto& h = ds.header;
    h.cfg.tau = r.i64();
    h.cfg.k = r.u64();
    h.cfg.hops = static_cast<int>(r.u32());
    const auto sampler = r.u8();
    if (sampler > 1) throw IoError("invalid sampler code");
    h.sampler = static_cast<SamplerKind>(sampler);
    h.seed = r.u64();
    h.vocab_hash = r.u64();
    h.graph_checksum = r.u64();
    h.graph_nodes = r.u64();
    if (h.vocab_hash != EdgeVocabulary::hash()) throw VersionMismatch("dataset uses a different edge vocabulary");
    const auto count = r.u64();
    ds.samples.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TimeAwareSubgraph s;
        s.event_id = r.u32();
        s.t = r.i64();
        s.label = r.u8() ? Label::Malicious : Label::Benign;
        const auto nn = r.u32();
        s.nodes.resize(nn);
        for (auto& n : s.nodes) {
            n.global = r.u32();
            n.core = r.u8() != 0;
            n.kind = kind_from(r.u8());
        }
        const auto ne = r.u32();
        s.edges.resize(ne);
        for (auto& e : s.edges) {
            e.src = r.u32();
            e.dst = r.u32();
            const auto f = r.raw(kEdgeFeatureDim);
            std::copy(f.begin(), f.end(), e.feature.begin());
            e.count = r.u32();
            e.t_repr = r.i64();
        }
        check_sample(s);
        ds.samples.push_back(std::move(s));
    }
    if (r.remaining() != 0) throw IoError("trailing bytes in TASG file");
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    const bool binary = path.size() >= 5 && path.compare(path.size() - 5, 5, ".tasg") == 0;
    if (binary) {
        write_file_bytes(path, dataset_to_binary(ds));
    } else {
        write_file_text(path, dataset_to_jsonl(ds));
    }
}

Dataset load_dataset(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        return dataset_from_binary(bytes);
    }
    return dataset_from_jsonl(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

} // namespace lmd
