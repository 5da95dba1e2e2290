#include "lmd/checkpoint.hpp"

#include "lmd/binary_io.hpp"
#include "lmd/error.hpp"

namespace lmd {

namespace {

constexpr std::string_view kMagic = "LMCK";
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeF64 = 1;

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    const auto& p = ck.params;
    ByteWriter w;
    w.raw({reinterpret_cast<const std::uint8_t*>(kMagic.data()), kMagic.size()});
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(p.specs.size()));
    for (std::size_t i = 0; i < p.specs.size(); ++i) {
        w.str(p.specs[i].name);
        w.u64(p.specs[i].rows);
        w.u64(p.specs[i].cols);
        w.u8(kDtypeF32);
        for (float v : p.values[i]) w.f32(v);
    }
    nlohmann::json trailer{{"encoder", p.cfg}, {"node_dim", p.node_dim}, {"meta", ck.meta}};
    w.str(trailer.dump());
    seal_with_checksum(w);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
        throw IoError("not a checkpoint (bad magic)");
    }
    ByteReader r(verify_checksum(bytes));
    r.raw(kMagic.size());
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    }
    const auto count = r.u32();
    std::vector<ParamSpec> specs;
    std::vector<std::vector<float>> values;
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamSpec s;
        s.name = r.str();
        s.rows = r.u64();
        s.cols = r.u64();
        const auto dtype = r.u8();
        std::vector<float> v(s.rows * s.cols);
        if (dtype == kDtypeF32) {
            for (auto& x : v) x = r.f32();
        } else if (dtype == kDtypeF64) {
            for (auto& x : v) x = static_cast<float>(r.f64());
        } else {
            throw IoError("checkpoint tensor " + s.name + " has unknown dtype " + std::to_string(dtype));
        }
        specs.push_back(std::move(s));
        values.push_back(std::move(v));
    }
    const auto trailer = nlohmann::json::parse(r.str());

    Checkpoint ck;
    ck.params.cfg = trailer.at("encoder").get<EncoderConfig>();
    ck.params.node_dim = trailer.at("node_dim").get<std::size_t>();
    ck.meta = trailer.value("meta", nlohmann::json::object());
    const auto expected = parameter_layout(ck.params.cfg, ck.params.node_dim);
    if (expected.size() != specs.size()) {
        throw ShapeMismatch("checkpoint holds " + std::to_string(specs.size()) + " tensors, model defines " +
                            std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (!(expected[i] == specs[i])) {
            throw ShapeMismatch("checkpoint tensor " + specs[i].name + " [" + std::to_string(specs[i].rows) + "x" +
                                std::to_string(specs[i].cols) + "] does not match model tensor " + expected[i].name +
                                " [" + std::to_string(expected[i].rows) + "x" + std::to_string(expected[i].cols) +
                                "]");
        }
    }
    ck.params.specs = std::move(specs);
    ck.params.values = std::move(values);
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) { write_file_bytes(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

} // namespace lmd
