#include "lmd/events_io.hpp"

#include <algorithm>
#include <array>

#include "lmd/binary_io.hpp"
#include "lmd/error.hpp"

namespace lmd {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'L', 'M', 'E', 'V'};
constexpr std::uint32_t kVersion = 1;

} // namespace

std::vector<std::uint8_t> encode_events(const EventTable& table) {
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.u8(static_cast<std::uint8_t>(table.format));
    w.u64(table.graph_checksum);
    w.u64(table.events.size());
    for (const auto& e : table.events) {
        w.u32(e.event_id);
        w.i64(e.t);
        w.u32(e.user);
        w.u32(e.device);
        w.u8(e.object ? 1 : 0);
        w.u32(e.object.value_or(0));
        w.u8(static_cast<std::uint8_t>(e.label));
        w.u32(e.edge);
    }
    seal_with_checksum(w);
    return w.take();
}

EventTable decode_events(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw IoError("not an event table (bad magic)");
    }
    ByteReader r(verify_checksum(bytes));
    r.raw(4);
    const auto version = r.u32();
    if (version != kVersion) throw VersionMismatch("event table version " + std::to_string(version) + " unsupported");
    EventTable t;
    const auto format = r.u8();
    if (format > static_cast<std::uint8_t>(LogFormat::Generic)) throw IoError("invalid log format code");
    t.format = static_cast<LogFormat>(format);
    t.graph_checksum = r.u64();
    const auto count = r.u64();
    t.events.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        AuthEvent e;
        e.event_id = r.u32();
        e.t = r.i64();
        e.user = r.u32();
        e.device = r.u32();
        const bool has_object = r.u8() != 0;
        const auto object = r.u32();
        if (has_object) e.object = object;
        e.label = r.u8() ? Label::Malicious : Label::Benign;
        e.edge = r.u32();
        t.events.push_back(e);
    }
    return t;
}

void save_events(const EventTable& table, const std::string& path) { write_file_bytes(path, encode_events(table)); }

EventTable load_events(const std::string& path) { return decode_events(read_file_bytes(path)); }

} // namespace lmd
