#pragma once

#include <string>
#include <vector>

#include "lmd/hamg.hpp"

namespace lmd {

/// Events extracted alongside a graph, with the format of the source log.
struct EventTable {
    LogFormat format = LogFormat::Lanl;
    std::uint64_t graph_checksum = 0;
    std::vector<AuthEvent> events;

    bool operator==(const EventTable&) const = default;
};

/// "LMEV" container: magic, version, format, graph checksum, events, trailing checksum.
std::vector<std::uint8_t> encode_events(const EventTable& table);
EventTable decode_events(std::span<const std::uint8_t> bytes);
void save_events(const EventTable& table, const std::string& path);
EventTable load_events(const std::string& path);

} // namespace lmd
