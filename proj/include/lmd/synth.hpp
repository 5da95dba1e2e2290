#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmd/hamg.hpp"
#include "lmd/log_ingest.hpp"

namespace lmd {

struct ScenarioConfig {
    std::size_t n_users = 100;
    std::size_t n_hosts = 60;
    std::size_t n_servers = 10;
    int days = 10;
    std::size_t benign_events = 12000;
    std::size_t malicious_chains = 50;
    std::size_t chain_length = 4;
    Timestamp chain_window = 1800;
    std::uint64_t seed = 0;

    /// Throws ConfigError unless all counts are positive, chain_length >= 3
    /// and 0 < chain_window <= 86400.
    void validate() const;
    bool operator==(const ScenarioConfig&) const = default;
};

void to_json(nlohmann::json& j, const ScenarioConfig& c);
void from_json(const nlohmann::json& j, ScenarioConfig& c);

struct UserProfile {
    std::string name;
    std::vector<std::string> hosts;
    std::vector<std::string> servers;
    /// Daily activity window, seconds after midnight.
    Timestamp active_start = 0;
    Timestamp active_end = 0;

    bool in_home(const std::string& device) const;
};

struct BenignLogs {
    std::vector<LogRecord> records;
    std::vector<UserProfile> profiles;
    std::vector<std::string> devices;
};

/// Exactly `benign_events` distinct records, time-ordered. 95% are logins
/// from a home host to a home host or server; the rest are file accesses
/// and process creations on a device right after a login there.
BenignLogs generate_benign_logs(const ScenarioConfig& cfg);

struct Scenario {
    std::vector<LogRecord> records;
    LabelSet labels;
    std::vector<UserProfile> profiles;
};

/// Adds `malicious_chains` chains of `chain_length` logins each. A chain
/// starts on a home host of a compromised user and walks distinct devices
/// outside that user's home set within `chain_window` seconds. Throws
/// InsufficientHosts when fewer than chain_length such devices exist.
Scenario inject_lateral_movement(BenignLogs benign, const ScenarioConfig& cfg);

Scenario generate_scenario(const ScenarioConfig& cfg);

/// Scripted baseline: flags an event when its (user, device) pair has not
/// been seen in any earlier login of the graph.
std::vector<int> off_home_baseline(const Hamg& graph, std::span<const AuthEvent> events);

} // namespace lmd
