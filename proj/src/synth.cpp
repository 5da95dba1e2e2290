#include "lmd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "lmd/error.hpp"
#include "lmd/random.hpp"

namespace lmd {

namespace {

constexpr Timestamp kDay = 86400;
constexpr double kObjectFraction = 0.05;
constexpr std::size_t kFilePool = 200;
constexpr std::size_t kProcessPool = 40;

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

template <typename E, std::size_t N>
E weighted(Rng& rng, const std::array<std::pair<E, double>, N>& table) {
    double x = rng.uniform();
    for (const auto& [value, p] : table) {
        if (x < p) return value;
        x -= p;
    }
    return table.back().first;
}

} // namespace

void ScenarioConfig::validate() const {
    if (n_users == 0 || n_hosts == 0 || n_servers == 0 || days <= 0 || benign_events == 0 ||
        malicious_chains == 0) {
        throw ConfigError("scenario counts must be positive");
    }
    if (chain_length < 3) throw ConfigError("chain_length must be at least 3");
    if (chain_window <= 0 || chain_window > kDay) throw ConfigError("chain_window must be in (0, 86400] seconds");
}

void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    j = nlohmann::json{{"n_users", c.n_users},
                       {"n_hosts", c.n_hosts},
                       {"n_servers", c.n_servers},
                       {"days", c.days},
                       {"benign_events", c.benign_events},
                       {"malicious_chains", c.malicious_chains},
                       {"chain_length", c.chain_length},
                       {"chain_window", c.chain_window},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ScenarioConfig& c) {
    ScenarioConfig d;
    c.n_users = j.value("n_users", d.n_users);
    c.n_hosts = j.value("n_hosts", d.n_hosts);
    c.n_servers = j.value("n_servers", d.n_servers);
    c.days = j.value("days", d.days);
    c.benign_events = j.value("benign_events", d.benign_events);
    c.malicious_chains = j.value("malicious_chains", d.malicious_chains);
    c.chain_length = j.value("chain_length", d.chain_length);
    c.chain_window = j.value("chain_window", d.chain_window);
    c.seed = j.value("seed", d.seed);
}

bool UserProfile::in_home(const std::string& device) const {
    return std::find(hosts.begin(), hosts.end(), device) != hosts.end() ||
           std::find(servers.begin(), servers.end(), device) != servers.end();
}

BenignLogs generate_benign_logs(const ScenarioConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0xbe9));
    BenignLogs out;

    std::vector<std::string> hosts, servers;
    for (std::size_t i = 0; i < cfg.n_hosts; ++i) hosts.push_back("C" + std::to_string(i + 1));
    for (std::size_t i = 0; i < cfg.n_servers; ++i) servers.push_back("C" + std::to_string(cfg.n_hosts + i + 1));
    out.devices = hosts;
    out.devices.insert(out.devices.end(), servers.begin(), servers.end());

    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        UserProfile p;
        p.name = "U" + std::to_string(u + 1) + "@DOM1";
        auto draw = [&](const std::vector<std::string>& pool, std::size_t lo, std::size_t hi) {
            std::vector<std::string> chosen;
            const auto want = std::min(pool.size(), static_cast<std::size_t>(rng.between(
                                                         static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi))));
            while (chosen.size() < want) {
                const auto& d = pick(rng, pool);
                if (std::find(chosen.begin(), chosen.end(), d) == chosen.end()) chosen.push_back(d);
            }
            return chosen;
        };
        p.hosts = draw(hosts, 1, 3);
        p.servers = draw(servers, 1, 2);
        p.active_start = rng.between(7 * 3600, 10 * 3600);
        p.active_end = p.active_start + rng.between(8 * 3600, 10 * 3600);
        out.profiles.push_back(std::move(p));
    }

    const auto object_records =
        static_cast<std::size_t>(std::llround(kObjectFraction * static_cast<double>(cfg.benign_events)));
    const std::size_t logins = cfg.benign_events - object_records;

    std::unordered_set<LogRecord, LogRecordHash> seen;
    std::vector<LogRecord> records;
    records.reserve(cfg.benign_events);
    while (records.size() < logins) {
        const auto& p = pick(rng, out.profiles);
        LogRecord r;
        r.t = static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(cfg.days))) * kDay +
              rng.between(p.active_start, p.active_end);
        r.src_user = p.name;
        r.dst_user = p.name;
        r.src_device = pick(rng, p.hosts);
        const double route = rng.uniform();
        if (route < 0.4) {
            r.dst_device = r.src_device;
            r.auth_type = weighted<AuthType, 2>(rng, {{{AuthType::Negotiate, 0.6}, {AuthType::Kerberos, 0.4}}});
            r.logon_type = weighted<LogonType, 2>(rng, {{{LogonType::Interactive, 0.85}, {LogonType::Service, 0.15}}});
        } else {
            r.dst_device = route < 0.85 ? pick(rng, p.servers) : pick(rng, p.hosts);
            r.auth_type = weighted<AuthType, 3>(
                rng, {{{AuthType::Kerberos, 0.85}, {AuthType::NTLM, 0.1}, {AuthType::Negotiate, 0.05}}});
            r.logon_type = weighted<LogonType, 3>(
                rng, {{{LogonType::Network, 0.9}, {LogonType::Batch, 0.05}, {LogonType::Service, 0.05}}});
        }
        r.orientation = r.auth_type == AuthType::Kerberos && rng.bernoulli(0.2) ? Orientation::TGS : Orientation::LogOn;
        r.outcome = rng.bernoulli(0.97) ? Outcome::Success : Outcome::Failure;
        r.interaction = Interaction::Login;
        if (seen.insert(r).second) records.push_back(std::move(r));
    }

    const std::size_t login_count = records.size();
    while (records.size() < cfg.benign_events) {
        const LogRecord& login = records[static_cast<std::size_t>(rng.below(login_count))];
        LogRecord r;
        r.t = login.t + static_cast<Timestamp>(rng.below(2));
        r.src_user = login.src_user;
        r.dst_user = login.src_user;
        r.src_device = login.dst_device;
        r.dst_device = login.dst_device;
        if (rng.bernoulli(0.7)) {
            r.interaction = Interaction::Access;
            r.object = "F" + std::to_string(rng.below(kFilePool) + 1);
        } else {
            r.interaction = Interaction::Creation;
            r.object = "P" + std::to_string(rng.below(kProcessPool) + 1);
        }
        r.outcome = Outcome::Success;
        if (seen.insert(r).second) records.push_back(std::move(r));
    }
    out.records = normalize_stream(std::move(records));
    return out;
}

Scenario inject_lateral_movement(BenignLogs benign, const ScenarioConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0xa77ac));
    Scenario out;
    out.records = std::move(benign.records);

    std::vector<std::size_t> victims(benign.profiles.size());
    for (std::size_t i = 0; i < victims.size(); ++i) victims[i] = i;
    rng.shuffle(victims);

    std::unordered_set<LogRecord, LogRecordHash> existing(out.records.begin(), out.records.end());
    for (std::size_t c = 0; c < cfg.malicious_chains; ++c) {
        const auto& user = benign.profiles[victims[c % victims.size()]];
        std::vector<std::string> candidates;
        for (const auto& d : benign.devices) {
            if (!user.in_home(d)) candidates.push_back(d);
        }
        if (candidates.size() < cfg.chain_length) {
            throw InsufficientHosts("user " + user.name + " has " + std::to_string(candidates.size()) +
                                    " off-home devices, chain needs " + std::to_string(cfg.chain_length));
        }
        rng.shuffle(candidates);

        std::set<Timestamp> offsets;
        offsets.insert(0);
        while (offsets.size() < cfg.chain_length) offsets.insert(rng.between(1, cfg.chain_window));
        const Timestamp start = static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(cfg.days))) * kDay +
                                rng.between(0, kDay - cfg.chain_window);

        std::string from = user.hosts.front();
        std::size_t hop = 0;
        for (Timestamp off : offsets) {
            LogRecord r;
            r.t = start + off;
            r.src_user = user.name;
            r.dst_user = user.name;
            r.src_device = from;
            r.dst_device = candidates[hop++];
            r.auth_type = weighted<AuthType, 2>(rng, {{{AuthType::NTLM, 0.7}, {AuthType::Kerberos, 0.3}}});
            r.logon_type = LogonType::Network;
            r.orientation = Orientation::LogOn;
            r.outcome = Outcome::Success;
            r.interaction = Interaction::Login;
            from = r.dst_device;
            if (!existing.insert(r).second) continue;
            out.labels.entries.insert(label_key_of(r));
            out.records.push_back(std::move(r));
        }
    }
    out.records = normalize_stream(std::move(out.records));
    out.profiles = std::move(benign.profiles);
    return out;
}

Scenario generate_scenario(const ScenarioConfig& cfg) { return inject_lateral_movement(generate_benign_logs(cfg), cfg); }

std::vector<int> off_home_baseline(const Hamg& graph, std::span<const AuthEvent> events) {
    std::vector<EdgeId> logins;
    for (EdgeId e = 0; e < graph.edge_count(); ++e) {
        if (graph.edge(e).kind == Interaction::Login) logins.push_back(e);
    }
    std::stable_sort(logins.begin(), logins.end(),
                     [&](EdgeId a, EdgeId b) { return graph.edge(a).t < graph.edge(b).t; });
    std::set<std::pair<NodeId, NodeId>> pairs;
    std::vector<std::uint8_t> first(graph.edge_count(), 0);
    for (EdgeId e : logins) {
        const auto& ed = graph.edge(e);
        if (pairs.emplace(ed.src, ed.dst).second) first[e] = 1;
    }
    std::vector<int> flags;
    flags.reserve(events.size());
    for (const auto& ev : events) flags.push_back(first[ev.edge]);
    return flags;
}

} // namespace lmd
