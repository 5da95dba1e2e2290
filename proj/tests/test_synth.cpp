#include <doctest.h>

#include <map>

#include "lmd/error.hpp"
#include "lmd/log_ingest.hpp"
#include "lmd/synth.hpp"

using namespace lmd;

TEST_CASE("benign generator emits exactly the requested records") {
    ScenarioConfig c;
    c.benign_events = 100;
    const auto logs = generate_benign_logs(c);
    REQUIRE(logs.records.size() == 100);
    for (const auto& r : logs.records) {
        CHECK_NOTHROW(parse_record(to_generic_json(r), LogFormat::Generic));
    }
}

TEST_CASE("generator output is seed-determined") {
    ScenarioConfig c;
    c.benign_events = 2000;
    auto text = [](const Scenario& s) {
        std::string out;
        for (const auto& r : s.records) out += to_generic_json(r) + "\n";
        return out;
    };
    CHECK(text(generate_scenario(c)) == text(generate_scenario(c)));
    ScenarioConfig d = c;
    d.seed = 1;
    CHECK(text(generate_scenario(c)) != text(generate_scenario(d)));
}

TEST_CASE("benign logins stay inside the user's home set") {
    ScenarioConfig c;
    const auto logs = generate_benign_logs(c);
    std::map<std::string, const UserProfile*> by_name;
    for (const auto& p : logs.profiles) by_name[p.name] = &p;
    for (const auto& r : logs.records) {
        const auto& p = *by_name.at(r.src_user);
        CHECK(p.in_home(r.src_device));
        CHECK(p.in_home(r.dst_device));
    }
}

TEST_CASE("lateral movement chains") {
    ScenarioConfig c;
    c.benign_events = 3000;
    c.malicious_chains = 5;
    c.chain_length = 4;
    const auto s = generate_scenario(c);
    CHECK(s.labels.size() == 20);

    std::map<std::string, std::vector<LabelKey>> chains;
    for (const auto& k : s.labels.entries) chains[k.user].push_back(k);
    CHECK(chains.size() == 5);
    std::map<std::string, const UserProfile*> by_name;
    for (const auto& p : s.profiles) by_name[p.name] = &p;
    for (const auto& [user, hops] : chains) {
        std::set<std::string> devices;
        Timestamp lo = hops.front().t, hi = hops.front().t;
        for (const auto& h : hops) {
            devices.insert(h.src_device);
            devices.insert(h.dst_device);
            lo = std::min(lo, h.t);
            hi = std::max(hi, h.t);
            CHECK_FALSE(by_name.at(user)->in_home(h.dst_device));
        }
        CHECK(devices.size() >= 3);
        CHECK(hi - lo <= c.chain_window);
    }
}

TEST_CASE("too few off-home devices is an error") {
    ScenarioConfig c;
    c.n_hosts = 2;
    c.n_servers = 1;
    c.benign_events = 50;
    c.chain_length = 4;
    CHECK_THROWS_AS(generate_scenario(c), InsufficientHosts);
    c = {};
    c.chain_length = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
