#include <doctest.h>

#include <initializer_list>

#include "lmd/binary_io.hpp"
#include "lmd/cli.hpp"
#include "lmd/subgraph.hpp"
#include "support.hpp"

using namespace lmd;

namespace {

int run(std::initializer_list<std::string> args) {
    std::vector<std::string> store{"lmdetect"};
    store.insert(store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : store) argv.push_back(s.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}) == 2);
    CHECK(run({"frobnicate"}) == 2);
    CHECK(run({"sample", "--graph"}) == 2);
    CHECK(run({"build-graph", "--input", "x", "--out", "y", "--format", "xml"}) == 2);
}

TEST_CASE("runtime errors exit with 1") {
    testing::TempDir dir("cli_err");
    CHECK(run({"stats", "--graph", dir.file("missing.bin")}) == 1);
    write_file_text(dir.file("bad.json"), "{not json");
    CHECK(run({"synth", "--config", dir.file("bad.json"), "--out", dir.file("o.jsonl")}) == 1);
}

TEST_CASE("the pipeline runs end to end from LANL rows") {
    testing::TempDir dir("cli");
    const auto logs = dir.file("logs.jsonl");
    const auto lanl = dir.file("auth.txt");
    const auto labels = dir.file("redteam.txt");
    REQUIRE(run({"--threads", "2", "synth", "--out", logs, "--lanl", lanl, "--labels", labels, "--users", "30",
                 "--hosts", "20", "--servers", "3", "--days", "3", "--benign", "1500", "--chains", "8"}) == 0);
    const auto graph = dir.file("graph.bin");
    REQUIRE(run({"build-graph", "--input", lanl, "--format", "lanl", "--labels", labels, "--out", graph}) == 0);
    CHECK(run({"stats", "--graph", graph}) == 0);

    const auto data = dir.file("data.tasg");
    REQUIRE(run({"sample", "--graph", graph, "--out", data}) == 0);
    const auto ds = load_dataset(data);
    CHECK(ds.header.cfg.tau == 3600);
    CHECK(ds.header.cfg.k == 150);
    CHECK(ds.header.cfg.hops == 1);
    std::size_t bad = 0;
    for (const auto& s : ds.samples) bad += s.label == Label::Malicious;
    CHECK(bad == 32);

    const auto ckpt = dir.file("model.lmck");
    REQUIRE(run({"train", "--data", data, "--seed", "1", "--out", ckpt, "--epochs", "2", "--hidden", "8", "--heads",
                 "2", "--walk-length", "4"}) == 0);
    const auto metrics = dir.file("metrics.json");
    const auto attention = dir.file("attention.json");
    REQUIRE(run({"eval", "--data", data, "--ckpt", ckpt, "--out", metrics, "--export-attention", attention,
                 "--attention-limit", "3"}) == 0);
    const auto m = nlohmann::json::parse(read_file_text(metrics));
    CHECK(m["mean"].contains("f1"));
    CHECK(m["per_seed"].size() == 1);
    CHECK(nlohmann::json::parse(read_file_text(attention)).size() == 3);
    const auto manifest = nlohmann::json::parse(read_file_text(ckpt + ".manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["seed"] == 1);
    CHECK(manifest["inputs"][0]["fnv1a64"].get<std::string>().size() == 16);

    // Same seed, same checkpoint bytes.
    const auto again = dir.file("again.lmck");
    REQUIRE(run({"train", "--data", data, "--seed", "1", "--out", again, "--epochs", "2", "--hidden", "8", "--heads",
                 "2", "--walk-length", "4"}) == 0);
    CHECK(read_file_bytes(ckpt) == read_file_bytes(again));

    // A checkpoint trained with a different width is refused.
    const auto generic_graph = dir.file("g2.bin");
    REQUIRE(run({"build-graph", "--input", logs, "--format", "generic", "--labels", labels, "--out", generic_graph}) == 0);
    const auto data2 = dir.file("data2.jsonl");
    REQUIRE(run({"sample", "--graph", generic_graph, "--out", data2, "--tau", "600", "--topk", "20"}) == 0);
    CHECK(load_dataset(data2).header.cfg.tau == 600);
}

TEST_CASE("bench output is reproducible") {
    testing::TempDir dir("bench");
    const nlohmann::json cfg{
        {"scenario", {{"n_users", 30}, {"n_hosts", 20}, {"n_servers", 3}, {"days", 3}, {"benign_events", 1500},
                      {"malicious_chains", 8}}},
        {"benign_samples", 200},
        {"malicious_samples", 30},
        {"encoder", {{"hidden", 8}, {"heads", 2}, {"walk_length", 4}, {"layers", 1}}},
        {"train", {{"max_epochs", 2}, {"patience", 2}, {"seeds", {0, 1}}}},
        {"variants", {"full", "no-pos"}}};
    write_file_text(dir.file("bench.json"), cfg.dump());
    REQUIRE(run({"bench", "--seed", "7", "--config", dir.file("bench.json"), "--out", dir.file("a.json")}) == 0);
    REQUIRE(run({"bench", "--seed", "7", "--config", dir.file("bench.json"), "--out", dir.file("b.json")}) == 0);
    CHECK(read_file_text(dir.file("a.json")) == read_file_text(dir.file("b.json")));
    const auto report = nlohmann::json::parse(read_file_text(dir.file("a.json")));
    CHECK(report["variants"].contains("full"));
    CHECK(report["variants"]["no-pos"]["per_seed"].size() == 2);
}
