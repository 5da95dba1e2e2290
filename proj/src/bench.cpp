#include "lmd/bench.hpp"

#include <algorithm>

#include "lmd/error.hpp"
#include "lmd/random.hpp"

namespace lmd {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 5> kVariantNames{{{Variant::Full, "full"},
                                                                             {Variant::NoLocal, "no-local"},
                                                                             {Variant::NoGlobal, "no-global"},
                                                                             {Variant::NoPos, "no-pos"},
                                                                             {Variant::RandomSubgraph, "random-subgraph"}}};

} // namespace

std::string_view variant_name(Variant v) noexcept {
    for (const auto& [value, name] : kVariantNames) {
        if (value == v) return name;
    }
    return "full";
}

Variant parse_variant(std::string_view name) {
    for (const auto& [value, n] : kVariantNames) {
        if (n == name) return value;
    }
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected full, no-local, no-global, no-pos or random-subgraph)");
}

nlohmann::json bench_config_json(const BenchConfig& c) {
    nlohmann::json variants = nlohmann::json::array();
    for (auto v : c.variants) variants.push_back(variant_name(v));
    return {{"scenario", c.scenario},
            {"benign_samples", c.benign_samples},
            {"malicious_samples", c.malicious_samples},
            {"sampler", {{"tau", c.sampler.tau}, {"k", c.sampler.k}, {"hops", c.sampler.hops}}},
            {"encoder", c.encoder},
            {"train", c.train},
            {"variants", variants},
            {"seed", c.seed}};
}

void apply_bench_json(const nlohmann::json& j, BenchConfig& c) {
    if (j.contains("scenario")) c.scenario = j["scenario"].get<ScenarioConfig>();
    c.benign_samples = j.value("benign_samples", c.benign_samples);
    c.malicious_samples = j.value("malicious_samples", c.malicious_samples);
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        c.sampler.tau = s.value("tau", c.sampler.tau);
        c.sampler.k = s.value("k", c.sampler.k);
        c.sampler.hops = s.value("hops", c.sampler.hops);
    }
    if (j.contains("encoder")) c.encoder = j["encoder"].get<EncoderConfig>();
    if (j.contains("train")) {
        TrainConfig t = j["train"].get<TrainConfig>();
        if (!j["train"].contains("seeds")) t.seeds = c.train.seeds;
        if (!j["train"].contains("max_epochs")) t.max_epochs = c.train.max_epochs;
        if (!j["train"].contains("patience")) t.patience = c.train.patience;
        c.train = t;
    }
    if (j.contains("variants")) {
        c.variants.clear();
        for (const auto& v : j["variants"]) c.variants.push_back(parse_variant(v.get<std::string>()));
    }
    c.seed = j.value("seed", c.seed);
}

std::vector<AuthEvent> sample_events(std::span<const AuthEvent> events, std::size_t benign, std::size_t malicious,
                                     std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < events.size(); ++i) {
        (events[i].label == Label::Malicious ? pos : neg).push_back(i);
    }
    Rng rng(mix_seed(seed, 0x5a3));
    rng.shuffle(neg);
    rng.shuffle(pos);
    neg.resize(std::min(neg.size(), benign));
    pos.resize(std::min(pos.size(), malicious));
    std::vector<std::size_t> chosen = neg;
    chosen.insert(chosen.end(), pos.begin(), pos.end());
    std::sort(chosen.begin(), chosen.end());
    std::vector<AuthEvent> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(events[i]);
    return out;
}

nlohmann::json run_seeds(const Dataset& ds, const EncoderConfig& enc, const TrainConfig& train,
                         const WorkerPool& pool, const ProgressFn& progress) {
    const auto labels = dataset_labels(ds);
    std::vector<Metrics> runs;
    nlohmann::json per_seed = nlohmann::json::array();
    for (auto seed : train.seeds) {
        const auto split = split_dataset(labels, train.split, seed);
        const auto result = train_model(ds, split, enc, train, seed, pool);
        const auto m = evaluate(result.best, ds, split.test, pool);
        runs.push_back(m);
        auto j = metrics_json(m);
        j["seed"] = seed;
        j["best_epoch"] = result.best_epoch;
        j["epochs_run"] = result.history.size();
        per_seed.push_back(j);
        if (progress) {
            progress("seed " + std::to_string(seed) + ": f1=" + std::to_string(m.f1) + " auc=" +
                     std::to_string(m.auc) + " best_epoch=" + std::to_string(result.best_epoch));
        }
    }
    const auto summary = summarize(runs);
    auto mean = metrics_json(summary.mean);
    mean.erase("confusion");
    auto stdev = metrics_json(summary.std);
    stdev.erase("confusion");
    return {{"per_seed", per_seed},
            {"mean", mean},
            {"std", stdev},
            {"confusion_total", metrics_json(summary.mean)["confusion"]},
            {"std_estimator", "population"}};
}

nlohmann::json run_bench(const BenchConfig& cfg, const WorkerPool& pool, const ProgressFn& progress) {
    auto say = [&](const std::string& s) {
        if (progress) progress(s);
    };
    ScenarioConfig scenario = cfg.scenario;
    scenario.seed = cfg.seed;
    const auto synth = generate_scenario(scenario);
    auto built = build_hamg(synth.records, synth.labels);
    const auto events = sample_events(built.events, cfg.benign_samples, cfg.malicious_samples, cfg.seed);
    say("scenario: " + std::to_string(synth.records.size()) + " records, " + std::to_string(built.events.size()) +
        " login events, " + std::to_string(events.size()) + " sampled");

    const auto flags = off_home_baseline(built.graph, events);
    Confusion baseline;
    for (std::size_t i = 0; i < events.size(); ++i) {
        baseline.add(events[i].label == Label::Malicious ? 1 : 0, flags[i]);
    }

    const auto time_aware = build_dataset(built.graph, events, cfg.sampler, pool).dataset;
    std::size_t nodes = 0, edges = 0, largest = 0;
    for (const auto& s : time_aware.samples) {
        nodes += s.nodes.size();
        edges += s.edges.size();
        largest = std::max(largest, s.nodes.size());
    }
    const double count = static_cast<double>(std::max<std::size_t>(1, time_aware.samples.size()));
    std::size_t malicious = 0;
    for (const auto& s : time_aware.samples) malicious += s.label == Label::Malicious;

    nlohmann::json report;
    report["config"] = bench_config_json(cfg);
    report["data"] = {{"records", synth.records.size()},
                      {"labels", synth.labels.size()},
                      {"graph_nodes", built.graph.node_count()},
                      {"graph_edges", built.graph.edge_count()},
                      {"events", built.events.size()},
                      {"samples", time_aware.samples.size()},
                      {"malicious", malicious},
                      {"benign", time_aware.samples.size() - malicious},
                      {"mean_nodes", static_cast<double>(nodes) / count},
                      {"mean_edges", static_cast<double>(edges) / count},
                      {"max_nodes", largest}};
    report["baseline"] = {{"rule", "first-seen (user, device) login"},
                          {"recall", class_recall(baseline, 1)},
                          {"precision", class_precision(baseline, 1)},
                          {"macro_f1", metrics_from_confusion(baseline).f1}};
    say("off-home baseline recall " + std::to_string(class_recall(baseline, 1)));

    nlohmann::json variants = nlohmann::json::object();
    for (auto v : cfg.variants) {
        EncoderConfig enc = cfg.encoder;
        enc.disable_local = v == Variant::NoLocal;
        enc.disable_global = v == Variant::NoGlobal;
        enc.disable_pos = v == Variant::NoPos;
        say(std::string("variant ") + std::string(variant_name(v)));
        if (v == Variant::RandomSubgraph) {
            const auto random = build_random_dataset(built.graph, events, time_aware, cfg.seed, pool).dataset;
            variants[std::string(variant_name(v))] = run_seeds(random, enc, cfg.train, pool, progress);
        } else {
            variants[std::string(variant_name(v))] = run_seeds(time_aware, enc, cfg.train, pool, progress);
        }
    }
    report["variants"] = variants;
    return report;
}

} // namespace lmd
