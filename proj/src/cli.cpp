#include "lmd/cli.hpp"

#include <chrono>
#include <iostream>
#include <limits>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmd/bench.hpp"
#include "lmd/binary_io.hpp"
#include "lmd/checkpoint.hpp"
#include "lmd/error.hpp"
#include "lmd/events_io.hpp"
#include "lmd/hamg.hpp"
#include "lmd/log_ingest.hpp"
#include "lmd/subgraph.hpp"
#include "lmd/synth.hpp"
#include "lmd/train.hpp"

namespace lmd {

namespace {

using json = nlohmann::json;

class Diagnostics {
public:
    explicit Diagnostics(bool structured) : structured_(structured) {}

    void info(const std::string& msg, const json& fields = json::object()) const { emit("info", msg, fields); }
    void error(const std::string& msg, const json& fields = json::object()) const { emit("error", msg, fields); }

private:
    void emit(const char* level, const std::string& msg, const json& fields) const {
        if (structured_) {
            json line{{"level", level}, {"msg", msg}};
            if (!fields.empty()) line["fields"] = fields;
            std::cerr << line.dump() << '\n';
        } else {
            std::cerr << "lmdetect: " << (std::string_view(level) == "error" ? "error: " : "") << msg;
            if (!fields.empty()) std::cerr << ' ' << fields.dump();
            std::cerr << '\n';
        }
    }

    bool structured_;
};

struct Manifest {
    std::string command;
    json config = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
};

void write_manifest(const Manifest& m, const std::string& beside, double seconds) {
    json inputs = json::array();
    for (const auto& path : m.inputs) {
        inputs.push_back({{"path", path}, {"fnv1a64", hex64(fnv1a64(read_file_bytes(path)))}});
    }
    json doc{{"command", m.command},    {"tool_version", kToolVersion}, {"config", m.config},
             {"inputs", inputs},        {"outputs", m.outputs},         {"seed", m.seed},
             {"wall_clock_seconds", seconds}};
    write_file_text(beside + ".manifest.json", doc.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(read_file_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
}

template <typename T>
void override_if(const CLI::Option* opt, const T& value, T& target) {
    if (opt->count() > 0) target = value;
}

json sampler_json(const SamplerConfig& c) { return {{"tau", c.tau}, {"k", c.k}, {"hops", c.hops}}; }

json metrics_document(const json& config, const std::vector<Metrics>& runs, const std::vector<std::uint64_t>& seeds) {
    json per_seed = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto j = metrics_json(runs[i]);
        j["seed"] = seeds[i];
        per_seed.push_back(j);
    }
    const auto summary = summarize(runs);
    auto mean = metrics_json(summary.mean);
    mean.erase("confusion");
    auto stdev = metrics_json(summary.std);
    stdev.erase("confusion");
    return {{"config", config},   {"per_seed", per_seed},
            {"mean", mean},       {"std", stdev},
            {"confusion_total", metrics_json(summary.mean)["confusion"]},
            {"std_estimator", "population"}};
}

struct Globals {
    unsigned threads = 0;
    bool json_logs = false;
};

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::string config;
    std::string out;
    std::string labels;
    std::string lanl;
    ScenarioConfig flags;
    CLI::Option* users = nullptr;
    CLI::Option* hosts = nullptr;
    CLI::Option* servers = nullptr;
    CLI::Option* days = nullptr;
    CLI::Option* benign = nullptr;
    CLI::Option* chains = nullptr;
    CLI::Option* chain_length = nullptr;
    CLI::Option* chain_window = nullptr;
    CLI::Option* seed = nullptr;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    app.add_option("--config", a.config, "Scenario JSON file");
    app.add_option("--out", a.out, "Output records (generic JSON lines)")->required();
    app.add_option("--labels", a.labels, "Output red-team label file (default: <out>.labels)");
    app.add_option("--lanl", a.lanl, "Also write login records as LANL auth rows");
    a.users = app.add_option("--users", a.flags.n_users, "Number of users");
    a.hosts = app.add_option("--hosts", a.flags.n_hosts, "Number of workstations");
    a.servers = app.add_option("--servers", a.flags.n_servers, "Number of servers");
    a.days = app.add_option("--days", a.flags.days, "Simulated days");
    a.benign = app.add_option("--benign", a.flags.benign_events, "Benign records");
    a.chains = app.add_option("--chains", a.flags.malicious_chains, "Lateral movement chains");
    a.chain_length = app.add_option("--chain-length", a.flags.chain_length, "Logins per chain");
    a.chain_window = app.add_option("--chain-window", a.flags.chain_window, "Seconds spanned by one chain");
    a.seed = app.add_option("--seed", a.flags.seed, "Generator seed");
}

int run_synth(const SynthArgs& a, const Diagnostics& diag) {
    ScenarioConfig cfg;
    if (!a.config.empty()) cfg = read_json_file(a.config).get<ScenarioConfig>();
    override_if(a.users, a.flags.n_users, cfg.n_users);
    override_if(a.hosts, a.flags.n_hosts, cfg.n_hosts);
    override_if(a.servers, a.flags.n_servers, cfg.n_servers);
    override_if(a.days, a.flags.days, cfg.days);
    override_if(a.benign, a.flags.benign_events, cfg.benign_events);
    override_if(a.chains, a.flags.malicious_chains, cfg.malicious_chains);
    override_if(a.chain_length, a.flags.chain_length, cfg.chain_length);
    override_if(a.chain_window, a.flags.chain_window, cfg.chain_window);
    override_if(a.seed, a.flags.seed, cfg.seed);

    const auto start = std::chrono::steady_clock::now();
    const auto scenario = generate_scenario(cfg);
    std::string records;
    std::string lanl;
    for (const auto& r : scenario.records) {
        records += to_generic_json(r);
        records += '\n';
        if (r.interaction == Interaction::Login) {
            lanl += to_lanl_line(r);
            lanl += '\n';
        }
    }
    std::string labels;
    for (const auto& k : scenario.labels.entries) {
        labels += to_label_line(k);
        labels += '\n';
    }
    const std::string labels_path = a.labels.empty() ? a.out + ".labels" : a.labels;
    write_file_text(a.out, records);
    write_file_text(labels_path, labels);
    Manifest m{"synth", {{"scenario", cfg}}, {}, {a.out, labels_path}, cfg.seed};
    if (!a.config.empty()) m.inputs.push_back(a.config);
    if (!a.lanl.empty()) {
        write_file_text(a.lanl, lanl);
        m.outputs.push_back(a.lanl);
    }
    write_manifest(m, a.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    diag.info("synthetic scenario written",
              {{"records", scenario.records.size()}, {"labels", scenario.labels.size()}, {"out", a.out}});
    return 0;
}

// ---- build-graph ------------------------------------------------------------

struct BuildArgs {
    std::string input;
    std::string format = "lanl";
    std::string labels;
    std::string out;
    std::string events;
    double top_fraction = 0.01;
    std::size_t min_in_degree = 0;
    CLI::Option* min_in_degree_opt = nullptr;
    Timestamp object_window = 1;
    bool stats = false;
};

void add_build(CLI::App& app, BuildArgs& a) {
    app.add_option("--input", a.input, "Authentication log")->required();
    app.add_option("--format", a.format, "Log format")->check(CLI::IsMember({"lanl", "cert", "generic"}));
    app.add_option("--labels", a.labels, "Malicious-event label file");
    app.add_option("--out", a.out, "Output graph file")->required();
    app.add_option("--events", a.events, "Output event table (default: <out>.events)");
    app.add_option("--server-fraction", a.top_fraction, "Fraction of devices treated as servers");
    a.min_in_degree_opt =
        app.add_option("--server-min-in-degree", a.min_in_degree, "Login in-degree above which a device is a server");
    app.add_option("--object-window", a.object_window, "Seconds within which an object joins a login event");
    app.add_flag("--stats", a.stats, "Print graph statistics as JSON");
}

int run_build(const BuildArgs& a, const WorkerPool& pool, const Diagnostics& diag) {
    const auto start = std::chrono::steady_clock::now();
    const LogFormat format = parse_log_format(a.format);
    auto ingest = read_log_file(a.input, format, pool);
    LabelLoadResult labels;
    if (!a.labels.empty()) labels = load_labels(a.labels, format);
    const auto records = normalize_stream(std::move(ingest.records));

    BuildOptions opts;
    opts.servers.top_fraction = a.top_fraction;
    if (a.min_in_degree_opt->count() > 0) opts.servers.min_in_degree = a.min_in_degree;
    opts.object_window = a.object_window;
    auto built = build_hamg(records, labels.labels, opts);

    const std::string events_path = a.events.empty() ? a.out + ".events" : a.events;
    built.graph.save(a.out);
    save_events({format, built.graph.checksum(), built.events}, events_path);

    std::size_t malicious = 0;
    for (const auto& e : built.events) malicious += e.label == Label::Malicious;
    json orphan_samples = json::array();
    for (const auto& k : built.orphan_samples) orphan_samples.push_back(to_label_line(k));
    json summary{{"lines", ingest.stats.lines},
                 {"parsed", ingest.stats.parsed},
                 {"malformed", ingest.stats.malformed},
                 {"first_errors", ingest.stats.first_errors},
                 {"records", records.size()},
                 {"label_rows_malformed", labels.stats.malformed},
                 {"labels", labels.labels.size()},
                 {"orphan_labels", built.orphan_labels},
                 {"orphan_samples", orphan_samples},
                 {"nodes", built.graph.node_count()},
                 {"edges", built.graph.edge_count()},
                 {"events", built.events.size()},
                 {"malicious_events", malicious}};
    Manifest m{"build-graph",
               {{"format", a.format},
                {"server_fraction", a.top_fraction},
                {"server_min_in_degree", opts.servers.min_in_degree ? json(*opts.servers.min_in_degree) : json()},
                {"object_window", a.object_window}},
               {a.input},
               {a.out, events_path},
               0};
    if (!a.labels.empty()) m.inputs.push_back(a.labels);
    write_manifest(m, a.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (a.stats) std::cout << built.graph.stats().dump(2) << '\n';
    diag.info("ingest summary", summary);
    return 0;
}

// ---- stats ------------------------------------------------------------------

struct StatsArgs {
    std::string graph;
};

int run_stats(const StatsArgs& a) {
    std::cout << Hamg::load(a.graph).stats().dump(2) << '\n';
    return 0;
}

// ---- sample -----------------------------------------------------------------

struct SampleArgs {
    std::string graph;
    std::string events;
    std::string out;
    Timestamp tau = 0;
    CLI::Option* tau_opt = nullptr;
    std::size_t topk = 150;
    int hops = 1;
    std::size_t benign = 0;
    CLI::Option* benign_opt = nullptr;
    std::size_t malicious = 0;
    CLI::Option* malicious_opt = nullptr;
    std::uint64_t sample_seed = 0;
    bool random_subgraph = false;
    std::uint64_t seed = 0;
};

void add_sample(CLI::App& app, SampleArgs& a) {
    app.add_option("--graph", a.graph, "Graph file")->required();
    app.add_option("--events", a.events, "Event table (default: <graph>.events)");
    app.add_option("--out", a.out, "Output dataset (.tasg for binary, JSON lines otherwise)")->required();
    a.tau_opt = app.add_option("--tau", a.tau, "Time window in seconds (default: 3600, or 10800 for CERT logs)");
    app.add_option("--topk", a.topk, "Core-auxiliary edges kept per subgraph");
    app.add_option("--hops", a.hops, "Neighbourhood depth (1 or 2)");
    a.benign_opt = app.add_option("--benign", a.benign, "Sample this many benign events");
    a.malicious_opt = app.add_option("--malicious", a.malicious, "Sample this many malicious events");
    app.add_option("--sample-seed", a.sample_seed, "Seed of the event sample");
    app.add_flag("--random-subgraph", a.random_subgraph, "Size-matched random subgraphs instead of time-aware ones");
    app.add_option("--seed", a.seed, "Seed of the random subgraphs");
}

std::vector<AuthEvent> events_for(const Dataset& ds, const EventTable& table) {
    std::unordered_map<std::uint32_t, const AuthEvent*> by_id;
    for (const auto& e : table.events) by_id.emplace(e.event_id, &e);
    std::vector<AuthEvent> out;
    for (const auto& s : ds.samples) {
        const auto it = by_id.find(s.event_id);
        if (it == by_id.end()) throw ConfigError("event " + std::to_string(s.event_id) + " is not in the event table");
        out.push_back(*it->second);
    }
    return out;
}

EventTable load_matching_events(const std::string& events_path, const Hamg& graph) {
    auto table = load_events(events_path);
    if (table.graph_checksum != graph.checksum()) {
        throw ConfigError("event table " + events_path + " belongs to a different graph");
    }
    return table;
}

int run_sample(const SampleArgs& a, const WorkerPool& pool, const Diagnostics& diag) {
    const auto start = std::chrono::steady_clock::now();
    const auto graph = Hamg::load(a.graph);
    const std::string events_path = a.events.empty() ? a.graph + ".events" : a.events;
    const auto table = load_matching_events(events_path, graph);

    SamplerConfig cfg;
    cfg.tau = a.tau_opt->count() > 0 ? a.tau : default_tau(table.format);
    cfg.k = a.topk;
    cfg.hops = a.hops;
    cfg.validate();

    std::vector<AuthEvent> events = table.events;
    if (a.benign_opt->count() > 0 || a.malicious_opt->count() > 0) {
        constexpr auto all = std::numeric_limits<std::size_t>::max();
        events = sample_events(table.events, a.benign_opt->count() ? a.benign : all,
                               a.malicious_opt->count() ? a.malicious : all, a.sample_seed);
    }
    auto result = build_dataset(graph, events, cfg, pool);
    result.dataset.header.seed = a.sample_seed;
    if (a.random_subgraph) {
        const auto failed = result.failed;
        result = build_random_dataset(graph, events, result.dataset, a.seed, pool);
        result.failed += failed;
    }
    save_dataset(result.dataset, a.out);

    std::size_t malicious = 0;
    for (const auto& s : result.dataset.samples) malicious += s.label == Label::Malicious;
    Manifest m{"sample",
               {{"sampler", sampler_json(cfg)},
                {"random_subgraph", a.random_subgraph},
                {"benign", a.benign_opt->count() ? json(a.benign) : json()},
                {"malicious", a.malicious_opt->count() ? json(a.malicious) : json()},
                {"sample_seed", a.sample_seed}},
               {a.graph, events_path},
               {a.out},
               a.random_subgraph ? a.seed : a.sample_seed};
    write_manifest(m, a.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    diag.info("dataset written", {{"samples", result.dataset.samples.size()},
                                  {"malicious", malicious},
                                  {"failed", result.failed},
                                  {"tau", cfg.tau},
                                  {"out", a.out}});
    return 0;
}

// ---- train ------------------------------------------------------------------

struct ModelFlags {
    bool disable_local = false;
    bool disable_global = false;
    bool disable_pos = false;
    int layers = 0;
    CLI::Option* layers_opt = nullptr;
    int walk_length = 0;
    CLI::Option* walk_opt = nullptr;
    int heads = 0;
    CLI::Option* heads_opt = nullptr;
    int hidden = 0;
    CLI::Option* hidden_opt = nullptr;
    double dropout = 0;
    CLI::Option* dropout_opt = nullptr;
    int epochs = 0;
    CLI::Option* epochs_opt = nullptr;
    int patience = 0;
    CLI::Option* patience_opt = nullptr;
    std::size_t batch_size = 0;
    CLI::Option* batch_opt = nullptr;
    double lr = 0;
    CLI::Option* lr_opt = nullptr;
    bool class_weight = false;
};

void add_model_flags(CLI::App& app, ModelFlags& f) {
    app.add_flag("--disable-local", f.disable_local, "Remove the local attention branch");
    app.add_flag("--disable-global", f.disable_global, "Remove the global attention branch");
    app.add_flag("--disable-pos", f.disable_pos, "Zero the random-walk position features");
    f.layers_opt = app.add_option("--layers", f.layers, "Local attention layers");
    f.walk_opt = app.add_option("--walk-length", f.walk_length, "Random-walk length K");
    f.heads_opt = app.add_option("--heads", f.heads, "Global attention heads");
    f.hidden_opt = app.add_option("--hidden", f.hidden, "Hidden width");
    f.dropout_opt = app.add_option("--dropout", f.dropout, "Dropout rate");
    f.epochs_opt = app.add_option("--epochs", f.epochs, "Maximum epochs");
    f.patience_opt = app.add_option("--patience", f.patience, "Epochs without validation improvement before stopping");
    f.batch_opt = app.add_option("--batch-size", f.batch_size, "Mini-batch size");
    f.lr_opt = app.add_option("--lr", f.lr, "Learning rate");
    app.add_flag("--class-weight", f.class_weight, "Weight the loss by inverse class frequency");
}

void apply_model_flags(const ModelFlags& f, EncoderConfig& enc, TrainConfig& tc) {
    enc.disable_local = enc.disable_local || f.disable_local;
    enc.disable_global = enc.disable_global || f.disable_global;
    enc.disable_pos = enc.disable_pos || f.disable_pos;
    override_if(f.layers_opt, f.layers, enc.layers);
    override_if(f.walk_opt, f.walk_length, enc.walk_length);
    override_if(f.heads_opt, f.heads, enc.heads);
    override_if(f.hidden_opt, f.hidden, enc.hidden);
    override_if(f.dropout_opt, f.dropout, enc.dropout);
    override_if(f.epochs_opt, f.epochs, tc.max_epochs);
    override_if(f.patience_opt, f.patience, tc.patience);
    override_if(f.batch_opt, f.batch_size, tc.batch_size);
    override_if(f.lr_opt, f.lr, tc.learning_rate);
    tc.class_weight = tc.class_weight || f.class_weight;
}

struct TrainArgs {
    std::string data;
    std::uint64_t seed = 0;
    std::string config;
    std::string out;
    std::string history;
    bool random_subgraph = false;
    std::string graph;
    std::string events;
    ModelFlags model;
};

void add_train(CLI::App& app, TrainArgs& a) {
    app.add_option("--data", a.data, "Dataset file")->required();
    app.add_option("--seed", a.seed, "Seed of the split, initialisation, shuffling and dropout");
    app.add_option("--config", a.config, "JSON file with \"encoder\" and \"train\" sections");
    app.add_option("--out", a.out, "Output checkpoint")->required();
    app.add_option("--history", a.history, "Per-epoch CSV (default: <out>.history.csv)");
    app.add_flag("--random-subgraph", a.random_subgraph,
                 "Train on size-matched random subgraphs of the same events (needs --graph)");
    app.add_option("--graph", a.graph, "Graph file for --random-subgraph");
    app.add_option("--events", a.events, "Event table for --random-subgraph (default: <graph>.events)");
    add_model_flags(app, a.model);
}

Dataset random_counterpart(const Dataset& ds, const std::string& graph_path, const std::string& events_arg,
                           std::uint64_t seed, const WorkerPool& pool, std::vector<std::string>& inputs) {
    if (graph_path.empty()) throw ConfigError("--random-subgraph needs --graph");
    const auto graph = Hamg::load(graph_path);
    if (graph.checksum() != ds.header.graph_checksum) throw ConfigError("dataset was not sampled from " + graph_path);
    const std::string events_path = events_arg.empty() ? graph_path + ".events" : events_arg;
    const auto table = load_matching_events(events_path, graph);
    inputs.push_back(graph_path);
    inputs.push_back(events_path);
    return build_random_dataset(graph, events_for(ds, table), ds, seed, pool).dataset;
}

int run_train(const TrainArgs& a, const WorkerPool& pool, const Diagnostics& diag) {
    const auto start = std::chrono::steady_clock::now();
    EncoderConfig enc;
    TrainConfig tc;
    std::vector<std::string> inputs{a.data};
    if (!a.config.empty()) {
        const auto j = read_json_file(a.config);
        if (j.contains("encoder")) enc = j["encoder"].get<EncoderConfig>();
        if (j.contains("train")) tc = j["train"].get<TrainConfig>();
        inputs.push_back(a.config);
    }
    apply_model_flags(a.model, enc, tc);
    enc.validate();
    tc.validate();

    Dataset ds = load_dataset(a.data);
    if (a.random_subgraph) ds = random_counterpart(ds, a.graph, a.events, a.seed, pool, inputs);
    const auto labels = dataset_labels(ds);
    const auto split = split_dataset(labels, tc.split, a.seed);
    diag.info("training", {{"samples", ds.samples.size()},
                           {"train", split.train.size()},
                           {"val", split.val.size()},
                           {"test", split.test.size()},
                           {"seed", a.seed}});
    const auto result = train_model(ds, split, enc, tc, a.seed, pool, [&](const EpochRecord& r) {
        diag.info("epoch", {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_f1", r.val_f1},
                            {"val_auc", r.val_auc}});
    });

    Checkpoint ck;
    ck.params = result.best;
    ck.meta = {{"seed", a.seed},
               {"train", tc},
               {"random_subgraph", a.random_subgraph},
               {"best_epoch", result.best_epoch},
               {"dataset", {{"graph_checksum", hex64(ds.header.graph_checksum)},
                            {"samples", ds.samples.size()},
                            {"sampler", sampler_json(ds.header.cfg)}}}};
    save_checkpoint(ck, a.out);
    const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
    write_file_text(history, history_csv(result.history));
    Manifest m{"train", {{"encoder", enc}, {"train", tc}, {"random_subgraph", a.random_subgraph}}, inputs,
               {a.out, history}, a.seed};
    write_manifest(m, a.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    diag.info("checkpoint written", {{"out", a.out}, {"best_epoch", result.best_epoch}});
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string data;
    std::string ckpt;
    std::string out;
    std::string split = "test";
    std::string export_attention;
    std::size_t attention_limit = 16;
    std::string graph;
    std::string events;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    app.add_option("--data", a.data, "Dataset file")->required();
    app.add_option("--ckpt", a.ckpt, "Checkpoint")->required();
    app.add_option("--out", a.out, "Output metrics JSON")->required();
    app.add_option("--split", a.split, "Which split to score")->check(CLI::IsMember({"train", "val", "test", "all"}));
    app.add_option("--export-attention", a.export_attention, "Write alpha and beta matrices as JSON");
    app.add_option("--attention-limit", a.attention_limit, "Subgraphs included in the attention export");
    app.add_option("--graph", a.graph, "Graph file, for checkpoints trained with --random-subgraph");
    app.add_option("--events", a.events, "Event table (default: <graph>.events)");
}

int run_eval(const EvalArgs& a, const WorkerPool& pool, const Diagnostics& diag) {
    const auto start = std::chrono::steady_clock::now();
    const auto ck = load_checkpoint(a.ckpt);
    std::vector<std::string> inputs{a.data, a.ckpt};
    Dataset ds = load_dataset(a.data);
    const auto seed = ck.meta.value("seed", std::uint64_t{0});
    const TrainConfig tc = ck.meta.value("train", TrainConfig{});
    if (ck.meta.value("random_subgraph", false) && ds.header.sampler == SamplerKind::TimeAware) {
        ds = random_counterpart(ds, a.graph, a.events, seed, pool, inputs);
    }
    const auto split = split_dataset(dataset_labels(ds), tc.split, seed);
    std::vector<std::size_t> indices;
    if (a.split == "train") {
        indices = split.train;
    } else if (a.split == "val") {
        indices = split.val;
    } else if (a.split == "test") {
        indices = split.test;
    } else {
        for (std::size_t i = 0; i < ds.samples.size(); ++i) indices.push_back(i);
    }
    const auto m = evaluate(ck.params, ds, indices, pool);
    json config{{"encoder", ck.params.cfg}, {"checkpoint", ck.meta}, {"split", a.split}};
    write_file_text(a.out, metrics_document(config, {m}, {seed}).dump(2) + "\n");

    std::vector<std::string> outputs{a.out};
    if (!a.export_attention.empty()) {
        const auto bound = bind(ck.params, false);
        json dump = json::array();
        for (std::size_t i = 0; i < std::min(a.attention_limit, indices.size()); ++i) {
            const auto& s = ds.samples[indices[i]];
            const auto in = augment_features<float>(s, ds.header.id_bits(), ck.params.cfg.walk_length,
                                                    ck.params.cfg.disable_pos);
            AttentionTrace trace;
            ForwardOptions opts;
            opts.trace = &trace;
            const auto out = encode_subgraph(in, bound, opts);
            auto j = attention_trace_json(trace, s.nodes.size());
            j["event_id"] = s.event_id;
            j["label"] = s.label == Label::Malicious ? 1 : 0;
            j["malicious_probability"] = out.probabilities.at(0, 1);
            dump.push_back(std::move(j));
        }
        write_file_text(a.export_attention, dump.dump() + "\n");
        outputs.push_back(a.export_attention);
    }
    Manifest man{"eval", {{"split", a.split}, {"attention_limit", a.attention_limit}}, inputs, outputs, seed};
    write_manifest(man, a.out, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    diag.info("evaluation", {{"samples", indices.size()}, {"f1", m.f1}, {"auc", m.auc}, {"out", a.out}});
    return 0;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
    std::uint64_t seed = 7;
    CLI::Option* seed_opt = nullptr;
    std::string out = "bench_metrics.json";
    std::string config;
    std::vector<std::uint64_t> seeds;
    CLI::Option* seeds_opt = nullptr;
    std::vector<std::string> variants;
    CLI::Option* variants_opt = nullptr;
    std::size_t benign = 0;
    CLI::Option* benign_opt = nullptr;
    std::size_t malicious = 0;
    CLI::Option* malicious_opt = nullptr;
    ModelFlags model;
};

void add_bench(CLI::App& app, BenchArgs& a) {
    a.seed_opt = app.add_option("--seed", a.seed, "Seed of the scenario and event sample");
    app.add_option("--out", a.out, "Output metrics JSON");
    app.add_option("--config", a.config, "Benchmark JSON config");
    a.seeds_opt = app.add_option("--seeds", a.seeds, "Training seeds")->delimiter(',');
    a.variants_opt = app.add_option("--variants", a.variants, "full, no-local, no-global, no-pos, random-subgraph")
                         ->delimiter(',');
    a.benign_opt = app.add_option("--benign", a.benign, "Benign events sampled");
    a.malicious_opt = app.add_option("--malicious", a.malicious, "Malicious events sampled");
    add_model_flags(app, a.model);
}

int run_bench_cmd(const BenchArgs& a, const WorkerPool& pool, const Diagnostics& diag) {
    const auto start = std::chrono::steady_clock::now();
    BenchConfig cfg;
    std::vector<std::string> inputs;
    if (!a.config.empty()) {
        apply_bench_json(read_json_file(a.config), cfg);
        inputs.push_back(a.config);
    }
    override_if(a.seed_opt, a.seed, cfg.seed);
    override_if(a.seeds_opt, a.seeds, cfg.train.seeds);
    override_if(a.benign_opt, a.benign, cfg.benign_samples);
    override_if(a.malicious_opt, a.malicious, cfg.malicious_samples);
    if (a.variants_opt->count() > 0) {
        cfg.variants.clear();
        for (const auto& v : a.variants) cfg.variants.push_back(parse_variant(v));
    }
    apply_model_flags(a.model, cfg.encoder, cfg.train);
    cfg.encoder.validate();
    cfg.train.validate();

    const auto report = run_bench(cfg, pool, [&](const std::string& s) { diag.info(s); });
    write_file_text(a.out, report.dump(2) + "\n");
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest({"bench", bench_config_json(cfg), inputs, {a.out}, cfg.seed}, a.out, seconds);
    json brief = json::object();
    for (const auto& [name, v] : report["variants"].items()) {
        brief[name] = {{"f1", v["mean"]["f1"]}, {"auc", v["mean"]["auc"]}};
    }
    diag.info("bench finished", {{"seconds", seconds}, {"variants", brief}, {"out", a.out}});
    return 0;
}

} // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Lateral movement detection on authentication graphs", "lmdetect"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.fallthrough();

    Globals globals;
    app.add_option("--threads", globals.threads, "Worker threads (default: logical cores)");
    app.add_flag("--json-logs", globals.json_logs, "Structured diagnostics on standard error");

    SynthArgs synth;
    BuildArgs build;
    StatsArgs stats;
    SampleArgs sample;
    TrainArgs train;
    EvalArgs eval;
    BenchArgs bench;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic log with injected lateral movement");
    add_synth(*synth_cmd, synth);
    auto* build_cmd = app.add_subcommand("build-graph", "Build the authentication multigraph from a log");
    add_build(*build_cmd, build);
    auto* stats_cmd = app.add_subcommand("stats", "Print graph statistics");
    stats_cmd->add_option("--graph", stats.graph, "Graph file")->required();
    auto* sample_cmd = app.add_subcommand("sample", "Extract one subgraph per event");
    add_sample(*sample_cmd, sample);
    auto* train_cmd = app.add_subcommand("train", "Train the encoder");
    add_train(*train_cmd, train);
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    add_eval(*eval_cmd, eval);
    auto* bench_cmd = app.add_subcommand("bench", "Run the synthetic end-to-end benchmark");
    add_bench(*bench_cmd, bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const Diagnostics diag(globals.json_logs);
    try {
        const WorkerPool pool(globals.threads);
        if (synth_cmd->parsed()) return run_synth(synth, diag);
        if (build_cmd->parsed()) return run_build(build, pool, diag);
        if (stats_cmd->parsed()) return run_stats(stats);
        if (sample_cmd->parsed()) return run_sample(sample, pool, diag);
        if (train_cmd->parsed()) return run_train(train, pool, diag);
        if (eval_cmd->parsed()) return run_eval(eval, pool, diag);
        if (bench_cmd->parsed()) return run_bench_cmd(bench, pool, diag);
    } catch (const NonFiniteLoss& e) {
        diag.error(e.what(), {{"kind", "NonFiniteLoss"}, {"batch", e.batch()}});
        return 1;
    } catch (const Error& e) {
        diag.error(e.what(), {{"kind", "Error"}});
        return 1;
    } catch (const std::exception& e) {
        diag.error(e.what(), {{"kind", "exception"}});
        return 1;
    }
    return 2;
}

} // namespace lmd
