#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmd/encoder.hpp"
#include "lmd/subgraph.hpp"
#include "lmd/synth.hpp"
#include "lmd/train.hpp"

namespace lmd {

/// Model variants a benchmark can run.
enum class Variant { Full, NoLocal, NoGlobal, NoPos, RandomSubgraph };

std::string_view variant_name(Variant v) noexcept;
Variant parse_variant(std::string_view name);

struct BenchConfig {
    ScenarioConfig scenario;
    std::size_t benign_samples = 5000;
    std::size_t malicious_samples = 200;
    SamplerConfig sampler;
    EncoderConfig encoder;
    TrainConfig train{16, 0.0005, 12, 5, {0, 1, 2, 3, 4}};
    std::vector<Variant> variants{Variant::Full, Variant::NoGlobal, Variant::NoPos};
    /// Seed of the scenario and of the event sample.
    std::uint64_t seed = 7;
};

nlohmann::json bench_config_json(const BenchConfig& c);
/// Overlays the sections present in `j` (same layout as bench_config_json).
void apply_bench_json(const nlohmann::json& j, BenchConfig& c);

/// Event sample: every malicious event up to `malicious` plus `benign`
/// benign events drawn uniformly without replacement; returned in event order.
std::vector<AuthEvent> sample_events(std::span<const AuthEvent> events, std::size_t benign, std::size_t malicious,
                                     std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

/// Runs a train/evaluate cycle for one dataset over every seed and returns
/// {per_seed, mean, std, confusion_total, std_estimator}.
nlohmann::json run_seeds(const Dataset& ds, const EncoderConfig& enc, const TrainConfig& train,
                         const WorkerPool& pool, const ProgressFn& progress = {});

/// Synthetic scenario, graph, sampling, the off-home baseline and every
/// configured variant over the configured seeds. The result holds no
/// timings, so equal configs give equal documents.
nlohmann::json run_bench(const BenchConfig& cfg, const WorkerPool& pool, const ProgressFn& progress = {});

} // namespace lmd
