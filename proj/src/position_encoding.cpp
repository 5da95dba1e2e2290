#include <algorithm>

#include "lmd/encoder.hpp"
#include "lmd/error.hpp"

namespace lmd {

std::vector<double> position_encoding(std::size_t n, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
                                      int K) {
    if (K < 1) throw ConfigError("walk length K must be at least 1");
    const auto k = static_cast<std::size_t>(K);
    std::vector<std::uint8_t> adj(n * n, 0);
    for (const auto& [a, b] : edges) {
        if (a >= n || b >= n) throw ShapeMismatch("position_encoding: edge endpoint out of range");
        adj[a * n + b] = 1;
        adj[b * n + a] = 1;
    }
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t degree = 0;
        for (std::size_t j = 0; j < n; ++j) degree += adj[i * n + j];
        if (degree == 0) {
            m[i * n + i] = 1.0;
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (adj[i * n + j]) m[i * n + j] = 1.0 / static_cast<double>(degree);
        }
    }

    std::vector<double> out(n * n * k, 0.0);
    std::vector<double> power(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) power[i * n + i] = 1.0;
    std::vector<double> next(n * n);
    for (std::size_t s = 0; s < k; ++s) {
        for (std::size_t idx = 0; idx < n * n; ++idx) out[idx * k + s] = power[idx];
        if (s + 1 == k) break;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < n; ++p) {
                const double v = power[i * n + p];
                if (v == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) next[i * n + j] += v * m[p * n + j];
            }
        }
        power.swap(next);
    }
    return out;
}

std::vector<double> compute_position_encoding(const TimeAwareSubgraph& g, int K) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    pairs.reserve(g.edges.size());
    for (const auto& e : g.edges) pairs.emplace_back(e.src, e.dst);
    return position_encoding(g.nodes.size(), pairs, K);
}

} // namespace lmd
