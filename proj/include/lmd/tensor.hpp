#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lmd/random.hpp"

/// Dense rank-2 tensors with reverse-mode automatic differentiation.
///
/// Every operation records a backward rule when any operand requires a
/// gradient. backward() walks the recorded graph once in reverse
/// topological order; all reductions run in a fixed sequential order so
/// results are bit-reproducible.
namespace lmd::ad {

template <typename T>
struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor constant(std::size_t rows, std::size_t cols, std::vector<T> values);
    static Tensor zeros(std::size_t rows, std::size_t cols);
    /// Leaf that accumulates gradients.
    static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<T> values);

    std::size_t rows() const noexcept { return node_->rows; }
    std::size_t cols() const noexcept { return node_->cols; }
    std::size_t size() const noexcept { return node_->value.size(); }
    bool defined() const noexcept { return static_cast<bool>(node_); }
    bool requires_grad() const noexcept { return node_->requires_grad; }

    std::span<T> value() noexcept { return node_->value; }
    std::span<const T> value() const noexcept { return node_->value; }
    T at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
    T item() const;

    /// Gradient buffer; zeros when nothing has been propagated.
    std::span<const T> grad() const;
    void zero_grad();

    std::string shape_string() const;
    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Fills gradients of every tensor reachable from a 1x1 loss. Throws NotScalar.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// a (n x m) plus a 1 x m row broadcast over every row.
template <typename T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, std::size_t rows, std::size_t cols);
/// Columns [begin, begin + count).
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count);
/// Rows [begin, begin + count).
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count);

template <typename T> Tensor<T> row_softmax(const Tensor<T>& a);
/// Softmax over the entries of each row whose mask byte is non-zero; masked
/// entries get probability 0. Every row needs at least one open entry.
template <typename T> Tensor<T> masked_row_softmax(const Tensor<T>& a, std::span<const std::uint8_t> mask);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.01));
template <typename T> Tensor<T> elu(const Tensor<T>& a, T alpha = T(1));
/// sigma(x) = sqrt(relu(x)) - sqrt(relu(-x)); derivative at 0 taken as 0.
template <typename T> Tensor<T> signed_sqrt(const Tensor<T>& a);

/// Sum of all entries, 1 x 1.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
/// Column sums over rows (sum pooling), 1 x cols.
template <typename T> Tensor<T> sum_rows(const Tensor<T>& a);

/// Multiplies by mask / (1 - rate); mask entries are 0 or 1.
template <typename T> Tensor<T> dropout_with_mask(const Tensor<T>& a, std::span<const std::uint8_t> mask, T rate);
/// Draws a Bernoulli(1 - rate) keep-mask from rng. rate 0 is the identity.
template <typename T> Tensor<T> dropout(const Tensor<T>& a, T rate, Rng& rng);

/// a, b column vectors (n x 1) -> n x n with entry (i, j) = a_i + b_j.
template <typename T> Tensor<T> outer_add(const Tensor<T>& a, const Tensor<T>& b);
/// a, b (n x d) -> (n*n) x d with row i*n + j = a_i + b_j.
template <typename T> Tensor<T> pair_sum(const Tensor<T>& a, const Tensor<T>& b);
/// w (n x n), m ((n*n) x d) -> n x d with row i = sum_j w_ij m_(i*n+j).
template <typename T> Tensor<T> pair_weighted_sum(const Tensor<T>& w, const Tensor<T>& m);

/// Mean negative log-likelihood of the labelled column; log clamped at 1e-12.
template <typename T> Tensor<T> cross_entropy(const Tensor<T>& probabilities, std::span<const int> labels);
/// Mean cross-entropy computed from pre-softmax scores (log-sum-exp form).
/// Same value as cross_entropy(row_softmax(logits)) without the clamp, and
/// accurate when the softmax saturates.
template <typename T> Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Records the smallest |x| fed to a kinked activation on this thread while
/// alive. Gradient checks use it to reject evaluation points near a kink.
/// Signed sqrt is kept apart: its slope is unbounded at zero, so finite
/// differences need a much wider margin there than at a relu corner.
class KinkMonitor {
public:
    KinkMonitor();
    ~KinkMonitor();
    KinkMonitor(const KinkMonitor&) = delete;
    KinkMonitor& operator=(const KinkMonitor&) = delete;

    double min_distance() const noexcept { return min_; }
    double min_sqrt_distance() const noexcept { return min_sqrt_; }
    void observe(double x) noexcept {
        const double d = x < 0 ? -x : x;
        if (d < min_) min_ = d;
    }
    void observe_sqrt(double x) noexcept {
        const double d = x < 0 ? -x : x;
        if (d < min_sqrt_) min_sqrt_ = d;
    }
    static KinkMonitor* active() noexcept;

private:
    double min_;
    double min_sqrt_;
    KinkMonitor* previous_;
};

struct FiniteDiffOptions {
    double eps = 1e-5;
    /// Coordinates for which this returns true are not checked.
    std::function<bool(std::size_t param, std::size_t coord)> exclude;
};

/// Central-difference check of backward(). Returns the maximum over checked
/// coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double finite_diff_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> params,
                         const FiniteDiffOptions& opts = {});

} // namespace lmd::ad
