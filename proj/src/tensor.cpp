#include "lmd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "lmd/error.hpp"

namespace lmd::ad {

namespace {

thread_local KinkMonitor* g_kink_monitor = nullptr;

template <typename T>
std::shared_ptr<Node<T>> make_node(std::size_t rows, std::size_t cols, std::initializer_list<const Tensor<T>*> inputs) {
    auto n = std::make_shared<Node<T>>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(rows * cols, T(0));
    for (const auto* in : inputs) n->requires_grad = n->requires_grad || in->requires_grad();
    if (n->requires_grad) {
        for (const auto* in : inputs) n->parents.push_back(in->node());
    }
    return n;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeMismatch(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

// C (n x m) += A (n x k) * B (k x m)
template <typename T>
void gemm_acc(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < n; ++i) {
        T* crow = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T(0)) continue;
            const T* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src) {
    std::vector<T> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
    }
    return out;
}

template <typename T>
void observe_kinks(std::span<const T> xs) {
    if (auto* m = g_kink_monitor) {
        for (T x : xs) m->observe(static_cast<double>(x));
    }
}

template <typename T, typename Forward, typename Derivative>
Tensor<T> unary(const Tensor<T>& a, Forward f, Derivative df) {
    auto out = make_node<T>(a.rows(), a.cols(), {&a});
    const auto av = a.value();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = f(av[i]);
    if (out->requires_grad) {
        out->backward = [df](Node<T>& self) {
            auto& in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                in.grad[i] += self.grad[i] * df(in.value[i], self.value[i]);
            }
        };
    }
    return Tensor<T>(out);
}

} // namespace

KinkMonitor::KinkMonitor()
    : min_(std::numeric_limits<double>::infinity()), min_sqrt_(std::numeric_limits<double>::infinity()),
      previous_(g_kink_monitor) {
    g_kink_monitor = this;
}

KinkMonitor::~KinkMonitor() { g_kink_monitor = previous_; }

KinkMonitor* KinkMonitor::active() noexcept { return g_kink_monitor; }

template <typename T>
Tensor<T> Tensor<T>::constant(std::size_t rows, std::size_t cols, std::vector<T> values) {
    if (values.size() != rows * cols) {
        throw ShapeMismatch("constant: " + std::to_string(values.size()) + " values for shape [" +
                            std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
    auto n = std::make_shared<Node<T>>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    return Tensor(n);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::size_t rows, std::size_t cols) {
    return constant(rows, cols, std::vector<T>(rows * cols, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(std::size_t rows, std::size_t cols, std::vector<T> values) {
    Tensor t = constant(rows, cols, std::move(values));
    t.node_->requires_grad = true;
    t.node_->ensure_grad();
    return t;
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw NotScalar("item() on tensor of shape " + shape_string());
    return node_->value[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
std::string Tensor<T>::shape_string() const {
    if (!node_) return "[undefined]";
    return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw NotScalar("backward() needs a 1x1 loss, got " + loss.shape_string());
    if (!loss.requires_grad()) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node<T>* n : order) {
        if (n->backward) n->grad.assign(n->value.size(), T(0));
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.rows()) throw ShapeMismatch("matmul: " + a.shape_string() + " x " + b.shape_string());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    auto out = make_node<T>(n, m, {&a, &b});
    gemm_acc(n, k, m, a.value().data(), b.value().data(), out->value.data());
    if (out->requires_grad) {
        out->backward = [n, k, m](Node<T>& self) {
            auto& A = *self.parents[0];
            auto& B = *self.parents[1];
            if (A.requires_grad) {
                A.ensure_grad();
                const auto bt = transpose(k, m, B.value.data());
                gemm_acc(n, m, k, self.grad.data(), bt.data(), A.grad.data());
            }
            if (B.requires_grad) {
                B.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    const T* g = self.grad.data() + i * m;
                    for (std::size_t p = 0; p < k; ++p) {
                        const T av = A.value[i * k + p];
                        if (av == T(0)) continue;
                        T* db = B.grad.data() + p * m;
                        for (std::size_t j = 0; j < m; ++j) db[j] += av * g[j];
                    }
                }
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    auto out = make_node<T>(a.rows(), a.cols(), {&a, &b});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] + b.value()[i];
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            for (auto& p : self.parents) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ShapeMismatch("add_row: " + a.shape_string() + " + " + row.shape_string());
    }
    const std::size_t n = a.rows(), m = a.cols();
    auto out = make_node<T>(n, m, {&a, &row});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out->value[i * m + j] = a.value()[i * m + j] + row.value()[j];
    }
    if (out->requires_grad) {
        out->backward = [n, m](Node<T>& self) {
            auto& A = *self.parents[0];
            auto& R = *self.parents[1];
            if (A.requires_grad) {
                A.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
            }
            if (R.requires_grad) {
                R.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < m; ++j) R.grad[j] += self.grad[i * m + j];
                }
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "hadamard");
    auto out = make_node<T>(a.rows(), a.cols(), {&a, &b});
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] * b.value()[i];
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            auto& A = *self.parents[0];
            auto& B = *self.parents[1];
            if (A.requires_grad) {
                A.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * B.value[i];
            }
            if (B.requires_grad) {
                B.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i] += self.grad[i] * A.value[i];
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) throw ShapeMismatch("concat_cols: " + parts[0].shape_string() + " vs " + p.shape_string());
        total += p.cols();
    }
    auto out = std::make_shared<Node<T>>();
    out->rows = n;
    out->cols = total;
    out->value.assign(n * total, T(0));
    for (const auto& p : parts) out->requires_grad = out->requires_grad || p.requires_grad();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(p.value().data() + i * p.cols(), p.cols(), out->value.data() + i * total + offset);
        }
        offset += p.cols();
        if (out->requires_grad) out->parents.push_back(p.node());
    }
    if (out->requires_grad) {
        out->backward = [n, total](Node<T>& self) {
            std::size_t off = 0;
            for (auto& p : self.parents) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < p->cols; ++j) p->grad[i * p->cols + j] += self.grad[i * total + off + j];
                    }
                }
                off += p->cols;
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.size()) {
        throw ShapeMismatch("reshape: " + a.shape_string() + " to [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "]");
    }
    auto out = make_node<T>(rows, cols, {&a});
    std::copy(a.value().begin(), a.value().end(), out->value.begin());
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols()) {
        throw ShapeMismatch("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                            ") of " + a.shape_string());
    }
    const std::size_t n = a.rows(), m = a.cols();
    auto out = make_node<T>(n, count, {&a});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.value().data() + i * m + begin, count, out->value.data() + i * count);
    }
    if (out->requires_grad) {
        out->backward = [n, m, begin, count](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < count; ++j) A.grad[i * m + begin + j] += self.grad[i * count + j];
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows()) {
        throw ShapeMismatch("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                            ") of " + a.shape_string());
    }
    const std::size_t m = a.cols();
    auto out = make_node<T>(count, m, {&a});
    std::copy_n(a.value().data() + begin * m, count * m, out->value.data());
    if (out->requires_grad) {
        out->backward = [begin, m](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[begin * m + i] += self.grad[i];
        };
    }
    return Tensor<T>(out);
}

namespace {

template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& a, std::span<const std::uint8_t> mask) {
    const std::size_t n = a.rows(), m = a.cols();
    auto out = make_node<T>(n, m, {&a});
    const auto av = a.value();
    for (std::size_t i = 0; i < n; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < m; ++j) {
            if (!mask.empty() && !mask[i * m + j]) continue;
            mx = std::max(mx, av[i * m + j]);
            any = true;
        }
        if (!any) throw ShapeMismatch("softmax: row " + std::to_string(i) + " is fully masked");
        T total = T(0);
        for (std::size_t j = 0; j < m; ++j) {
            if (!mask.empty() && !mask[i * m + j]) continue;
            const T e = std::exp(av[i * m + j] - mx);
            out->value[i * m + j] = e;
            total += e;
        }
        for (std::size_t j = 0; j < m; ++j) out->value[i * m + j] /= total;
    }
    if (out->requires_grad) {
        out->backward = [n, m](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                T dot = T(0);
                for (std::size_t j = 0; j < m; ++j) dot += self.value[i * m + j] * self.grad[i * m + j];
                for (std::size_t j = 0; j < m; ++j) {
                    A.grad[i * m + j] += self.value[i * m + j] * (self.grad[i * m + j] - dot);
                }
            }
        };
    }
    return Tensor<T>(out);
}

} // namespace

template <typename T>
Tensor<T> row_softmax(const Tensor<T>& a) {
    return softmax_impl(a, {});
}

template <typename T>
Tensor<T> masked_row_softmax(const Tensor<T>& a, std::span<const std::uint8_t> mask) {
    if (mask.size() != a.size()) throw ShapeMismatch("masked_row_softmax: mask size differs from " + a.shape_string());
    return softmax_impl(a, mask);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    observe_kinks(a.value());
    return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    observe_kinks(a.value());
    return unary(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                 [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& a, T alpha) {
    return unary(a, [alpha](T x) { return x > T(0) ? x : alpha * (std::exp(x) - T(1)); },
                 [alpha](T x, T y) { return x > T(0) ? T(1) : y + alpha; });
}

template <typename T>
Tensor<T> signed_sqrt(const Tensor<T>& a) {
    if (auto* m = g_kink_monitor) {
        for (T x : a.value()) m->observe_sqrt(static_cast<double>(x));
    }
    return unary(
        a,
        [](T x) {
            if (x > T(0)) return std::sqrt(x);
            if (x < T(0)) return -std::sqrt(-x);
            return T(0);
        },
        [](T x, T y) {
            if (x == T(0)) return T(0);
            return T(0.5) / (y > T(0) ? y : -y);
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    auto out = make_node<T>(1, 1, {&a});
    T total = T(0);
    for (T v : a.value()) total += v;
    out->value[0] = total;
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (auto& g : A.grad) g += self.grad[0];
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a) {
    const std::size_t n = a.rows(), m = a.cols();
    auto out = make_node<T>(1, m, {&a});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out->value[j] += a.value()[i * m + j];
    }
    if (out->requires_grad) {
        out->backward = [n, m](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) A.grad[i * m + j] += self.grad[j];
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> dropout_with_mask(const Tensor<T>& a, std::span<const std::uint8_t> mask, T rate) {
    if (mask.size() != a.size()) throw ShapeMismatch("dropout: mask size differs from " + a.shape_string());
    if (!(rate >= T(0) && rate < T(1))) throw ConfigError("dropout rate must be in [0, 1)");
    const T keep = T(1) / (T(1) - rate);
    std::vector<T> factors(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) factors[i] = mask[i] ? keep : T(0);
    auto out = make_node<T>(a.rows(), a.cols(), {&a});
    for (std::size_t i = 0; i < factors.size(); ++i) out->value[i] = a.value()[i] * factors[i];
    if (out->requires_grad) {
        out->backward = [factors = std::move(factors)](Node<T>& self) {
            auto& A = *self.parents[0];
            A.ensure_grad();
            for (std::size_t i = 0; i < factors.size(); ++i) A.grad[i] += self.grad[i] * factors[i];
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, T rate, Rng& rng) {
    if (rate == T(0)) return a;
    std::vector<std::uint8_t> mask(a.size());
    for (auto& m : mask) m = rng.uniform() >= static_cast<double>(rate) ? 1 : 0;
    return dropout_with_mask(a, mask, rate);
}

template <typename T>
Tensor<T> outer_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != 1 || b.cols() != 1 || a.rows() != b.rows()) {
        throw ShapeMismatch("outer_add: " + a.shape_string() + " and " + b.shape_string());
    }
    const std::size_t n = a.rows();
    auto out = make_node<T>(n, n, {&a, &b});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out->value[i * n + j] = a.value()[i] + b.value()[j];
    }
    if (out->requires_grad) {
        out->backward = [n](Node<T>& self) {
            auto& A = *self.parents[0];
            auto& B = *self.parents[1];
            if (A.requires_grad) A.ensure_grad();
            if (B.requires_grad) B.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const T g = self.grad[i * n + j];
                    if (A.requires_grad) A.grad[i] += g;
                    if (B.requires_grad) B.grad[j] += g;
                }
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> pair_sum(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "pair_sum");
    const std::size_t n = a.rows(), d = a.cols();
    auto out = make_node<T>(n * n, d, {&a, &b});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T* o = out->value.data() + (i * n + j) * d;
            for (std::size_t c = 0; c < d; ++c) o[c] = a.value()[i * d + c] + b.value()[j * d + c];
        }
    }
    if (out->requires_grad) {
        out->backward = [n, d](Node<T>& self) {
            auto& A = *self.parents[0];
            auto& B = *self.parents[1];
            if (A.requires_grad) A.ensure_grad();
            if (B.requires_grad) B.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const T* g = self.grad.data() + (i * n + j) * d;
                    if (A.requires_grad) {
                        for (std::size_t c = 0; c < d; ++c) A.grad[i * d + c] += g[c];
                    }
                    if (B.requires_grad) {
                        for (std::size_t c = 0; c < d; ++c) B.grad[j * d + c] += g[c];
                    }
                }
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> pair_weighted_sum(const Tensor<T>& w, const Tensor<T>& m) {
    const std::size_t n = w.rows();
    if (w.cols() != n || m.rows() != n * n) {
        throw ShapeMismatch("pair_weighted_sum: " + w.shape_string() + " and " + m.shape_string());
    }
    const std::size_t d = m.cols();
    auto out = make_node<T>(n, d, {&w, &m});
    for (std::size_t i = 0; i < n; ++i) {
        T* o = out->value.data() + i * d;
        for (std::size_t j = 0; j < n; ++j) {
            const T wij = w.value()[i * n + j];
            const T* row = m.value().data() + (i * n + j) * d;
            for (std::size_t c = 0; c < d; ++c) o[c] += wij * row[c];
        }
    }
    if (out->requires_grad) {
        out->backward = [n, d](Node<T>& self) {
            auto& W = *self.parents[0];
            auto& M = *self.parents[1];
            if (W.requires_grad) W.ensure_grad();
            if (M.requires_grad) M.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T* g = self.grad.data() + i * d;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t pair = i * n + j;
                    if (W.requires_grad) {
                        const T* row = M.value.data() + pair * d;
                        T acc = T(0);
                        for (std::size_t c = 0; c < d; ++c) acc += g[c] * row[c];
                        W.grad[pair] += acc;
                    }
                    if (M.requires_grad) {
                        const T wij = W.value[pair];
                        T* mg = M.grad.data() + pair * d;
                        for (std::size_t c = 0; c < d; ++c) mg[c] += wij * g[c];
                    }
                }
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probabilities, std::span<const int> labels) {
    const std::size_t n = probabilities.rows(), c = probabilities.cols();
    if (labels.size() != n) {
        throw ShapeMismatch("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            probabilities.shape_string());
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= c) throw ShapeMismatch("cross_entropy: label out of range");
    }
    constexpr T kFloor = T(1e-12);
    auto out = make_node<T>(1, 1, {&probabilities});
    T total = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        total -= std::log(std::max(probabilities.value()[i * c + static_cast<std::size_t>(labels[i])], kFloor));
    }
    out->value[0] = total / static_cast<T>(n);
    if (out->requires_grad) {
        std::vector<int> ys(labels.begin(), labels.end());
        out->backward = [n, c, ys = std::move(ys)](Node<T>& self) {
            auto& P = *self.parents[0];
            P.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t idx = i * c + static_cast<std::size_t>(ys[i]);
                const T p = P.value[idx];
                if (p > kFloor) P.grad[idx] -= self.grad[0] / (static_cast<T>(n) * p);
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    const std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n) {
        throw ShapeMismatch("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            logits.shape_string());
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= c) throw ShapeMismatch("softmax_cross_entropy: label out of range");
    }
    auto out = make_node<T>(1, 1, {&logits});
    // Row softmax kept for the backward pass.
    std::vector<T> soft(n * c);
    T total = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.value().data() + i * c;
        const std::size_t top = static_cast<std::size_t>(std::max_element(row, row + c) - row);
        const T mx = row[top];
        // log(sum exp(row - mx)) as log1p of the non-maximal terms, so that a
        // saturated softmax still yields a loss with full relative precision.
        T rest = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            if (j != top) rest += std::exp(row[j] - mx);
        }
        const T z = T(1) + rest;
        for (std::size_t j = 0; j < c; ++j) soft[i * c + j] = std::exp(row[j] - mx) / z;
        total += std::log1p(rest) - (row[static_cast<std::size_t>(labels[i])] - mx);
    }
    out->value[0] = total / static_cast<T>(n);
    if (out->requires_grad) {
        std::vector<int> ys(labels.begin(), labels.end());
        out->backward = [n, c, ys = std::move(ys), soft = std::move(soft)](Node<T>& self) {
            auto& L = *self.parents[0];
            L.ensure_grad();
            const T g = self.grad[0] / static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const T target = static_cast<std::size_t>(ys[i]) == j ? T(1) : T(0);
                    L.grad[i * c + j] += g * (soft[i * c + j] - target);
                }
            }
        };
    }
    return Tensor<T>(out);
}

double finite_diff_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> params,
                         const FiniteDiffOptions& opts) {
    for (auto& p : params) p.zero_grad();
    const auto loss = f();
    backward(loss);
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        auto values = p.value();
        for (std::size_t c = 0; c < values.size(); ++c) {
            if (opts.exclude && opts.exclude(pi, c)) continue;
            const double saved = values[c];
            const auto at = [&](double offset) {
                values[c] = saved + offset;
                const double v = f().item();
                values[c] = saved;
                return v;
            };
            const double numeric = (at(opts.eps) - at(-opts.eps)) / (2.0 * opts.eps);
            const double rel =
                std::abs(analytic[c] - numeric) / std::max(1e-8, std::abs(analytic[c]) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

#define LMD_INSTANTIATE(T)                                                                                   \
    template class Tensor<T>;                                                                               \
    template void backward<T>(const Tensor<T>&);                                                            \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> add_row<T>(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                       \
    template Tensor<T> hadamard<T>(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                                       \
    template Tensor<T> reshape<T>(const Tensor<T>&, std::size_t, std::size_t);                              \
    template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);                           \
    template Tensor<T> slice_rows<T>(const Tensor<T>&, std::size_t, std::size_t);                           \
    template Tensor<T> row_softmax<T>(const Tensor<T>&);                                                    \
    template Tensor<T> masked_row_softmax<T>(const Tensor<T>&, std::span<const std::uint8_t>);              \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                           \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                                  \
    template Tensor<T> elu<T>(const Tensor<T>&, T);                                                         \
    template Tensor<T> signed_sqrt<T>(const Tensor<T>&);                                                    \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                            \
    template Tensor<T> sum_rows<T>(const Tensor<T>&);                                                       \
    template Tensor<T> dropout_with_mask<T>(const Tensor<T>&, std::span<const std::uint8_t>, T);            \
    template Tensor<T> dropout<T>(const Tensor<T>&, T, Rng&);                                               \
    template Tensor<T> outer_add<T>(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> pair_sum<T>(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> pair_weighted_sum<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const int>);                            \
    template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>);

LMD_INSTANTIATE(float)
LMD_INSTANTIATE(double)
LMD_INSTANTIATE(long double)

#undef LMD_INSTANTIATE

} // namespace lmd::ad
