// SPDX-License-Identifier: Apache-2.0
//
// Dense arrays with reverse-mode automatic differentiation. Tensors form a
// DAG; backward() walks it in reverse topological order, visiting every node
// exactly once and accumulating gradients additively into leaf buffers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "meshmask/common.hpp"

namespace meshmask::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void gemm_f32(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
              float alpha, const float* a, int64_t lda, const float* b, int64_t ldb,
              float beta, float* c, int64_t ldc);
void gemm_f64(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
              double alpha, const double* a, int64_t lda, const double* b, int64_t ldb,
              double beta, double* c, int64_t ldc);

template <class S>
inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, S alpha,
                 const S* a, int64_t lda, const S* b, int64_t ldb, S beta, S* c, int64_t ldc) {
    if constexpr (std::is_same_v<S, float>) {
        gemm_f32(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    } else {
        gemm_f64(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

template <class S>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::shared_ptr<std::vector<S>> values;
        std::vector<S> grad;
        bool requires_grad = false;
        std::vector<Tensor> parents;
        std::function<void(Node&)> backward;

        void ensure_grad() {
            if (grad.empty()) grad.assign(values->size(), S(0));
        }
    };

    Tensor() = default;

    static Tensor leaf(Shape shape, std::vector<S> values, bool requires_grad) {
        require(int64_t(values.size()) == shape_numel(shape),
                "tensor: values length " + std::to_string(values.size()) +
                    " does not match shape " + shape_str(shape));
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->values = std::make_shared<std::vector<S>>(std::move(values));
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<S> v(shape_numel(shape), S(0));
        return leaf(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor constant(Shape shape, std::vector<S> values) {
        return leaf(std::move(shape), std::move(values), false);
    }

    static Tensor make_op(Shape shape, std::vector<S> values,
                          std::vector<Tensor> parents,
                          std::function<void(Node&)> backward) {
        Tensor t = leaf(std::move(shape), std::move(values), false);
        for (const Tensor& p : parents) {
            if (p.requires_grad()) {
                t.n_->requires_grad = true;
                break;
            }
        }
        if (t.n_->requires_grad) {
            t.n_->parents = std::move(parents);
            t.n_->backward = std::move(backward);
        }
        return t;
    }

    // New leaf sharing this tensor's value storage but with a private gradient
    // buffer. Workers use views so parameter state is never written concurrently.
    Tensor leaf_view() const {
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = n_->shape;
        t.n_->values = n_->values;
        t.n_->requires_grad = n_->requires_grad;
        return t;
    }

    bool defined() const { return bool(n_); }
    const Shape& shape() const { return n_->shape; }
    int64_t dim() const { return int64_t(n_->shape.size()); }
    int64_t size() const { return int64_t(n_->values->size()); }
    int64_t rows() const { return n_->shape.at(0); }
    int64_t cols() const { return n_->shape.at(1); }
    bool requires_grad() const { return n_->requires_grad; }

    std::vector<S>& values() { return *n_->values; }
    const std::vector<S>& values() const { return *n_->values; }
    S* data() { return n_->values->data(); }
    const S* data() const { return n_->values->data(); }

    std::vector<S>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    const std::vector<S>& grad_const() const {
        const_cast<Node*>(n_.get())->ensure_grad();
        return n_->grad;
    }

    void zero_grad() {
        n_->ensure_grad();
        std::fill(n_->grad.begin(), n_->grad.end(), S(0));
    }

    Node* node() const { return n_.get(); }

    void check_finite(const std::string& label) const {
        const auto& v = *n_->values;
        for (size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(double(v[i]))) {
                fail(label + ": non-finite value " + std::to_string(double(v[i])) +
                     " at index " + std::to_string(i));
            }
        }
    }

    // Reverse pass from this tensor, seeded with ones. Gradients accumulate
    // additively into every reachable requires_grad node.
    void backward() {
        if (!n_ || !n_->requires_grad) return;
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        // iterative post-order DFS over the requires_grad subgraph
        struct Frame {
            Node* node;
            size_t next_parent;
        };
        std::vector<Frame> stack;
        stack.push_back({n_.get(), 0});
        seen.insert(n_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node* p = f.node->parents[f.next_parent++].node();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
        n_->ensure_grad();
        std::fill(n_->grad.begin(), n_->grad.end(), S(1));
        static const bool debug_scan = std::getenv("MESHMASK_AD_DEBUG") != nullptr;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (node->backward) node->backward(*node);
            if (debug_scan) {
                auto count_bad = [](const std::vector<S>& v) {
                    size_t bad = 0;
                    for (S x : v)
                        if (!std::isfinite(double(x))) ++bad;
                    return bad;
                };
                for (const Tensor& p : node->parents) {
                    if (!p.node()->requires_grad || p.node()->grad.empty()) continue;
                    const size_t bad = count_bad(p.node()->grad);
                    if (bad) {
                        std::string msg =
                            "backward debug: " + std::to_string(bad) +
                            " non-finite grads in parent " + shape_str(p.shape()) +
                            " from node " + shape_str(node->shape) +
                            "; self.grad bad=" + std::to_string(count_bad(node->grad)) +
                            "; parent values bad:";
                        for (const Tensor& q : node->parents)
                            msg += " " + shape_str(q.shape()) + "=" +
                                   std::to_string(count_bad(q.values()));
                        fail(msg);
                    }
                }
            }
        }
    }

private:
    std::shared_ptr<Node> n_;
};

// ---------------------------------------------------------------------------
// elementwise ops

template <class S>
Tensor<S> add(Tensor<S> a, Tensor<S> b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    std::vector<S> out(a.size());
    const S* pa = a.data();
    const S* pb = b.data();
    for (int64_t i = 0; i < a.size(); ++i) out[i] = pa[i] + pb[i];
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                              [a, b](typename Tensor<S>::Node& self) mutable {
                                  const S* g = self.grad.data();
                                  if (a.requires_grad()) {
                                      S* ga = a.grad().data();
                                      for (int64_t i = 0; i < a.size(); ++i) ga[i] += g[i];
                                  }
                                  if (b.requires_grad()) {
                                      S* gb = b.grad().data();
                                      for (int64_t i = 0; i < b.size(); ++i) gb[i] += g[i];
                                  }
                              });
}

template <class S>
Tensor<S> sub(Tensor<S> a, Tensor<S> b) {
    require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    std::vector<S> out(a.size());
    const S* pa = a.data();
    const S* pb = b.data();
    for (int64_t i = 0; i < a.size(); ++i) out[i] = pa[i] - pb[i];
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                              [a, b](typename Tensor<S>::Node& self) mutable {
                                  const S* g = self.grad.data();
                                  if (a.requires_grad()) {
                                      S* ga = a.grad().data();
                                      for (int64_t i = 0; i < a.size(); ++i) ga[i] += g[i];
                                  }
                                  if (b.requires_grad()) {
                                      S* gb = b.grad().data();
                                      for (int64_t i = 0; i < b.size(); ++i) gb[i] -= g[i];
                                  }
                              });
}

template <class S>
Tensor<S> mul(Tensor<S> a, Tensor<S> b) {
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    std::vector<S> out(a.size());
    const S* pa = a.data();
    const S* pb = b.data();
    for (int64_t i = 0; i < a.size(); ++i) out[i] = pa[i] * pb[i];
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b},
                              [a, b](typename Tensor<S>::Node& self) mutable {
                                  const S* g = self.grad.data();
                                  const S* pa = a.data();
                                  const S* pb = b.data();
                                  if (a.requires_grad()) {
                                      S* ga = a.grad().data();
                                      for (int64_t i = 0; i < a.size(); ++i) ga[i] += g[i] * pb[i];
                                  }
                                  if (b.requires_grad()) {
                                      S* gb = b.grad().data();
                                      for (int64_t i = 0; i < b.size(); ++i) gb[i] += g[i] * pa[i];
                                  }
                              });
}

template <class S>
Tensor<S> scale(Tensor<S> a, S c) {
    std::vector<S> out(a.size());
    const S* pa = a.data();
    for (int64_t i = 0; i < a.size(); ++i) out[i] = pa[i] * c;
    return Tensor<S>::make_op(a.shape(), std::move(out), {a},
                              [a, c](typename Tensor<S>::Node& self) mutable {
                                  if (!a.requires_grad()) return;
                                  const S* g = self.grad.data();
                                  S* ga = a.grad().data();
                                  for (int64_t i = 0; i < a.size(); ++i) ga[i] += g[i] * c;
                              });
}

// x: [n,p], b: [p]; adds b to every row
template <class S>
Tensor<S> add_rowvec(Tensor<S> x, Tensor<S> b) {
    require(x.dim() == 2 && b.dim() == 1 && x.cols() == b.rows(),
            "add_rowvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                shape_str(b.shape()));
    const int64_t n = x.rows(), p = x.cols();
    std::vector<S> out(x.size());
    const S* px = x.data();
    const S* pb = b.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < p; ++j) out[i * p + j] = px[i * p + j] + pb[j];
    return Tensor<S>::make_op(x.shape(), std::move(out), {x, b},
                              [x, b, n, p](typename Tensor<S>::Node& self) mutable {
                                  const S* g = self.grad.data();
                                  if (x.requires_grad()) {
                                      S* gx = x.grad().data();
                                      for (int64_t i = 0; i < n * p; ++i) gx[i] += g[i];
                                  }
                                  if (b.requires_grad()) {
                                      S* gb = b.grad().data();
                                      for (int64_t i = 0; i < n; ++i)
                                          for (int64_t j = 0; j < p; ++j) gb[j] += g[i * p + j];
                                  }
                              });
}

// ---------------------------------------------------------------------------
// matmul

template <class S>
Tensor<S> matmul(Tensor<S> a, Tensor<S> b) {
    require(a.dim() == 2 && b.dim() == 2, "matmul: both inputs must be 2-D");
    require(a.cols() == b.rows(), "matmul: inner dimensions differ, " +
                                      shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<S> out(size_t(m * n), S(0));
    gemm<S>(false, false, m, n, k, S(1), a.data(), k, b.data(), n, S(0), out.data(), n);
    return Tensor<S>::make_op(
        {m, n}, std::move(out), {a, b},
        [a, b, m, k, n](typename Tensor<S>::Node& self) mutable {
            const S* g = self.grad.data();
            if (a.requires_grad()) {
                // dA += dC * B^T
                gemm<S>(false, true, m, k, n, S(1), g, n, b.data(), n, S(1), a.grad().data(), k);
            }
            if (b.requires_grad()) {
                // dB += A^T * dC
                gemm<S>(true, false, k, n, m, S(1), a.data(), k, g, n, S(1), b.grad().data(), n);
            }
        });
}

// ---------------------------------------------------------------------------
// activations

template <class S>
Tensor<S> relu(Tensor<S> x) {
    std::vector<S> out(x.size());
    const S* px = x.data();
    for (int64_t i = 0; i < x.size(); ++i) out[i] = px[i] > S(0) ? px[i] : S(0);
    return Tensor<S>::make_op(x.shape(), std::move(out), {x},
                              [x](typename Tensor<S>::Node& self) mutable {
                                  if (!x.requires_grad()) return;
                                  const S* g = self.grad.data();
                                  const S* px = x.data();
                                  S* gx = x.grad().data();
                                  for (int64_t i = 0; i < x.size(); ++i)
                                      if (px[i] > S(0)) gx[i] += g[i];
                              });
}

namespace detail {
template <class S>
inline S gelu_scalar(S x) {
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    const S u = c * (x + S(0.044715) * x * x * x);
    return S(0.5) * x * (S(1) + std::tanh(u));
}
template <class S>
inline S gelu_grad_scalar(S x) {
    const S c = S(0.7978845608028654);
    const S u = c * (x + S(0.044715) * x * x * x);
    const S t = std::tanh(u);
    const S du = c * (S(1) + S(3) * S(0.044715) * x * x);
    return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du;
}
}  // namespace detail

// tanh approximation
template <class S>
Tensor<S> gelu(Tensor<S> x) {
    std::vector<S> out(x.size());
    const S* px = x.data();
    for (int64_t i = 0; i < x.size(); ++i) out[i] = detail::gelu_scalar(px[i]);
    return Tensor<S>::make_op(x.shape(), std::move(out), {x},
                              [x](typename Tensor<S>::Node& self) mutable {
                                  if (!x.requires_grad()) return;
                                  const S* g = self.grad.data();
                                  const S* px = x.data();
                                  S* gx = x.grad().data();
                                  for (int64_t i = 0; i < x.size(); ++i)
                                      gx[i] += g[i] * detail::gelu_grad_scalar(px[i]);
                              });
}

// ---------------------------------------------------------------------------
// layer normalization (per row, biased variance, then affine)

template <class S>
Tensor<S> layer_norm(Tensor<S> x, Tensor<S> gain, Tensor<S> bias, S eps) {
    require(x.dim() == 2, "layer_norm: input must be 2-D");
    require(gain.dim() == 1 && bias.dim() == 1 && gain.rows() == x.cols() &&
                bias.rows() == x.cols(),
            "layer_norm: gain/bias must match feature width");
    require(eps >= S(0), "layer_norm: eps must be non-negative");
    const int64_t n = x.rows(), p = x.cols();
    std::vector<S> out(x.size());
    auto xhat = std::make_shared<std::vector<S>>(x.size());
    auto inv_std = std::make_shared<std::vector<S>>(n);
    const S* px = x.data();
    const S* pg = gain.data();
    const S* pb = bias.data();
    for (int64_t i = 0; i < n; ++i) {
        const S* row = px + i * p;
        S mean = 0;
        for (int64_t j = 0; j < p; ++j) mean += row[j];
        mean /= S(p);
        S var = 0;
        for (int64_t j = 0; j < p; ++j) {
            const S d = row[j] - mean;
            var += d * d;
        }
        var /= S(p);
        const S istd = S(1) / std::sqrt(var + eps);
        (*inv_std)[i] = istd;
        for (int64_t j = 0; j < p; ++j) {
            const S xh = (row[j] - mean) * istd;
            (*xhat)[i * p + j] = xh;
            out[i * p + j] = pg[j] * xh + pb[j];
        }
    }
    return Tensor<S>::make_op(
        x.shape(), std::move(out), {x, gain, bias},
        [x, gain, bias, xhat, inv_std, n, p](typename Tensor<S>::Node& self) mutable {
            const S* g = self.grad.data();
            const S* pg = gain.data();
            if (gain.requires_grad()) {
                S* gg = gain.grad().data();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < p; ++j) gg[j] += g[i * p + j] * (*xhat)[i * p + j];
            }
            if (bias.requires_grad()) {
                S* gb = bias.grad().data();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < p; ++j) gb[j] += g[i * p + j];
            }
            if (x.requires_grad()) {
                S* gx = x.grad().data();
                for (int64_t i = 0; i < n; ++i) {
                    const S* grow = g + i * p;
                    const S* xh = xhat->data() + i * p;
                    S mean_dxhat = 0, mean_dxhat_xhat = 0;
                    for (int64_t j = 0; j < p; ++j) {
                        const S dxh = grow[j] * pg[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                    }
                    mean_dxhat /= S(p);
                    mean_dxhat_xhat /= S(p);
                    const S istd = (*inv_std)[i];
                    for (int64_t j = 0; j < p; ++j) {
                        const S dxh = grow[j] * pg[j];
                        gx[i * p + j] += istd * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// structural ops

template <class S>
Tensor<S> concat_cols(std::vector<Tensor<S>> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const int64_t n = parts[0].rows();
    int64_t total = 0;
    for (const auto& t : parts) {
        require(t.dim() == 2 && t.rows() == n, "concat_cols: row counts differ");
        total += t.cols();
    }
    std::vector<S> out(size_t(n * total));
    int64_t off = 0;
    for (const auto& t : parts) {
        const int64_t p = t.cols();
        const S* pt = t.data();
        for (int64_t i = 0; i < n; ++i)
            std::copy(pt + i * p, pt + (i + 1) * p, out.begin() + i * total + off);
        off += p;
    }
    auto parts_copy = parts;
    return Tensor<S>::make_op(
        {n, total}, std::move(out), parts_copy,
        [parts_copy, n, total](typename Tensor<S>::Node& self) mutable {
            const S* g = self.grad.data();
            int64_t off = 0;
            for (auto& t : parts_copy) {
                const int64_t p = t.cols();
                if (t.requires_grad()) {
                    S* gt = t.grad().data();
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < p; ++j) gt[i * p + j] += g[i * total + off + j];
                }
                off += p;
            }
        });
}

template <class S>
Tensor<S> gather_rows(Tensor<S> x, const std::vector<int32_t>& idx) {
    require(x.dim() == 2, "gather_rows: input must be 2-D");
    const int64_t p = x.cols();
    const int64_t m = int64_t(idx.size());
    for (int32_t i : idx)
        require(i >= 0 && i < x.rows(), "gather_rows: index out of range");
    std::vector<S> out(size_t(m * p));
    const S* px = x.data();
    for (int64_t r = 0; r < m; ++r)
        std::copy(px + int64_t(idx[r]) * p, px + (int64_t(idx[r]) + 1) * p, out.begin() + r * p);
    auto idx_ptr = std::make_shared<std::vector<int32_t>>(idx);
    return Tensor<S>::make_op({m, p}, std::move(out), {x},
                              [x, idx_ptr, m, p](typename Tensor<S>::Node& self) mutable {
                                  if (!x.requires_grad()) return;
                                  const S* g = self.grad.data();
                                  S* gx = x.grad().data();
                                  for (int64_t r = 0; r < m; ++r) {
                                      S* dst = gx + int64_t((*idx_ptr)[r]) * p;
                                      const S* src = g + r * p;
                                      for (int64_t j = 0; j < p; ++j) dst[j] += src[j];
                                  }
                              });
}

// Row r of the output is the sum of message rows whose target is r.
template <class S>
Tensor<S> scatter_add(Tensor<S> messages, const std::vector<int32_t>& targets,
                      int64_t n_out) {
    require(messages.dim() == 2, "scatter_add: messages must be 2-D");
    require(int64_t(targets.size()) == messages.rows(),
            "scatter_add: one target per message row required");
    const int64_t p = messages.cols();
    for (int32_t t : targets)
        require(t >= 0 && t < n_out, "scatter_add: target index out of range");
    std::vector<S> out(size_t(n_out * p), S(0));
    const S* pm = messages.data();
    for (size_t k = 0; k < targets.size(); ++k) {
        S* dst = out.data() + int64_t(targets[k]) * p;
        const S* src = pm + int64_t(k) * p;
        for (int64_t j = 0; j < p; ++j) dst[j] += src[j];
    }
    auto tg = std::make_shared<std::vector<int32_t>>(targets);
    return Tensor<S>::make_op({n_out, p}, std::move(out), {messages},
                              [messages, tg, p](typename Tensor<S>::Node& self) mutable {
                                  if (!messages.requires_grad()) return;
                                  const S* g = self.grad.data();
                                  S* gm = messages.grad().data();
                                  for (size_t k = 0; k < tg->size(); ++k) {
                                      const S* src = g + int64_t((*tg)[k]) * p;
                                      S* dst = gm + int64_t(k) * p;
                                      for (int64_t j = 0; j < p; ++j) dst[j] += src[j];
                                  }
                              });
}

// Per-row scaling by fixed (non-learnable) coefficients.
template <class S>
Tensor<S> scale_rows(Tensor<S> x, const std::vector<S>& coeff) {
    require(x.dim() == 2 && int64_t(coeff.size()) == x.rows(),
            "scale_rows: one coefficient per row required");
    const int64_t n = x.rows(), p = x.cols();
    std::vector<S> out(x.size());
    const S* px = x.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < p; ++j) out[i * p + j] = px[i * p + j] * coeff[i];
    auto cf = std::make_shared<std::vector<S>>(coeff);
    return Tensor<S>::make_op(x.shape(), std::move(out), {x},
                              [x, cf, n, p](typename Tensor<S>::Node& self) mutable {
                                  if (!x.requires_grad()) return;
                                  const S* g = self.grad.data();
                                  S* gx = x.grad().data();
                                  for (int64_t i = 0; i < n; ++i)
                                      for (int64_t j = 0; j < p; ++j)
                                          gx[i * p + j] += g[i * p + j] * (*cf)[i];
                              });
}

// Scatters encoded rows back to their original ids; every other row becomes
// the shared token. Token gradient is the sum over all masked rows.
template <class S>
Tensor<S> reinsert_rows(Tensor<S> encoded, Tensor<S> token,
                        const std::vector<int32_t>& visible_index, int64_t n_full) {
    require(encoded.dim() == 2, "reinsert_rows: encoded must be 2-D");
    require(int64_t(visible_index.size()) == encoded.rows(),
            "reinsert_rows: encoded row count must equal the visible count");
    const int64_t p = encoded.cols();
    require(token.dim() == 1 && token.rows() == p, "reinsert_rows: token width mismatch");
    std::vector<S> out(size_t(n_full * p));
    const S* ptok = token.data();
    for (int64_t i = 0; i < n_full; ++i) std::copy(ptok, ptok + p, out.begin() + i * p);
    const S* pe = encoded.data();
    for (size_t r = 0; r < visible_index.size(); ++r) {
        const int64_t i = visible_index[r];
        require(i >= 0 && i < n_full, "reinsert_rows: visible index out of range");
        std::copy(pe + int64_t(r) * p, pe + int64_t(r + 1) * p, out.begin() + i * p);
    }
    auto vis = std::make_shared<std::vector<int32_t>>(visible_index);
    return Tensor<S>::make_op(
        {n_full, p}, std::move(out), {encoded, token},
        [encoded, token, vis, n_full, p](typename Tensor<S>::Node& self) mutable {
            const S* g = self.grad.data();
            std::vector<uint8_t> visible(size_t(n_full), 0);
            for (int32_t i : *vis) visible[size_t(i)] = 1;
            if (encoded.requires_grad()) {
                S* ge = encoded.grad().data();
                for (size_t r = 0; r < vis->size(); ++r) {
                    const S* src = g + int64_t((*vis)[r]) * p;
                    S* dst = ge + int64_t(r) * p;
                    for (int64_t j = 0; j < p; ++j) dst[j] += src[j];
                }
            }
            if (token.requires_grad()) {
                S* gt = token.grad().data();
                for (int64_t i = 0; i < n_full; ++i) {
                    if (visible[size_t(i)]) continue;
                    const S* src = g + i * p;
                    for (int64_t j = 0; j < p; ++j) gt[j] += src[j];
                }
            }
        });
}

// ---------------------------------------------------------------------------
// reductions

template <class S>
Tensor<S> sum(Tensor<S> x) {
    S total = 0;
    const S* px = x.data();
    for (int64_t i = 0; i < x.size(); ++i) total += px[i];
    return Tensor<S>::make_op({1}, {total}, {x},
                              [x](typename Tensor<S>::Node& self) mutable {
                                  if (!x.requires_grad()) return;
                                  const S g = self.grad[0];
                                  S* gx = x.grad().data();
                                  for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
                              });
}

template <class S>
Tensor<S> mean_all(Tensor<S> x) {
    return scale(sum(x), S(1) / S(x.size()));
}

// Mean of squared differences over every element.
template <class S>
Tensor<S> mse(Tensor<S> pred, Tensor<S> target) {
    Tensor<S> d = sub(pred, target);
    return mean_all(mul(d, d));
}

}  // namespace meshmask::ad
