#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lsps/core/errors.hpp"
#include "lsps/core/tensor.hpp"
#include "lsps/kernels/conv.hpp"
#include "lsps/kernels/gemm.hpp"
#include "lsps/kernels/norm.hpp"

// Eager reverse-mode tape. Ops compute their value at build time and record a
// backward closure; node creation order is a topological order, so backward()
// walks the tape once in reverse. Gradients accumulate (+=) into parents, so
// a node consumed by several ops — in particular a shared parameter — sums
// contributions naturally.

namespace lsps {

template <typename T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated only when needs_grad
    bool needs_grad = false;
    std::function<void()> backward;
    std::string pname;  // canonical cell name for parameter leaves
};

template <typename T>
class Graph {
  public:
    using Nd = Node<T>*;

    // Decides whether a parameter leaf receives gradient; default all do.
    void set_trainable_filter(std::function<bool(const std::string&)> f) {
        trainable_ = std::move(f);
    }

    Nd input(Tensor<T> v) {
        Nd n = fresh();
        n->val = std::move(v);
        return n;
    }

    Nd scalar_input(T v) { return input(Tensor<T>({1}, v)); }

    // Parameter leaf, memoized by canonical cell name: every view of a shared
    // cell resolves to the same node, so its gradient sums over all uses.
    Nd param(const std::string& canonical_name, const Tensor<T>& storage) {
        auto it = param_nodes_.find(canonical_name);
        if (it != param_nodes_.end()) return it->second;
        Nd n = fresh();
        n->val = storage;
        n->pname = canonical_name;
        n->needs_grad = !trainable_ || trainable_(canonical_name);
        if (n->needs_grad) n->grad = Tensor<T>(n->val.shape, T(0));
        param_nodes_.emplace(canonical_name, n);
        return n;
    }

    const std::map<std::string, Nd>& param_nodes() const { return param_nodes_; }

    // ---- elementwise ----

    Nd add(Nd a, Nd b) {
        check_same(a, b, "add");
        Nd n = like(a, {a, b});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = a->val[i] + b->val[i];
        if (n->needs_grad)
            n->backward = [n, a, b] {
                if (a->needs_grad)
                    for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i];
                if (b->needs_grad)
                    for (int64_t i = 0; i < n->grad.numel(); ++i) b->grad[i] += n->grad[i];
            };
        return n;
    }

    Nd sub(Nd a, Nd b) {
        check_same(a, b, "sub");
        Nd n = like(a, {a, b});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = a->val[i] - b->val[i];
        if (n->needs_grad)
            n->backward = [n, a, b] {
                if (a->needs_grad)
                    for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i];
                if (b->needs_grad)
                    for (int64_t i = 0; i < n->grad.numel(); ++i) b->grad[i] -= n->grad[i];
            };
        return n;
    }

    Nd mul(Nd a, Nd b) {
        check_same(a, b, "mul");
        Nd n = like(a, {a, b});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = a->val[i] * b->val[i];
        if (n->needs_grad)
            n->backward = [n, a, b] {
                if (a->needs_grad)
                    for (int64_t i = 0; i < n->grad.numel(); ++i)
                        a->grad[i] += n->grad[i] * b->val[i];
                if (b->needs_grad)
                    for (int64_t i = 0; i < n->grad.numel(); ++i)
                        b->grad[i] += n->grad[i] * a->val[i];
            };
        return n;
    }

    Nd scale(Nd a, T c) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = a->val[i] * c;
        if (n->needs_grad)
            n->backward = [n, a, c] {
                for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i] * c;
            };
        return n;
    }

    Nd add_scalar(Nd a, T c) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = a->val[i] + c;
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i];
            };
        return n;
    }

    Nd exp_(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = std::exp(a->val[i]);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i] * n->val[i];
            };
        return n;
    }

    Nd log_(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = std::log(a->val[i]);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i] / a->val[i];
            };
        return n;
    }

    Nd sqrt_(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = std::sqrt(a->val[i]);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    a->grad[i] += n->grad[i] / (T(2) * std::max(n->val[i], T(1e-12)));
            };
        return n;
    }

    Nd abs_(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = std::abs(a->val[i]);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i) {
                    const T s = a->val[i] > T(0) ? T(1) : (a->val[i] < T(0) ? T(-1) : T(0));
                    a->grad[i] += n->grad[i] * s;
                }
            };
        return n;
    }

    Nd square(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = a->val[i] * a->val[i];
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    a->grad[i] += n->grad[i] * T(2) * a->val[i];
            };
        return n;
    }

    // Gradient passes through only where the input is strictly inside.
    Nd clamp(Nd a, T lo, T hi) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i)
            n->val[i] = std::min(hi, std::max(lo, a->val[i]));
        if (n->needs_grad)
            n->backward = [n, a, lo, hi] {
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    if (a->val[i] > lo && a->val[i] < hi) a->grad[i] += n->grad[i];
            };
        return n;
    }

    Nd leaky_relu(Nd a, T slope) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i)
            n->val[i] = a->val[i] >= T(0) ? a->val[i] : slope * a->val[i];
        if (n->needs_grad)
            n->backward = [n, a, slope] {
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    a->grad[i] += n->grad[i] * (a->val[i] >= T(0) ? T(1) : slope);
            };
        return n;
    }

    Nd tanh_(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i) n->val[i] = std::tanh(a->val[i]);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    a->grad[i] += n->grad[i] * (T(1) - n->val[i] * n->val[i]);
            };
        return n;
    }

    Nd sigmoid_(Nd a) {
        Nd n = like(a, {a});
        for (int64_t i = 0; i < a->val.numel(); ++i)
            n->val[i] = T(1) / (T(1) + std::exp(-a->val[i]));
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    a->grad[i] += n->grad[i] * n->val[i] * (T(1) - n->val[i]);
            };
        return n;
    }

    // ---- shape / reduction ----

    Nd reshape(Nd a, std::vector<int> shape) {
        if (Tensor<T>::numel_of(shape) != a->val.numel())
            throw ShapeError("reshape: element count mismatch");
        Nd n = fresh({a});
        n->val = a->val;
        n->val.shape = std::move(shape);
        finish(n);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i];
            };
        return n;
    }

    // (N, D) -> (N,)
    Nd row_sum(Nd a) {
        if (a->val.ndim() != 2) throw ShapeError("row_sum expects a 2-d tensor");
        const int N = a->val.dim(0), D = a->val.dim(1);
        Nd n = fresh({a});
        n->val = Tensor<T>({N});
        for (int r = 0; r < N; ++r) {
            T s = T(0);
            for (int d = 0; d < D; ++d) s += a->val[(int64_t)r * D + d];
            n->val[r] = s;
        }
        finish(n);
        if (n->needs_grad)
            n->backward = [n, a, N, D] {
                for (int r = 0; r < N; ++r)
                    for (int d = 0; d < D; ++d) a->grad[(int64_t)r * D + d] += n->grad[r];
            };
        return n;
    }

    Nd sum_all(Nd a) {
        Nd n = fresh({a});
        n->val = Tensor<T>({1});
        T s = T(0);
        for (int64_t i = 0; i < a->val.numel(); ++i) s += a->val[i];
        n->val[0] = s;
        finish(n);
        if (n->needs_grad)
            n->backward = [n, a] {
                for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += n->grad[0];
            };
        return n;
    }

    Nd mean_all(Nd a) {
        Nd n = fresh({a});
        n->val = Tensor<T>({1});
        T s = T(0);
        for (int64_t i = 0; i < a->val.numel(); ++i) s += a->val[i];
        const T inv = T(1) / (T)a->val.numel();
        n->val[0] = s * inv;
        finish(n);
        if (n->needs_grad)
            n->backward = [n, a, inv] {
                const T g = n->grad[0] * inv;
                for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
            };
        return n;
    }

    // (N, C, H, W) -> (N, C): global average pool.
    Nd spatial_mean(Nd a) {
        if (a->val.ndim() != 4) throw ShapeError("spatial_mean expects a 4-d tensor");
        const int N = a->val.dim(0), C = a->val.dim(1);
        const int64_t S = (int64_t)a->val.dim(2) * a->val.dim(3);
        Nd n = fresh({a});
        n->val = Tensor<T>({N, C});
        const T inv = T(1) / (T)S;
        for (int64_t pc = 0; pc < (int64_t)N * C; ++pc) {
            T s = T(0);
            const T* p = a->val.ptr() + pc * S;
            for (int64_t t = 0; t < S; ++t) s += p[t];
            n->val[pc] = s * inv;
        }
        finish(n);
        if (n->needs_grad)
            n->backward = [n, a, N, C, S, inv] {
                for (int64_t pc = 0; pc < (int64_t)N * C; ++pc) {
                    const T g = n->grad[pc] * inv;
                    T* p = a->grad.ptr() + pc * S;
                    for (int64_t t = 0; t < S; ++t) p[t] += g;
                }
            };
        return n;
    }

    // ---- layers ----

    // x (N, in) with W (out, in), b (out) or nullptr -> (N, out)
    Nd linear(Nd x, Nd W, Nd b) {
        if (x->val.ndim() != 2 || W->val.ndim() != 2 || x->val.dim(1) != W->val.dim(1))
            throw ShapeError("linear: shape mismatch");
        const int N = x->val.dim(0), in = x->val.dim(1), out = W->val.dim(0);
        Nd n = fresh(b ? std::vector<Nd>{x, W, b} : std::vector<Nd>{x, W});
        n->val = Tensor<T>({N, out});
        std::vector<T> wT((size_t)in * out);
        kern::transpose(W->val.ptr(), wT.data(), out, in);
        kern::gemm(x->val.ptr(), wT.data(), n->val.ptr(), N, in, out);
        if (b)
            for (int r = 0; r < N; ++r)
                for (int o = 0; o < out; ++o) n->val[(int64_t)r * out + o] += b->val[o];
        finish(n);
        if (n->needs_grad)
            n->backward = [n, x, W, b, N, in, out] {
                if (x->needs_grad)
                    kern::gemm(n->grad.ptr(), W->val.ptr(), x->grad.ptr(), N, out, in, true);
                if (W->needs_grad) {
                    std::vector<T> gT((size_t)out * N);
                    kern::transpose(n->grad.ptr(), gT.data(), N, out);
                    kern::gemm(gT.data(), x->val.ptr(), W->grad.ptr(), out, N, in, true);
                }
                if (b && b->needs_grad)
                    for (int r = 0; r < N; ++r)
                        for (int o = 0; o < out; ++o) b->grad[o] += n->grad[(int64_t)r * out + o];
            };
        return n;
    }

    Nd conv2d(Nd x, Nd w, Nd b, int stride, int pad, int groups) {
        const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W_ = x->val.dim(3);
        const int Cout = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
        if (w->val.dim(1) != Cin / groups) throw ShapeError("conv2d: channel/group mismatch");
        const int Ho = kern::conv_out_dim(H, kh, stride, pad);
        const int Wo = kern::conv_out_dim(W_, kw, stride, pad);
        if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: non-positive output size");
        Nd n = fresh(b ? std::vector<Nd>{x, w, b} : std::vector<Nd>{x, w});
        n->val = Tensor<T>({N, Cout, Ho, Wo});
        kern::conv2d_fwd(x->val.ptr(), w->val.ptr(), b ? b->val.ptr() : nullptr, n->val.ptr(), N,
                         Cin, H, W_, Cout, kh, kw, stride, stride, pad, pad, groups);
        finish(n);
        if (n->needs_grad)
            n->backward = [n, x, w, b, N, Cin, H, W_, Cout, kh, kw, stride, pad, groups] {
                if (x->needs_grad)
                    kern::conv2d_bwd_input(n->grad.ptr(), w->val.ptr(), x->grad.ptr(), N, Cin, H,
                                           W_, Cout, kh, kw, stride, stride, pad, pad, groups);
                if (w->needs_grad)
                    kern::conv2d_bwd_weight(x->val.ptr(), n->grad.ptr(), w->grad.ptr(), N, Cin, H,
                                            W_, Cout, kh, kw, stride, stride, pad, pad, groups);
                if (b && b->needs_grad)
                    kern::conv_bwd_bias(n->grad.ptr(), b->grad.ptr(), N, Cout,
                                        (int64_t)n->val.dim(2) * n->val.dim(3));
            };
        return n;
    }

    Nd tconv2d(Nd x, Nd w, Nd b, int stride, int pad, int outpad, int groups) {
        const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W_ = x->val.dim(3);
        if (w->val.dim(0) != Cin) throw ShapeError("tconv2d: input channel mismatch");
        const int CoutG = w->val.dim(1), kh = w->val.dim(2), kw = w->val.dim(3);
        const int Cout = CoutG * groups;
        const int Ho = kern::tconv_out_dim(H, kh, stride, pad, outpad);
        const int Wo = kern::tconv_out_dim(W_, kw, stride, pad, outpad);
        if (Ho <= 0 || Wo <= 0) throw ShapeError("tconv2d: non-positive output size");
        Nd n = fresh(b ? std::vector<Nd>{x, w, b} : std::vector<Nd>{x, w});
        n->val = Tensor<T>({N, Cout, Ho, Wo});
        kern::tconv2d_fwd(x->val.ptr(), w->val.ptr(), b ? b->val.ptr() : nullptr, n->val.ptr(), N,
                          Cin, H, W_, Cout, kh, kw, stride, pad, outpad, groups);
        finish(n);
        if (n->needs_grad)
            n->backward = [n, x, w, b, N, Cin, H, W_, Cout, kh, kw, stride, pad, outpad, groups] {
                if (x->needs_grad)
                    kern::tconv2d_bwd_input(n->grad.ptr(), w->val.ptr(), x->grad.ptr(), N, Cin, H,
                                            W_, Cout, kh, kw, stride, pad, outpad, groups);
                if (w->needs_grad)
                    kern::tconv2d_bwd_weight(x->val.ptr(), n->grad.ptr(), w->grad.ptr(), N, Cin,
                                             H, W_, Cout, kh, kw, stride, pad, outpad, groups);
                if (b && b->needs_grad)
                    kern::conv_bwd_bias(n->grad.ptr(), b->grad.ptr(), N, Cout,
                                        (int64_t)n->val.dim(2) * n->val.dim(3));
            };
        return n;
    }

    Nd instance_norm(Nd x, T eps = T(1e-5)) {
        if (x->val.ndim() != 4) throw ShapeError("instance_norm expects a 4-d tensor");
        const int N = x->val.dim(0), C = x->val.dim(1);
        const int64_t S = (int64_t)x->val.dim(2) * x->val.dim(3);
        Nd n = fresh({x});
        n->val = Tensor<T>(x->val.shape);
        auto stats = std::make_shared<std::vector<T>>((size_t)(2 * N * C));
        T* mean = stats->data();
        T* inv_std = stats->data() + N * C;
        kern::instance_norm_fwd(x->val.ptr(), n->val.ptr(), N, C, S, eps, mean, inv_std);
        finish(n);
        if (n->needs_grad)
            n->backward = [n, x, N, C, S, stats] {
                if (!x->needs_grad) return;
                kern::instance_norm_bwd(x->val.ptr(), n->grad.ptr(), x->grad.ptr(), N, C, S,
                                        stats->data(), stats->data() + N * C);
            };
        return n;
    }

    // ---- driver ----

    void backward(Nd out) {
        if (out->val.numel() != 1) throw ShapeError("backward expects a scalar output");
        if (!out->needs_grad) return;
        out->grad[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* n = it->get();
            if (n->needs_grad && n->backward) n->backward();
        }
    }

    size_t node_count() const { return nodes_.size(); }

  private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    std::map<std::string, Nd> param_nodes_;
    std::function<bool(const std::string&)> trainable_;

    Nd fresh(const std::vector<Nd>& parents = {}) {
        nodes_.push_back(std::make_unique<Node<T>>());
        Nd n = nodes_.back().get();
        for (Nd p : parents)
            if (p->needs_grad) n->needs_grad = true;
        return n;
    }

    // Allocates val like a's and registers parents.
    Nd like(Nd a, const std::vector<Nd>& parents) {
        Nd n = fresh(parents);
        n->val = Tensor<T>(a->val.shape);
        finish(n);
        return n;
    }

    void finish(Nd n) {
        if (n->needs_grad) n->grad = Tensor<T>(n->val.shape, T(0));
    }

    static void check_same(Nd a, Nd b, const char* where) {
        if (!a->val.same_shape(b->val))
            throw ShapeError(std::string(where) + ": shape mismatch " + a->val.shape_str() +
                             " vs " + b->val.shape_str());
    }
};

}  // namespace lsps
