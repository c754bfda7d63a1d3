#pragma once

#include <cmath>
#include <cstdint>

// Instance normalization (non-affine): each (n, c) plane is standardized over
// its H*W elements with biased variance. Parallelism is over independent
// (n, c) planes, so results do not depend on the worker count.

namespace lsps::kern {

// Writes normalized output and, when save_stats, per-plane mean and
// inv_std = 1/sqrt(var + eps) needed by the backward pass.
template <typename T>
void instance_norm_fwd(const T* x, T* y, int N, int C, int64_t S, T eps, T* mean_out,
                       T* inv_std_out) {
#pragma omp parallel for schedule(static)
    for (int64_t pc = 0; pc < (int64_t)N * C; ++pc) {
        const T* xp = x + pc * S;
        T* yp = y + pc * S;
        T mu = T(0);
        for (int64_t t = 0; t < S; ++t) mu += xp[t];
        mu /= (T)S;
        T var = T(0);
        for (int64_t t = 0; t < S; ++t) {
            const T d = xp[t] - mu;
            var += d * d;
        }
        var /= (T)S;
        const T is = T(1) / std::sqrt(var + eps);
        for (int64_t t = 0; t < S; ++t) yp[t] = (xp[t] - mu) * is;
        if (mean_out) mean_out[pc] = mu;
        if (inv_std_out) inv_std_out[pc] = is;
    }
}

// dx += inv_std * (dy - mean(dy) - xhat * mean(dy * xhat)), with
// xhat = (x - mean) * inv_std. Accumulates into dx.
template <typename T>
void instance_norm_bwd(const T* x, const T* dy, T* dx, int N, int C, int64_t S, const T* mean,
                       const T* inv_std) {
#pragma omp parallel for schedule(static)
    for (int64_t pc = 0; pc < (int64_t)N * C; ++pc) {
        const T* xp = x + pc * S;
        const T* gp = dy + pc * S;
        T* dp = dx + pc * S;
        const T mu = mean[pc], is = inv_std[pc];
        T gmean = T(0), gxhat = T(0);
        for (int64_t t = 0; t < S; ++t) {
            const T xh = (xp[t] - mu) * is;
            gmean += gp[t];
            gxhat += gp[t] * xh;
        }
        gmean /= (T)S;
        gxhat /= (T)S;
        for (int64_t t = 0; t < S; ++t) {
            const T xh = (xp[t] - mu) * is;
            dp[t] += is * (gp[t] - gmean - xh * gxhat);
        }
    }
}

namespace ref {

template <typename T>
void instance_norm_fwd(const T* x, T* y, int N, int C, int64_t S, T eps) {
    for (int64_t pc = 0; pc < (int64_t)N * C; ++pc) {
        const T* xp = x + pc * S;
        T* yp = y + pc * S;
        T mu = T(0);
        for (int64_t t = 0; t < S; ++t) mu += xp[t];
        mu /= (T)S;
        T var = T(0);
        for (int64_t t = 0; t < S; ++t) var += (xp[t] - mu) * (xp[t] - mu);
        var /= (T)S;
        for (int64_t t = 0; t < S; ++t) yp[t] = (xp[t] - mu) / std::sqrt(var + eps);
    }
}

}  // namespace ref

}  // namespace lsps::kern
