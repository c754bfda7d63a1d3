#pragma once

#include <cstring>
#include <vector>

#include "lsps/kernels/gemm.hpp"

// Convolution kernels (cross-correlation convention, as in the usual DL
// frameworks). Tensors are row-major (N, C, H, W). Weight layouts:
//   conv2d:  (Cout, Cin/groups, kh, kw)
//   tconv2d: (Cin, Cout/groups, kh, kw)
// Forward kernels overwrite their output; backward kernels accumulate (+=)
// because the autodiff substrate sums gradients from multiple consumers.
// Parallel loops only ever split output elements, so results are bitwise
// independent of the thread count.

namespace lsps::kern {

inline int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
inline int tconv_out_dim(int in, int k, int s, int p, int op) {
    return (in - 1) * s + k - 2 * p + op;
}

// Generalized im2col: samples src (C, Hs, Ws) at (y*sh-ph+dy, x*sw-pw+dx) for
// a target grid (Ht, Wt). Writes col rows (C*kh*kw) with row stride ldcol,
// starting at column col0. Out-of-bounds taps produce 0.
template <typename T>
void im2col(const T* src, int C, int Hs, int Ws, int kh, int kw, int sh, int sw, int ph, int pw,
            int Ht, int Wt, T* col, int64_t ldcol, int64_t col0) {
    for (int c = 0; c < C; ++c) {
        const T* sc = src + (int64_t)c * Hs * Ws;
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                T* row = col + ((int64_t)(c * kh + dy) * kw + dx) * ldcol + col0;
                for (int y = 0; y < Ht; ++y) {
                    const int iy = y * sh - ph + dy;
                    T* out = row + (int64_t)y * Wt;
                    if (iy < 0 || iy >= Hs) {
                        for (int x = 0; x < Wt; ++x) out[x] = T(0);
                        continue;
                    }
                    const T* srow = sc + (int64_t)iy * Ws;
                    for (int x = 0; x < Wt; ++x) {
                        const int ix = x * sw - pw + dx;
                        out[x] = (ix >= 0 && ix < Ws) ? srow[ix] : T(0);
                    }
                }
            }
    }
}

// Adjoint of im2col: scatter-adds col back into dst (C, Hs, Ws).
template <typename T>
void col2im_add(const T* col, int C, int Hs, int Ws, int kh, int kw, int sh, int sw, int ph,
                int pw, int Ht, int Wt, T* dst, int64_t ldcol, int64_t col0) {
    for (int c = 0; c < C; ++c) {
        T* dc = dst + (int64_t)c * Hs * Ws;
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                const T* row = col + ((int64_t)(c * kh + dy) * kw + dx) * ldcol + col0;
                for (int y = 0; y < Ht; ++y) {
                    const int iy = y * sh - ph + dy;
                    if (iy < 0 || iy >= Hs) continue;
                    T* drow = dc + (int64_t)iy * Ws;
                    const T* r = row + (int64_t)y * Wt;
                    for (int x = 0; x < Wt; ++x) {
                        const int ix = x * sw - pw + dx;
                        if (ix >= 0 && ix < Ws) drow[ix] += r[x];
                    }
                }
            }
    }
}

template <typename T>
void conv2d_fwd(const T* x, const T* w, const T* b, T* y, int N, int Cin, int H, int W, int Cout,
                int kh, int kw, int sh, int sw, int ph, int pw, int groups) {
    const int Ho = conv_out_dim(H, kh, sh, ph), Wo = conv_out_dim(W, kw, sw, pw);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    const int64_t S = (int64_t)Ho * Wo, cols = (int64_t)N * S;
    const int Krows = CinG * kh * kw;
    std::vector<T> col((size_t)(Krows * cols));
    std::vector<T> tmp((size_t)(CoutG * cols));
    for (int g = 0; g < groups; ++g) {
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            im2col(x + ((int64_t)n * Cin + g * CinG) * H * W, CinG, H, W, kh, kw, sh, sw, ph, pw,
                   Ho, Wo, col.data(), cols, (int64_t)n * S);
        gemm(w + (int64_t)g * CoutG * Krows, col.data(), tmp.data(), CoutG, Krows, (int)cols);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < CoutG; ++c) {
                T* dst = y + ((int64_t)n * Cout + g * CoutG + c) * S;
                const T* src = tmp.data() + (int64_t)c * cols + (int64_t)n * S;
                if (b) {
                    const T bias = b[g * CoutG + c];
                    for (int64_t t = 0; t < S; ++t) dst[t] = src[t] + bias;
                } else {
                    std::memcpy(dst, src, (size_t)S * sizeof(T));
                }
            }
    }
}

template <typename T>
void conv2d_bwd_input(const T* dy, const T* w, T* dx, int N, int Cin, int H, int W, int Cout,
                      int kh, int kw, int sh, int sw, int ph, int pw, int groups) {
    const int Ho = conv_out_dim(H, kh, sh, ph), Wo = conv_out_dim(W, kw, sw, pw);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    const int64_t S = (int64_t)Ho * Wo, cols = (int64_t)N * S;
    const int Krows = CinG * kh * kw;
    std::vector<T> wT((size_t)Krows * CoutG);
    std::vector<T> dyg((size_t)(CoutG * cols));
    std::vector<T> dcol((size_t)(Krows * cols));
    for (int g = 0; g < groups; ++g) {
        transpose(w + (int64_t)g * CoutG * Krows, wT.data(), CoutG, Krows);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < CoutG; ++c)
                std::memcpy(dyg.data() + (int64_t)c * cols + (int64_t)n * S,
                            dy + ((int64_t)n * Cout + g * CoutG + c) * S, (size_t)S * sizeof(T));
        gemm(wT.data(), dyg.data(), dcol.data(), Krows, CoutG, (int)cols);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            col2im_add(dcol.data(), CinG, H, W, kh, kw, sh, sw, ph, pw, Ho, Wo,
                       dx + ((int64_t)n * Cin + g * CinG) * H * W, cols, (int64_t)n * S);
    }
}

template <typename T>
void conv2d_bwd_weight(const T* x, const T* dy, T* dw, int N, int Cin, int H, int W, int Cout,
                       int kh, int kw, int sh, int sw, int ph, int pw, int groups) {
    const int Ho = conv_out_dim(H, kh, sh, ph), Wo = conv_out_dim(W, kw, sw, pw);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    const int64_t S = (int64_t)Ho * Wo;
    const int Krows = CinG * kh * kw;
    std::vector<T> col((size_t)(Krows * S));
    std::vector<T> colT((size_t)(S * Krows));
    for (int g = 0; g < groups; ++g)
        for (int n = 0; n < N; ++n) {
            im2col(x + ((int64_t)n * Cin + g * CinG) * H * W, CinG, H, W, kh, kw, sh, sw, ph, pw,
                   Ho, Wo, col.data(), S, 0);
            transpose(col.data(), colT.data(), Krows, (int)S);
            gemm(dy + ((int64_t)n * Cout + g * CoutG) * S, colT.data(),
                 dw + (int64_t)g * CoutG * Krows, CoutG, (int)S, Krows, true);
        }
}

template <typename T>
void conv_bwd_bias(const T* dy, T* db, int N, int Cout, int64_t S) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < Cout; ++c) {
        T s = T(0);
        for (int n = 0; n < N; ++n) {
            const T* p = dy + ((int64_t)n * Cout + c) * S;
            for (int64_t t = 0; t < S; ++t) s += p[t];
        }
        db[c] += s;
    }
}

template <typename T>
void tconv2d_fwd(const T* x, const T* w, const T* b, T* y, int N, int Cin, int H, int W, int Cout,
                 int kh, int kw, int s, int p, int op, int groups) {
    const int Ho = tconv_out_dim(H, kh, s, p, op), Wo = tconv_out_dim(W, kw, s, p, op);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    const int64_t Sin = (int64_t)H * W, cols = (int64_t)N * Sin, So = (int64_t)Ho * Wo;
    const int Krows = CoutG * kh * kw;
    std::vector<T> wT((size_t)Krows * CinG);
    std::vector<T> xg((size_t)(CinG * cols));
    std::vector<T> col((size_t)(Krows * cols));
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) {
            T* dst = y + ((int64_t)n * Cout + c) * So;
            const T bias = b ? b[c] : T(0);
            for (int64_t t = 0; t < So; ++t) dst[t] = bias;
        }
    for (int g = 0; g < groups; ++g) {
        transpose(w + (int64_t)g * CinG * Krows, wT.data(), CinG, Krows);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < CinG; ++c)
                std::memcpy(xg.data() + (int64_t)c * cols + (int64_t)n * Sin,
                            x + ((int64_t)n * Cin + g * CinG + c) * Sin, (size_t)Sin * sizeof(T));
        gemm(wT.data(), xg.data(), col.data(), Krows, CinG, (int)cols);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            col2im_add(col.data(), CoutG, Ho, Wo, kh, kw, s, s, p, p, H, W,
                       y + ((int64_t)n * Cout + g * CoutG) * So, cols, (int64_t)n * Sin);
    }
}

template <typename T>
void tconv2d_bwd_input(const T* dy, const T* w, T* dx, int N, int Cin, int H, int W, int Cout,
                       int kh, int kw, int s, int p, int op, int groups) {
    const int Ho = tconv_out_dim(H, kh, s, p, op), Wo = tconv_out_dim(W, kw, s, p, op);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    const int64_t Sin = (int64_t)H * W, cols = (int64_t)N * Sin;
    const int Krows = CoutG * kh * kw;
    std::vector<T> col((size_t)(Krows * cols));
    std::vector<T> tmp((size_t)(CinG * cols));
    for (int g = 0; g < groups; ++g) {
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            im2col(dy + ((int64_t)n * Cout + g * CoutG) * Ho * Wo, CoutG, Ho, Wo, kh, kw, s, s, p,
                   p, H, W, col.data(), cols, (int64_t)n * Sin);
        gemm(w + (int64_t)g * CinG * Krows, col.data(), tmp.data(), CinG, Krows, (int)cols);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < CinG; ++c) {
                T* dst = dx + ((int64_t)n * Cin + g * CinG + c) * Sin;
                const T* src = tmp.data() + (int64_t)c * cols + (int64_t)n * Sin;
                for (int64_t t = 0; t < Sin; ++t) dst[t] += src[t];
            }
    }
}

template <typename T>
void tconv2d_bwd_weight(const T* x, const T* dy, T* dw, int N, int Cin, int H, int W, int Cout,
                        int kh, int kw, int s, int p, int op, int groups) {
    const int Ho = tconv_out_dim(H, kh, s, p, op), Wo = tconv_out_dim(W, kw, s, p, op);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    const int64_t Sin = (int64_t)H * W;
    const int Krows = CoutG * kh * kw;
    std::vector<T> col((size_t)(Krows * Sin));
    std::vector<T> colT((size_t)(Sin * Krows));
    for (int g = 0; g < groups; ++g)
        for (int n = 0; n < N; ++n) {
            im2col(dy + ((int64_t)n * Cout + g * CoutG) * Ho * Wo, CoutG, Ho, Wo, kh, kw, s, s, p,
                   p, H, W, col.data(), Sin, 0);
            transpose(col.data(), colT.data(), Krows, (int)Sin);
            gemm(x + ((int64_t)n * Cin + g * CinG) * Sin, colT.data(),
                 dw + (int64_t)g * CinG * Krows, CinG, (int)Sin, Krows, true);
        }
}

namespace ref {

// Direct-form convolutions, structurally independent of the im2col+GEMM path.
template <typename T>
void conv2d_fwd(const T* x, const T* w, const T* b, T* y, int N, int Cin, int H, int W, int Cout,
                int kh, int kw, int sh, int sw, int ph, int pw, int groups) {
    const int Ho = conv_out_dim(H, kh, sh, ph), Wo = conv_out_dim(W, kw, sw, pw);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co) {
            const int g = co / CoutG;
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    T s = b ? b[co] : T(0);
                    for (int cg = 0; cg < CinG; ++cg)
                        for (int dy = 0; dy < kh; ++dy)
                            for (int dx = 0; dx < kw; ++dx) {
                                const int iy = oy * sh - ph + dy, ix = ox * sw - pw + dx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                s += w[(((int64_t)co * CinG + cg) * kh + dy) * kw + dx] *
                                     x[(((int64_t)n * Cin + g * CinG + cg) * H + iy) * W + ix];
                            }
                    y[(((int64_t)n * Cout + co) * Ho + oy) * Wo + ox] = s;
                }
        }
}

template <typename T>
void tconv2d_fwd(const T* x, const T* w, const T* b, T* y, int N, int Cin, int H, int W, int Cout,
                 int kh, int kw, int s, int p, int op, int groups) {
    const int Ho = tconv_out_dim(H, kh, s, p, op), Wo = tconv_out_dim(W, kw, s, p, op);
    const int CinG = Cin / groups, CoutG = Cout / groups;
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co) {
            const int g = co / CoutG, cg = co % CoutG;
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    T acc = b ? b[co] : T(0);
                    for (int ci = 0; ci < CinG; ++ci)
                        for (int dy = 0; dy < kh; ++dy)
                            for (int dx = 0; dx < kw; ++dx) {
                                const int ty = oy + p - dy, tx = ox + p - dx;
                                if (ty % s || tx % s) continue;
                                const int iy = ty / s, ix = tx / s;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += w[(((int64_t)(g * CinG + ci) * CoutG + cg) * kh + dy) * kw +
                                         dx] *
                                       x[(((int64_t)n * Cin + g * CinG + ci) * H + iy) * W + ix];
                            }
                    y[(((int64_t)n * Cout + co) * Ho + oy) * Wo + ox] = acc;
                }
        }
}

}  // namespace ref

}  // namespace lsps::kern
