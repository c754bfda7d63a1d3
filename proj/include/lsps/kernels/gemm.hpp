#pragma once

#include <algorithm>
#include <cstdint>

// Matrix kernels. All matrices are dense row-major. Every output element is
// accumulated serially in k order by exactly one thread, so results are
// bitwise independent of the worker count. `ref` holds the naive serial
// implementations used as test/benchmark baselines.

namespace lsps::kern {

namespace ref {

// C (M x N) = A (M x K) * B (K x N); accumulates into C when accumulate.
template <typename T>
void gemm(const T* A, const T* B, T* C, int M, int K, int N, bool accumulate = false) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            T s = accumulate ? C[(int64_t)i * N + j] : T(0);
            for (int k = 0; k < K; ++k) s += A[(int64_t)i * K + k] * B[(int64_t)k * N + j];
            C[(int64_t)i * N + j] = s;
        }
}

template <typename T>
void transpose(const T* A, T* AT, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) AT[(int64_t)j * rows + i] = A[(int64_t)i * cols + j];
}

}  // namespace ref

// Register-tiled saxpy-form GEMM. The k loop is outermost within a tile so the
// panel of B streams through registers; accumulation order per element is
// k = 0..K-1, identical to ref::gemm.
template <typename T>
void gemm(const T* A, const T* B, T* C, int M, int K, int N, bool accumulate = false) {
    constexpr int MR = 4;
    constexpr int NR = sizeof(T) == 4 ? 32 : 16;
#pragma omp parallel for schedule(static)
    for (int ib = 0; ib < M; ib += MR) {
        const int mr = std::min(MR, M - ib);
        for (int jb = 0; jb < N; jb += NR) {
            const int nr = std::min(NR, N - jb);
            if (mr == MR && nr == NR) {
                T acc[MR][NR];
                for (int r = 0; r < MR; ++r)
                    for (int j = 0; j < NR; ++j)
                        acc[r][j] = accumulate ? C[(int64_t)(ib + r) * N + jb + j] : T(0);
                const T* a0 = A + (int64_t)ib * K;
                const T* a1 = a0 + K;
                const T* a2 = a1 + K;
                const T* a3 = a2 + K;
                for (int k = 0; k < K; ++k) {
                    const T* bp = B + (int64_t)k * N + jb;
                    const T av0 = a0[k], av1 = a1[k], av2 = a2[k], av3 = a3[k];
#pragma omp simd
                    for (int j = 0; j < NR; ++j) {
                        const T bv = bp[j];
                        acc[0][j] += av0 * bv;
                        acc[1][j] += av1 * bv;
                        acc[2][j] += av2 * bv;
                        acc[3][j] += av3 * bv;
                    }
                }
                for (int r = 0; r < MR; ++r)
                    for (int j = 0; j < NR; ++j) C[(int64_t)(ib + r) * N + jb + j] = acc[r][j];
            } else {
                for (int r = 0; r < mr; ++r)
                    for (int j = 0; j < nr; ++j) {
                        const int64_t ci = (int64_t)(ib + r) * N + jb + j;
                        T s = accumulate ? C[ci] : T(0);
                        const T* ap = A + (int64_t)(ib + r) * K;
                        const T* bp = B + jb + j;
                        for (int k = 0; k < K; ++k) s += ap[k] * bp[(int64_t)k * N];
                        C[ci] = s;
                    }
            }
        }
    }
}

template <typename T>
void transpose(const T* A, T* AT, int rows, int cols) {
    constexpr int BL = 32;
#pragma omp parallel for schedule(static)
    for (int ib = 0; ib < rows; ib += BL)
        for (int jb = 0; jb < cols; jb += BL) {
            const int ie = std::min(ib + BL, rows);
            const int je = std::min(jb + BL, cols);
            for (int i = ib; i < ie; ++i)
                for (int j = jb; j < je; ++j) AT[(int64_t)j * rows + i] = A[(int64_t)i * cols + j];
        }
}

}  // namespace lsps::kern
