// Compares the OpenMP kernels against the serial reference implementations.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "lsps/core/rng.hpp"
#include "lsps/kernels/conv.hpp"
#include "lsps/kernels/gemm.hpp"
#include "lsps/kernels/norm.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace lsps;

namespace {

double time_best(const std::function<void()>& fn, int reps = 5) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

std::vector<float> randn(int64_t n, uint64_t seed) {
    std::vector<float> v(n);
    Rng rng(seed);
    for (auto& x : v) x = (float)rng.normal();
    return v;
}

void row(const char* name, double flop, double t_par, double t_ref) {
    std::printf("%-28s %9.3f ms %9.3f ms %7.2fx %8.2f GF/s\n", name, 1e3 * t_par, 1e3 * t_ref,
                t_ref / t_par, flop / t_par * 1e-9);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif
    std::printf("%-28s %12s %12s %8s %11s\n", "kernel", "parallel", "reference", "speedup",
                "throughput");

    {
        const int M = 512, K = 512, N = 512;
        auto A = randn((int64_t)M * K, 1), B = randn((int64_t)K * N, 2);
        std::vector<float> C((int64_t)M * N), Cr((int64_t)M * N);
        const double flop = 2.0 * M * K * N;
        const double tp = time_best([&] { kern::gemm(A.data(), B.data(), C.data(), M, K, N); });
        const double tr =
            time_best([&] { kern::ref::gemm(A.data(), B.data(), Cr.data(), M, K, N); });
        row("gemm 512x512x512", flop, tp, tr);
    }

    {
        const int N = 8, Cin = 64, Cout = 64, H = 32, W = 32, k = 3;
        auto x = randn((int64_t)N * Cin * H * W, 3);
        auto w = randn((int64_t)Cout * Cin * k * k, 4);
        auto b = randn(Cout, 5);
        const int Ho = kern::conv_out_dim(H, k, 1, 1), Wo = kern::conv_out_dim(W, k, 1, 1);
        std::vector<float> y((int64_t)N * Cout * Ho * Wo), yr(y.size());
        const double flop = 2.0 * N * Cout * Ho * Wo * Cin * k * k;
        const double tp = time_best([&] {
            kern::conv2d_fwd(x.data(), w.data(), b.data(), y.data(), N, Cin, H, W, Cout, k, k, 1,
                             1, 1, 1, 1);
        });
        const double tr = time_best([&] {
            kern::ref::conv2d_fwd(x.data(), w.data(), b.data(), yr.data(), N, Cin, H, W, Cout, k,
                                  k, 1, 1, 1, 1, 1);
        });
        row("conv3x3 8x64x32x32->64", flop, tp, tr);
    }

    {
        const int N = 16, C = 256, S = 16 * 16;
        auto x = randn((int64_t)N * C * S, 6);
        std::vector<float> y(x.size()), yr(x.size());
        std::vector<float> mean((int64_t)N * C), inv((int64_t)N * C);
        const double flop = 6.0 * N * C * S;
        const double tp = time_best([&] {
            kern::instance_norm_fwd(x.data(), y.data(), N, C, (int64_t)S, 1e-5f, mean.data(),
                                    inv.data());
        });
        const double tr = time_best(
            [&] { kern::ref::instance_norm_fwd(x.data(), yr.data(), N, C, (int64_t)S, 1e-5f); });
        row("instance_norm 16x256x256", flop, tp, tr);
    }
    return 0;
}
