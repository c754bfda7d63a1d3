#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lsps/core/rng.hpp"
#include "lsps/graph/graph.hpp"
#include "lsps/models/params.hpp"

// Central finite-difference gradient checking against the tape. Works in
// double. For each parameter cell a subset of indices is probed (all of them
// when the cell is small or max_per_cell <= 0); elements whose analytic and
// numeric gradients are both below `min_grad` are skipped per contract.

namespace lsps {

struct GradCheckReport {
    int checked = 0;
    int skipped_small = 0;
    double max_rel_err = 0.0;
    std::string worst_cell;
    int64_t worst_index = -1;
    double worst_analytic = 0.0, worst_numeric = 0.0;
};

// build: constructs the scalar loss on a fresh graph from current ps values.
inline GradCheckReport grad_check(
    ParamStore<double>& ps, const std::function<Node<double>*(Graph<double>&)>& build,
    uint64_t seed, int max_per_cell = 0, double tol_h = 1e-5, double min_grad = 1e-6,
    const std::function<bool(const std::string&)>& cell_filter = {}) {
    GradCheckReport rep;

    Graph<double> g;
    Node<double>* loss = build(g);
    g.backward(loss);
    std::map<std::string, Tensor<double>> analytic;
    for (const auto& [name, node] : g.param_nodes())
        if (node->needs_grad) analytic.emplace(name, node->grad);

    auto eval_loss = [&]() {
        Graph<double> ge;
        ge.set_trainable_filter([](const std::string&) { return false; });
        return build(ge)->val[0];
    };

    for (auto& [name, grad] : analytic) {
        if (cell_filter && !cell_filter(name)) continue;
        Tensor<double>& cell = ps.cell(name);
        std::vector<int64_t> idx;
        const int64_t n = cell.numel();
        if (max_per_cell <= 0 || n <= max_per_cell) {
            idx.resize((size_t)n);
            for (int64_t i = 0; i < n; ++i) idx[(size_t)i] = i;
        } else {
            Rng r = stream(seed, "gradcheck/" + name);
            for (int i = 0; i < max_per_cell; ++i) idx.push_back((int64_t)r.uniform_int((uint64_t)n));
            std::sort(idx.begin(), idx.end());
            idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        }
        for (int64_t i : idx) {
            const double theta = cell[i];
            const double h = tol_h * (1.0 + std::abs(theta));
            cell[i] = theta + h;
            const double lp = eval_loss();
            cell[i] = theta - h;
            const double lm = eval_loss();
            cell[i] = theta;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = grad[i];
            if (std::abs(fd) < min_grad && std::abs(an) < min_grad) {
                ++rep.skipped_small;
                continue;
            }
            const double rel = std::abs(fd - an) / std::max(std::abs(fd), std::abs(an));
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_cell = name;
                rep.worst_index = i;
                rep.worst_analytic = an;
                rep.worst_numeric = fd;
            }
        }
    }
    return rep;
}

}  // namespace lsps
