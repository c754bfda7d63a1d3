#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lsps/core/errors.hpp"
#include "lsps/core/rng.hpp"
#include "lsps/core/tensor.hpp"
#include "lsps/models/arch.hpp"

namespace lsps {

// Flat store of named parameter cells. Sharing is expressed by several view
// names resolving to one canonical cell, so shared weights have exactly one
// storage location and gradient accumulation through any alias lands there.
template <typename T>
class ParamStore {
  public:
    void declare(const std::string& view, const std::string& canonical,
                 const std::vector<int>& shape) {
        auto it = cells_.find(canonical);
        if (it == cells_.end()) {
            Tensor<T> t;
            t.shape = shape;
            t.data.assign(Tensor<T>::numel_of(shape), T(0));
            cells_.emplace(canonical, std::move(t));
        } else if (it->second.shape != shape) {
            throw ShapeError("cell " + canonical + " redeclared with different shape");
        }
        auto vit = views_.find(view);
        if (vit != views_.end() && vit->second != canonical)
            throw ConfigError("view " + view + " bound to two cells");
        views_[view] = canonical;
    }

    const std::string& canonical_of(const std::string& name) const {
        auto vit = views_.find(name);
        if (vit != views_.end()) return vit->second;
        if (cells_.count(name)) return cells_.find(name)->first;
        throw ConfigError("unknown parameter name " + name);
    }

    Tensor<T>& cell(const std::string& name) { return cells_.at(canonical_of(name)); }
    const Tensor<T>& cell(const std::string& name) const {
        return cells_.at(canonical_of(name));
    }
    bool has(const std::string& name) const {
        return views_.count(name) || cells_.count(name);
    }

    std::vector<std::string> canonical_names() const {  // sorted (std::map order)
        std::vector<std::string> out;
        out.reserve(cells_.size());
        for (const auto& [k, v] : cells_) out.push_back(k);
        return out;
    }
    const std::map<std::string, Tensor<T>>& cells() const { return cells_; }
    std::map<std::string, Tensor<T>>& cells() { return cells_; }
    const std::map<std::string, std::string>& views() const { return views_; }

    long long unique_param_count() const {
        long long n = 0;
        for (const auto& [k, v] : cells_) n += (long long)v.data.size();
        return n;
    }
    // Sums every view, so shared cells count once per aliasing network.
    long long view_param_count() const {
        long long n = 0;
        for (const auto& [v, c] : views_) n += (long long)cells_.at(c).data.size();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [v, c] : views_) out.declare(v, c, cells_.at(c).shape);
        for (const auto& [k, t] : cells_) {
            auto& dst = out.cell(k);
            for (size_t i = 0; i < t.data.size(); ++i) dst.data[i] = (U)t.data[i];
        }
        return out;
    }

  private:
    std::map<std::string, Tensor<T>> cells_;     // canonical -> storage
    std::map<std::string, std::string> views_;   // view -> canonical
};

namespace detail {

inline bool is_bias_cell(const std::string& name) {
    auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    return leaf == "b" || leaf == "gb" || leaf == "fb" || leaf == "pb";
}

template <typename T>
void register_layer(ParamStore<T>& ps, const LayerDesc& d) {
    if (d.kind == "resblk") {
        ps.declare(d.view_prefix() + ".gw", d.gw, {d.cout, d.cin / d.groups, 3, 3});
        ps.declare(d.view_prefix() + ".gb", d.gb, {d.cout});
        ps.declare(d.view_prefix() + ".fw", d.fw, {d.cout, d.cout, 1, 1});
        ps.declare(d.view_prefix() + ".fb", d.fb, {d.cout});
        if (!d.pw.empty()) {
            ps.declare(d.view_prefix() + ".pw", d.pw, {d.cout, d.cin, 1, 1});
            ps.declare(d.view_prefix() + ".pb", d.pb, {d.cout});
        }
    } else if (d.kind == "conv") {
        ps.declare(d.view_prefix() + ".w", d.w, {d.cout, d.cin / d.groups, d.k, d.k});
        ps.declare(d.view_prefix() + ".b", d.b, {d.cout});
    } else if (d.kind == "tconv") {
        ps.declare(d.view_prefix() + ".w", d.w, {d.cin, d.cout / d.groups, d.k, d.k});
        ps.declare(d.view_prefix() + ".b", d.b, {d.cout});
    } else {  // linear
        ps.declare(d.view_prefix() + ".w", d.w, {d.cout, d.cin});
        ps.declare(d.view_prefix() + ".b", d.b, {d.cout});
    }
}

}  // namespace detail

template <typename T>
ParamStore<T> make_param_store(const Manifest& m) {
    ParamStore<T> ps;
    for (const auto& d : m.layers) detail::register_layer(ps, d);
    return ps;
}

// He-style init for leaky-ReLU nets; biases zero. Each cell draws from its own
// named stream, so values depend only on (seed, cell name, shape), never on
// registration order.
template <typename T>
void init_params(ParamStore<T>& ps, uint64_t seed, double negative_slope) {
    for (const auto& name : ps.canonical_names()) {
        auto& t = ps.cell(name);
        if (detail::is_bias_cell(name)) {
            std::fill(t.data.begin(), t.data.end(), T(0));
            continue;
        }
        const double fan_in = (double)t.data.size() / (double)t.shape[0];
        const double stddev =
            std::sqrt(2.0 / ((1.0 + negative_slope * negative_slope) * fan_in));
        Rng rng = stream(seed, "init/" + name);
        for (auto& v : t.data) v = (T)(rng.normal() * stddev);
    }
}

}  // namespace lsps
