#pragma once

#include <map>
#include <string>
#include <vector>

#include "lsps/graph/graph.hpp"
#include "lsps/models/arch.hpp"
#include "lsps/models/params.hpp"

namespace lsps {

template <typename T>
struct PoseEnc {
    Node<T>* mu;
    Node<T>* logvar;
};

template <typename T>
struct DiscOut {
    Node<T>* patch;               // patch logits, pre-sigmoid (N,1,ph,pw)
    Node<T>* phi;                 // penultimate activations (layer 5)
    std::vector<Node<T>*> taps;   // post-activation output of each body layer
};

// Cell-name predicates used for freeze contracts and optimizer grouping.
inline bool name_starts_with(const std::string& n, const std::string& p) {
    return n.size() >= p.size() && n.compare(0, p.size(), p) == 0;
}
inline bool is_pose_cell(const std::string& n) {
    return name_starts_with(n, "E_y.") || name_starts_with(n, "G_y.");
}
inline bool is_disc_cell(const std::string& n) {
    return name_starts_with(n, "D_s.") || name_starts_with(n, "D_r.") ||
           name_starts_with(n, "shared.D.");
}
inline bool is_gen_cell(const std::string& n) {
    return name_starts_with(n, "E_s.") || name_starts_with(n, "E_r.") ||
           name_starts_with(n, "G_s.") || name_starts_with(n, "G_r.") ||
           name_starts_with(n, "shared.enc_res4") || name_starts_with(n, "shared.dec_res1") ||
           name_starts_with(n, "M.");
}
inline bool is_posterior_head_cell(const std::string& n) {
    return name_starts_with(n, "P.head.");
}

namespace detail {

template <typename T>
Node<T>* activate(Graph<T>& g, Node<T>* x, const std::string& act, double slope) {
    if (act == "lrelu") return g.leaky_relu(x, (T)slope);
    if (act == "tanh") return g.tanh_(x);
    return x;
}

template <typename T>
Node<T>* apply_layer(Graph<T>& g, ParamStore<T>& ps, Node<T>* x, const LayerDesc& d,
                     double slope) {
    auto P = [&](const std::string& cell) -> Node<T>* { return g.param(cell, ps.cell(cell)); };
    if (d.kind == "conv") {
        x = g.conv2d(x, P(d.w), P(d.b), d.stride, d.pad, d.groups);
    } else if (d.kind == "tconv") {
        x = g.tconv2d(x, P(d.w), P(d.b), d.stride, d.pad, d.outpad, d.groups);
    } else if (d.kind == "linear") {
        x = g.linear(x, P(d.w), P(d.b));
    } else {  // resblk: grouped 3x3 -> IN -> lrelu -> 1x1 fuse -> IN, plus skip
        Node<T>* h = g.conv2d(x, P(d.gw), P(d.gb), 1, 1, d.groups);
        h = g.instance_norm(h);
        h = g.leaky_relu(h, (T)slope);
        h = g.conv2d(h, P(d.fw), P(d.fb), 1, 0, 1);
        h = g.instance_norm(h);
        Node<T>* skip = d.pw.empty() ? x : g.conv2d(x, P(d.pw), P(d.pb), 1, 0, 1);
        return g.add(h, skip);
    }
    return activate(g, x, d.act, slope);
}

}  // namespace detail

// Runs every layer of `net` in manifest order; returns taps when asked.
template <typename T>
Node<T>* run_net(Graph<T>& g, const Manifest& m, ParamStore<T>& ps, const std::string& net,
                 Node<T>* x, double slope, std::vector<Node<T>*>* taps = nullptr) {
    bool any = false;
    for (const auto& d : m.layers) {
        if (d.net != net) continue;
        any = true;
        x = detail::apply_layer(g, ps, x, d, slope);
        if (taps) taps->push_back(x);
    }
    if (!any) throw ConfigError("no layers for net " + net);
    return x;
}

// The ten LSPS networks over one shared parameter store.
template <typename T>
class Bundle {
  public:
    explicit Bundle(const ArchConfig& cfg)
        : cfg_(cfg), manifest_(plan_bundle(cfg)), ps_(make_param_store<T>(manifest_)) {}

    const ArchConfig& cfg() const { return cfg_; }
    const Manifest& manifest() const { return manifest_; }
    ParamStore<T>& params() { return ps_; }
    const ParamStore<T>& params() const { return ps_; }

    void init(uint64_t seed) { init_params(ps_, seed, cfg_.negative_slope); }

    template <typename U>
    Bundle<U> cast() const {
        Bundle<U> out(cfg_);
        for (const auto& [k, t] : ps_.cells()) {
            auto& dst = out.params().cell(k);
            for (size_t i = 0; i < t.data.size(); ++i) dst.data[i] = (U)t.data[i];
        }
        return out;
    }

    // ---- pose model ----

    // y (N, 3J) -> mu, logvar (N, latent)
    PoseEnc<T> encode_pose(Graph<T>& g, Node<T>* y) {
        check_cols(y, 3 * cfg_.joint_count, "encode_pose");
        Node<T>* h = layer(g, y, "E_y", "fc1");
        return {layer(g, h, "E_y", "mu"), layer(g, h, "E_y", "logvar")};
    }

    // z (N, latent) -> y (N, 3J)
    Node<T>* decode_pose(Graph<T>& g, Node<T>* z) {
        check_cols(z, cfg_.pose_latent_dim, "decode_pose");
        return layer(g, layer(g, z, "G_y", "fc1"), "G_y", "out");
    }

    // ---- depth model ----

    // x (N,1,res,res) -> latent mean (N,C,res/4,res/4)
    Node<T>* encode_depth(Graph<T>& g, Node<T>* x, Domain dom) {
        check_image(x, "encode_depth");
        return run_net(g, manifest_, ps_, std::string("E_") + domain_tag(dom), x,
                       cfg_.negative_slope);
    }

    // z (N,C,res/4,res/4) -> depth (N,1,res,res) in [-1,1]
    Node<T>* decode_depth(Graph<T>& g, Node<T>* z, Domain dom) {
        require_shape(z->val,
                      {z->val.dim(0), manifest_.latent_channels, manifest_.latent_spatial,
                       manifest_.latent_spatial},
                      "decode_depth");
        return run_net(g, manifest_, ps_, std::string("G_") + domain_tag(dom), z,
                       cfg_.negative_slope);
    }

    DiscOut<T> discriminate(Graph<T>& g, Node<T>* x, Domain dom) {
        check_image(x, "discriminate");
        DiscOut<T> out;
        Node<T>* p = run_net(g, manifest_, ps_, std::string("D_") + domain_tag(dom), x,
                             cfg_.negative_slope, &out.taps);
        out.patch = p;
        out.phi = out.taps[out.taps.size() - 2];
        return out;
    }

    // z_y (N, latent) -> depth latent (N,C,res/4,res/4)
    Node<T>* map_latent(Graph<T>& g, Node<T>* zy) {
        check_cols(zy, cfg_.pose_latent_dim, "map_latent");
        Node<T>* x = g.reshape(zy, {zy->val.dim(0), cfg_.pose_latent_dim, 1, 1});
        return run_net(g, manifest_, ps_, "M", x, cfg_.negative_slope);
    }

    // x (N,1,res,res) -> pose-latent estimate (N, latent): D-shaped trunk,
    // 20-channel patch head, global average pool.
    Node<T>* posterior(Graph<T>& g, Node<T>* x) {
        check_image(x, "posterior");
        Node<T>* p = run_net(g, manifest_, ps_, "P", x, cfg_.negative_slope);
        return g.spatial_mean(p);
    }

  private:
    ArchConfig cfg_;
    Manifest manifest_;
    ParamStore<T> ps_;

    Node<T>* layer(Graph<T>& g, Node<T>* x, const std::string& net, const std::string& name) {
        for (const auto& d : manifest_.layers)
            if (d.net == net && d.name == name)
                return detail::apply_layer(g, ps_, x, d, cfg_.negative_slope);
        throw ConfigError("no layer " + net + "." + name);
    }

    void check_cols(Node<T>* x, int cols, const char* where) const {
        if (x->val.ndim() != 2 || x->val.dim(1) != cols)
            throw ShapeError(std::string(where) + ": expected (N," + std::to_string(cols) +
                             "), got " + x->val.shape_str());
    }
    void check_image(Node<T>* x, const char* where) const {
        require_shape(x->val, {x->val.dim(0), 1, cfg_.image_resolution, cfg_.image_resolution},
                      where);
    }
};

}  // namespace lsps
