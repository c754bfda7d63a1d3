#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "lsps/core/errors.hpp"

namespace lsps {

enum class Domain { s, r };
inline const char* domain_tag(Domain d) { return d == Domain::s ? "s" : "r"; }

struct ArchConfig {
    int image_resolution = 64;
    int base_channels = 32;       // paper scale is 64
    int joint_count = 16;         // J; pose nets consume 3J values
    int pose_latent_dim = 20;
    int pose_hidden = 30;
    int depth_latent_channels = 0;  // 0 = derived from base_channels (512 at paper scale)
    int residual_cardinality = 4;
    double negative_slope = 0.2;

    // Paper-scale channel counts are multiplied by base_channels/64, floored at 8.
    int scale_ch(int paper_n) const {
        return std::max(8, (int)((long long)paper_n * base_channels / 64));
    }
    int latent_spatial() const { return image_resolution / 4; }
    int latent_channels() const {
        return depth_latent_channels > 0 ? depth_latent_channels : scale_ch(512);
    }

    void validate() const {
        if (image_resolution < 8 || image_resolution % 4 != 0)
            throw ConfigError("image_resolution must be >= 8 and divisible by 4");
        if (pose_latent_dim < 2) throw ConfigError("pose_latent_dim must be >= 2");
        if (base_channels < 1) throw ConfigError("base_channels must be positive");
        if (joint_count < 5) throw ConfigError("joint_count must be >= 5");
        if (pose_hidden < 1) throw ConfigError("pose_hidden must be positive");
        if (residual_cardinality < 1) throw ConfigError("residual_cardinality must be positive");
        for (int paper_n : {256, 512})
            if (scale_ch(paper_n) % residual_cardinality != 0)
                throw ConfigError("scaled residual channels not divisible by cardinality");
    }
};

// One entry per layer of every network; doubles as the build manifest the
// tests assert against (stride arithmetic, shared cells, shapes).
struct LayerDesc {
    std::string net;   // E_s, E_r, G_s, G_r, D_s, D_r, P, M, E_y, G_y, or a baseline name
    std::string name;  // e.g. "conv1", "res3", "up2", "head"
    std::string kind;  // conv | tconv | resblk | linear
    int cin = 0, cout = 0, k = 0, stride = 1, pad = 0, outpad = 0, groups = 1;
    std::string act;  // lrelu | tanh | none
    int hin = 0, hout = 0;  // spatial extent before/after (square); 0 for linear
    // Canonical parameter cells. conv/tconv/linear fill w/b; resblk fills the rest.
    std::string w, b;                  // main weight/bias
    std::string gw, gb, fw, fb;        // resblk grouped conv + 1x1 fuse
    std::string pw, pb;                // resblk 1x1 skip projection (when cin != cout)
    bool shared = false;               // true when the cells live in a sharing group

    std::string view_prefix() const { return net + "." + name; }
};

struct Manifest {
    std::vector<LayerDesc> layers;
    int latent_spatial = 0, latent_channels = 0;
    int disc_phi_spatial = 0;    // spatial size of the penultimate (layer-5) activations
    int disc_patch_spatial = 0;  // spatial size of the final patch map

    std::vector<const LayerDesc*> net(const std::string& n) const {
        std::vector<const LayerDesc*> out;
        for (const auto& l : layers)
            if (l.net == n) out.push_back(&l);
        return out;
    }

    std::string describe() const {
        std::ostringstream os;
        for (const auto& l : layers) {
            os << l.net << "." << l.name << " " << l.kind << " " << l.cin << "->" << l.cout;
            if (l.kind != "linear")
                os << " k" << l.k << " s" << l.stride << " p" << l.pad
                   << (l.outpad ? " op" + std::to_string(l.outpad) : "") << " " << l.hin << "->"
                   << l.hout;
            if (l.groups > 1) os << " g" << l.groups;
            if (l.shared) os << " [shared]";
            os << "\n";
        }
        os << "latent " << latent_channels << "x" << latent_spatial << "x" << latent_spatial
           << "; disc phi " << disc_phi_spatial << "x" << disc_phi_spatial << "; patch "
           << disc_patch_spatial << "x" << disc_patch_spatial << "\n";
        return os.str();
    }
};

namespace detail {

inline LayerDesc conv_desc(const std::string& net, const std::string& name, int cin, int cout,
                           int k, int s, int p, int hin, const std::string& act,
                           const std::string& cell_prefix, bool shared) {
    LayerDesc d;
    d.net = net;
    d.name = name;
    d.kind = "conv";
    d.cin = cin;
    d.cout = cout;
    d.k = k;
    d.stride = s;
    d.pad = p;
    d.hin = hin;
    d.hout = (hin + 2 * p - k) / s + 1;
    d.act = act;
    d.w = cell_prefix + ".w";
    d.b = cell_prefix + ".b";
    d.shared = shared;
    if (d.hout < 1) throw ConfigError("layer " + net + "." + name + ": output size < 1");
    return d;
}

inline LayerDesc tconv_desc(const std::string& net, const std::string& name, int cin, int cout,
                            int k, int s, int p, int op, int hin, const std::string& act,
                            const std::string& cell_prefix) {
    LayerDesc d;
    d.net = net;
    d.name = name;
    d.kind = "tconv";
    d.cin = cin;
    d.cout = cout;
    d.k = k;
    d.stride = s;
    d.pad = p;
    d.outpad = op;
    d.hin = hin;
    d.hout = (hin - 1) * s + k - 2 * p + op;
    d.act = act;
    d.w = cell_prefix + ".w";
    d.b = cell_prefix + ".b";
    if (d.hout < 1) throw ConfigError("layer " + net + "." + name + ": output size < 1");
    return d;
}

inline LayerDesc resblk_desc(const std::string& net, const std::string& name, int cin, int cout,
                             int groups, int hin, const std::string& cell_prefix, bool shared) {
    LayerDesc d;
    d.net = net;
    d.name = name;
    d.kind = "resblk";
    d.cin = cin;
    d.cout = cout;
    d.k = 3;
    d.stride = 1;
    d.pad = 1;
    d.groups = groups;
    d.hin = hin;
    d.hout = hin;
    d.act = "none";
    d.gw = cell_prefix + ".gw";
    d.gb = cell_prefix + ".gb";
    d.fw = cell_prefix + ".fw";
    d.fb = cell_prefix + ".fb";
    if (cin != cout) {
        d.pw = cell_prefix + ".pw";
        d.pb = cell_prefix + ".pb";
    }
    d.shared = shared;
    if (cin % groups || cout % groups)
        throw ConfigError("layer " + net + "." + name + ": channels not divisible by cardinality");
    return d;
}

inline LayerDesc linear_desc(const std::string& net, const std::string& name, int in, int out,
                             const std::string& act, const std::string& cell_prefix) {
    LayerDesc d;
    d.net = net;
    d.name = name;
    d.kind = "linear";
    d.cin = in;
    d.cout = out;
    d.act = act;
    d.w = cell_prefix + ".w";
    d.b = cell_prefix + ".b";
    return d;
}

// Discriminator body spatial rule: kernel-3 convolutions, stride 2 without
// padding while the input is large enough (>= 7), stride 1 with padding 1
// once it is small; the head is a kernel-2 stride-1 patch conv. At
// resolution 64 this yields the 3x3 penultimate map and 2x2 patch map the
// manifest asserts below.
inline void disc_body(Manifest& m, const ArchConfig& cfg, const std::string& net,
                      const std::string& cell_net3to5) {
    const int chans[5] = {cfg.scale_ch(64), cfg.scale_ch(128), cfg.scale_ch(256),
                          cfg.scale_ch(512), cfg.scale_ch(1024)};
    int h = cfg.image_resolution, cin = 1;
    for (int i = 0; i < 5; ++i) {
        const bool big = h >= 7;
        const std::string lname = "conv" + std::to_string(i + 1);
        const bool shared_cells = i >= 2;
        const std::string prefix = (shared_cells ? cell_net3to5 : net) + "." + lname;
        LayerDesc d = conv_desc(net, lname, cin, chans[i], 3, big ? 2 : 1, big ? 0 : 1, h,
                                "lrelu", prefix, shared_cells);
        h = d.hout;
        cin = chans[i];
        m.layers.push_back(d);
    }
    m.disc_phi_spatial = h;
    if (h < 2) throw ConfigError("discriminator penultimate map too small for the patch head");
}

}  // namespace detail

// Lays out all ten networks plus canonical cell names implementing the
// sharing contract: encoders share their last residual block, decoders their
// first, discriminators share layers 3-6, and P aliases D_s's layers 1-2 plus
// the shared trunk, owning only its head.
inline Manifest plan_bundle(const ArchConfig& cfg) {
    cfg.validate();
    Manifest m;
    const int res = cfg.image_resolution;
    const int C = cfg.residual_cardinality;
    const int lc = cfg.latent_channels();
    const int ls = cfg.latent_spatial();
    m.latent_channels = lc;
    m.latent_spatial = ls;
    const int e1 = cfg.scale_ch(64), e2 = cfg.scale_ch(128), e3 = cfg.scale_ch(256);

    for (Domain dom : {Domain::s, Domain::r}) {
        const std::string E = std::string("E_") + domain_tag(dom);
        int h = res;
        m.layers.push_back(detail::conv_desc(E, "conv1", 1, e1, 7, 1, 3, h, "lrelu", E + ".conv1", false));
        h = m.layers.back().hout;
        m.layers.push_back(detail::conv_desc(E, "conv2", e1, e2, 3, 2, 1, h, "lrelu", E + ".conv2", false));
        h = m.layers.back().hout;
        m.layers.push_back(detail::conv_desc(E, "conv3", e2, e3, 3, 2, 1, h, "lrelu", E + ".conv3", false));
        h = m.layers.back().hout;
        if (h != ls) throw ConfigError("encoder latent spatial mismatch");
        m.layers.push_back(detail::resblk_desc(E, "res1", e3, lc, C, h, E + ".res1", false));
        m.layers.push_back(detail::resblk_desc(E, "res2", lc, lc, C, h, E + ".res2", false));
        m.layers.push_back(detail::resblk_desc(E, "res3", lc, lc, C, h, E + ".res3", false));
        m.layers.push_back(detail::resblk_desc(E, "res4", lc, lc, C, h, "shared.enc_res4", true));
    }
    for (Domain dom : {Domain::s, Domain::r}) {
        const std::string G = std::string("G_") + domain_tag(dom);
        int h = ls;
        m.layers.push_back(detail::resblk_desc(G, "res1", lc, lc, C, h, "shared.dec_res1", true));
        m.layers.push_back(detail::resblk_desc(G, "res2", lc, lc, C, h, G + ".res2", false));
        m.layers.push_back(detail::resblk_desc(G, "res3", lc, lc, C, h, G + ".res3", false));
        m.layers.push_back(detail::resblk_desc(G, "res4", lc, lc, C, h, G + ".res4", false));
        m.layers.push_back(detail::tconv_desc(G, "up1", lc, e3, 3, 2, 1, 1, h, "lrelu", G + ".up1"));
        h = m.layers.back().hout;
        m.layers.push_back(detail::tconv_desc(G, "up2", e3, e2, 3, 2, 1, 1, h, "lrelu", G + ".up2"));
        h = m.layers.back().hout;
        if (h != res) throw ConfigError("decoder output spatial mismatch");
        m.layers.push_back(detail::conv_desc(G, "out", e2, 1, 1, 1, 0, h, "tanh", G + ".out", false));
    }

    detail::disc_body(m, cfg, "D_s", "shared.D");
    detail::disc_body(m, cfg, "D_r", "shared.D");
    const int phi = m.disc_phi_spatial;
    m.layers.push_back(detail::conv_desc("D_s", "conv6", cfg.scale_ch(1024), 1, 2, 1, 0, phi,
                                         "none", "shared.D.conv6", true));
    m.layers.push_back(detail::conv_desc("D_r", "conv6", cfg.scale_ch(1024), 1, 2, 1, 0, phi,
                                         "none", "shared.D.conv6", true));
    m.disc_patch_spatial = m.layers.back().hout;

    // P aliases D_s's full body (layers 1-5) and owns only the 20-channel head.
    {
        int h = res, cin = 1;
        const int chans[5] = {e1, e2, e3, cfg.scale_ch(512), cfg.scale_ch(1024)};
        for (int i = 0; i < 5; ++i) {
            const bool big = h >= 7;
            const std::string lname = "conv" + std::to_string(i + 1);
            const std::string prefix = (i >= 2 ? std::string("shared.D") : std::string("D_s")) +
                                       "." + lname;
            LayerDesc d = detail::conv_desc("P", lname, cin, chans[i], 3, big ? 2 : 1,
                                            big ? 0 : 1, h, "lrelu", prefix, true);
            h = d.hout;
            cin = chans[i];
            m.layers.push_back(d);
        }
        m.layers.push_back(detail::conv_desc("P", "head", cfg.scale_ch(1024), cfg.pose_latent_dim,
                                             2, 1, 0, h, "none", "P.head", false));
    }

    // Mapping function: first transposed conv lifts the 20-vector to a
    // min(4, latent) patch, then kernel-4 stride-2 doublings reach the depth
    // latent spatial size; the last layer has no activation.
    {
        const int k0 = std::min(4, ls);
        int ups = 0;
        for (int h = k0; h < ls; h *= 2) ++ups;
        const int nlayers = 1 + ups;
        int cin = cfg.pose_latent_dim, h = 1;
        for (int j = 1; j <= nlayers; ++j) {
            const bool last = j == nlayers;
            const int cout = last ? lc
                                  : cfg.scale_ch(j <= 2 ? 1024 : std::max(8, 1024 >> (j - 2)));
            LayerDesc d = j == 1 ? detail::tconv_desc("M", "up1", cin, cout, k0, 1, 0, 0, h,
                                                      last ? "none" : "lrelu", "M.up1")
                                 : detail::tconv_desc("M", "up" + std::to_string(j), cin, cout, 4,
                                                      2, 1, 0, h, last ? "none" : "lrelu",
                                                      "M.up" + std::to_string(j));
            h = d.hout;
            cin = cout;
            m.layers.push_back(d);
        }
        if (h != ls) throw ConfigError("mapping output spatial mismatch");
    }

    const int in3j = 3 * cfg.joint_count;
    m.layers.push_back(detail::linear_desc("E_y", "fc1", in3j, cfg.pose_hidden, "lrelu", "E_y.fc1"));
    m.layers.push_back(detail::linear_desc("E_y", "mu", cfg.pose_hidden, cfg.pose_latent_dim, "none", "E_y.mu"));
    m.layers.push_back(detail::linear_desc("E_y", "logvar", cfg.pose_hidden, cfg.pose_latent_dim, "none", "E_y.logvar"));
    m.layers.push_back(detail::linear_desc("G_y", "fc1", cfg.pose_latent_dim, cfg.pose_hidden, "lrelu", "G_y.fc1"));
    m.layers.push_back(detail::linear_desc("G_y", "out", cfg.pose_hidden, in3j, "none", "G_y.out"));
    return m;
}

// Direct-regressor baseline: the discriminator architecture with a pose-latent
// head (matched capacity with P), parameters private to `net`.
inline Manifest plan_regressor(const ArchConfig& cfg, const std::string& net = "B") {
    cfg.validate();
    Manifest m;
    m.latent_channels = cfg.latent_channels();
    m.latent_spatial = cfg.latent_spatial();
    const int chans[5] = {cfg.scale_ch(64), cfg.scale_ch(128), cfg.scale_ch(256),
                          cfg.scale_ch(512), cfg.scale_ch(1024)};
    int h = cfg.image_resolution, cin = 1;
    for (int i = 0; i < 5; ++i) {
        const bool big = h >= 7;
        const std::string lname = "conv" + std::to_string(i + 1);
        LayerDesc d = detail::conv_desc(net, lname, cin, chans[i], 3, big ? 2 : 1, big ? 0 : 1, h,
                                        "lrelu", net + "." + lname, false);
        h = d.hout;
        cin = chans[i];
        m.layers.push_back(d);
    }
    m.disc_phi_spatial = h;
    m.layers.push_back(detail::conv_desc(net, "head", cfg.scale_ch(1024), cfg.pose_latent_dim, 2,
                                         1, 0, h, "none", net + ".head", false));
    m.disc_patch_spatial = m.layers.back().hout;
    return m;
}

}  // namespace lsps
