#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>

#include "doctest.h"
#include "lsps/core/rng.hpp"
#include "lsps/graph/gradcheck.hpp"
#include "lsps/losses/losses.hpp"

using namespace lsps;

namespace {

ArchConfig cfg_at(int res) {
    ArchConfig cfg;
    cfg.image_resolution = res;
    cfg.base_channels = 8;
    return cfg;
}

template <typename T>
Tensor<T> rand_image(int n, int res, uint64_t seed) {
    Tensor<T> t({n, 1, res, res});
    Rng rng(seed);
    for (auto& v : t.data) v = (T)rng.uniform(-1.0, 1.0);
    return t;
}

template <typename T>
Tensor<T> rand_rows(int n, int d, uint64_t seed, double scale = 0.3) {
    Tensor<T> t({n, d});
    Rng rng(seed);
    for (auto& v : t.data) v = (T)(scale * rng.normal());
    return t;
}

// Zeroes every parameter cell referenced by the layers of `net`.
template <typename T>
void zero_net(Bundle<T>& b, const std::string& net) {
    for (const auto& d : b.manifest().layers) {
        if (d.net != net) continue;
        for (const auto& cell : {d.w, d.b, d.gw, d.gb, d.fw, d.fb, d.pw, d.pb})
            if (!cell.empty())
                std::fill(b.params().cell(cell).data.begin(), b.params().cell(cell).data.end(),
                          T(0));
    }
}

template <typename T>
void set_cell(Bundle<T>& b, const std::string& cell, T v) {
    auto& t = b.params().cell(cell);
    std::fill(t.data.begin(), t.data.end(), v);
}

template <typename T>
double value(Node<T>* n) {
    return (double)n->val[0];
}

LossWeights only(double LossWeights::* field, double v) {
    LossWeights w;
    w.lambda0 = w.lambda1 = w.lambda2 = w.lambda3 = w.lambda4 = 0;
    w.lambda5 = w.lambda6 = w.lambda7 = w.lambda8 = 0;
    w.fm_weight_phase2 = 0;
    w.*field = v;
    return w;
}

}  // namespace

TEST_CASE("pose VAE: closed-form KL values") {
    Bundle<double> b(cfg_at(16));
    b.init(1);
    auto y = rand_rows<double>(3, 48, 2);
    LossCtx<double> ctx{5, 0, true, nullptr};

    // mu = 0, logvar = 0 -> KL exactly 0
    zero_net(b, "E_y");
    {
        Graph<double> g;
        auto* l = loss_vae_pose(b, g, y, only(&LossWeights::lambda0, 1.0), ctx);
        CHECK(value(l) == 0.0);
    }

    // mu = 1, logvar = 0 over 20 dims -> KL = 10 exactly
    set_cell(b, "E_y.mu.b", 1.0);
    {
        Graph<double> g;
        auto* l = loss_vae_pose(b, g, y, only(&LossWeights::lambda0, 1.0), ctx);
        CHECK(value(l) == doctest::Approx(10.0).epsilon(1e-12));
    }

    // perfect reconstruction: y = 0 and G_y zeroed -> NLL term 0
    zero_net(b, "E_y");
    zero_net(b, "G_y");
    {
        Graph<double> g;
        Tensor<double> y0({3, 48}, 0.0);
        auto* l = loss_vae_pose(b, g, y0, only(&LossWeights::lambda1, 100.0), ctx);
        CHECK(value(l) == 0.0);
    }
}

TEST_CASE("pose VAE: KL matches an independent double computation") {
    Bundle<double> b(cfg_at(16));
    b.init(3);
    auto y = rand_rows<double>(4, 48, 4);
    LossCtx<double> ctx{6, 0, true, nullptr};

    auto [mu, lv] = lossdetail::pose_targets(b, y);
    double kl = 0;
    for (int64_t i = 0; i < mu.numel(); ++i)
        kl += 0.5 * (mu[i] * mu[i] + std::exp(lv[i]) - 1.0 - lv[i]);
    kl /= mu.dim(0);

    Graph<double> g;
    auto* l = loss_vae_pose(b, g, y, only(&LossWeights::lambda0, 1.0), ctx);
    CHECK(value(l) == doctest::Approx(kl).epsilon(1e-9));
    CHECK(value(l) >= 0.0);
}

TEST_CASE("closed-form KL agrees with a Monte-Carlo estimate within 2 percent") {
    // E_q[log q - log p] sampled directly in scalar double arithmetic
    Rng draw(9);
    std::vector<double> mu(20), lv(20);
    for (auto& v : mu) v = draw.uniform(-1.0, 1.0);
    for (auto& v : lv) v = draw.uniform(-1.0, 1.0);

    double closed = 0;
    for (int i = 0; i < 20; ++i)
        closed += 0.5 * (mu[(size_t)i] * mu[(size_t)i] + std::exp(lv[(size_t)i]) - 1.0 -
                         lv[(size_t)i]);

    const int n = 1000000;
    Rng rng(10);
    double acc = 0;
    for (int s = 0; s < n; ++s) {
        double term = 0;
        for (int i = 0; i < 20; ++i) {
            const double sd = std::exp(0.5 * lv[(size_t)i]);
            const double z = mu[(size_t)i] + sd * rng.normal();
            // log q(z) - log p(z); the (2 pi) constants cancel
            const double zq = (z - mu[(size_t)i]) / sd;
            term += -0.5 * zq * zq - 0.5 * lv[(size_t)i] + 0.5 * z * z;
        }
        acc += term;
    }
    const double mc = acc / n;
    CHECK(std::abs(mc - closed) / closed < 0.02);
}

TEST_CASE("depth VAE: KL closed form and forced constants") {
    Bundle<double> b(cfg_at(16));
    b.init(11);
    auto x = rand_image<double>(2, 16, 12);
    LossCtx<double> ctx{7, 0, true, nullptr};
    const int lc = b.manifest().latent_channels, ls = b.manifest().latent_spatial;

    // zero encoder -> latent mean 0 -> KL term 0
    zero_net(b, "E_s");
    {
        Graph<double> g;
        auto* l = loss_vae_depth(b, g, x, Domain::s, only(&LossWeights::lambda2, 1.0), ctx);
        CHECK(value(l) == 0.0);
    }

    // skip-projection bias lifts the latent to all-ones: KL = 0.5 * lc * ls^2
    set_cell(b, "E_s.res1.pb", 1.0);
    {
        Graph<double> g;
        auto* l = loss_vae_depth(b, g, x, Domain::s, only(&LossWeights::lambda2, 1.0), ctx);
        CHECK(value(l) == doctest::Approx(0.5 * lc * ls * ls).epsilon(1e-9));
    }
}

TEST_CASE("depth VAE: value equals the step-by-step composition") {
    Bundle<double> b(cfg_at(16));
    b.init(13);
    auto x = rand_image<double>(2, 16, 14);
    LossCtx<double> ctx{8, 3, true, nullptr};
    LossWeights W;

    Graph<double> g;
    auto* l = loss_vae_depth(b, g, x, Domain::s, W, ctx);

    // independent pipeline with the same noise draws
    Graph<double> og;
    auto* mu = b.encode_depth(og, og.input(x), Domain::s);
    double kl = 0;
    for (int64_t i = 0; i < mu->val.numel(); ++i) kl += 0.5 * mu->val[i] * mu->val[i];
    kl /= mu->val.dim(0);
    auto eps = ctx.noise("zs", mu->val.shape);
    Tensor<double> z(mu->val.shape);
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = mu->val[i] + eps[i];
    auto* xr = b.decode_depth(og, og.input(z), Domain::s);
    double mae = 0;
    for (int64_t i = 0; i < x.numel(); ++i) mae += std::abs(xr->val[i] - x[i]);
    mae /= (double)x.numel();

    CHECK(value(l) == doctest::Approx(W.lambda2 * kl + W.lambda3 * mae).epsilon(1e-9));
}

TEST_CASE("GAN loss: plug-in arithmetic at D = 0.5 and the saturated limit") {
    Bundle<double> b(cfg_at(16));
    b.init(15);
    auto xa = rand_image<double>(2, 16, 16);
    auto xb = rand_image<double>(2, 16, 17);
    LossWeights W;

    zero_net(b, "D_s");  // includes the shared trunk cells; logits become 0
    {
        Graph<double> g;
        auto* ld = loss_gan(b, g, g.input(xa), g.input(xb), Domain::s, GanSide::discriminator, W);
        CHECK(value(ld) == doctest::Approx(W.lambda4 * 2.0 * std::log(2.0)).epsilon(1e-12));
        auto* lg = loss_gan(b, g, g.input(xa), g.input(xb), Domain::s, GanSide::generator, W);
        CHECK(value(lg) == doctest::Approx(W.lambda4 * std::log(2.0)).epsilon(1e-12));
        auto* lf = loss_gan_fake_only(b, g, g.input(xb), Domain::s, W);
        CHECK(value(lf) == doctest::Approx(W.lambda4 * std::log(2.0)).epsilon(1e-12));
    }

    // D(translated) -> 1: generator surrogate collapses to the clamp floor
    set_cell(b, "shared.D.conv6.b", 40.0);
    {
        Graph<double> g;
        auto* lg = loss_gan(b, g, g.input(xa), g.input(xb), Domain::s, GanSide::generator, W);
        CHECK(value(lg) >= 0.0);
        CHECK(value(lg) < W.lambda4 * 1e-6);
        auto* ld = loss_gan(b, g, g.input(xa), g.input(xb), Domain::s, GanSide::discriminator, W);
        CHECK(std::isfinite(value(ld)));  // clamped away from log(0)
        CHECK(value(ld) > 0.0);
    }
}

TEST_CASE("cycle loss: zeroed re-encoder kills the KL term; composition oracle") {
    Bundle<double> b(cfg_at(16));
    b.init(19);
    auto x = rand_image<double>(2, 16, 20);
    LossCtx<double> ctx{9, 1, true, nullptr};

    {
        Bundle<double> bz = b;
        zero_net(bz, "E_r");  // re-encoded mean of anything is 0
        Graph<double> g;
        auto* l = loss_cycle(bz, g, x, Domain::s, only(&LossWeights::lambda2, 1.0), ctx);
        CHECK(value(l) == 0.0);
    }

    LossWeights W;
    Graph<double> g;
    auto* l = loss_cycle(b, g, x, Domain::s, W, ctx);

    Graph<double> og;
    auto* mu1 = b.encode_depth(og, og.input(x), Domain::s);
    auto e1 = ctx.noise("zs", mu1->val.shape);
    Tensor<double> z1(mu1->val.shape);
    for (int64_t i = 0; i < z1.numel(); ++i) z1[i] = mu1->val[i] + e1[i];
    auto* xt = b.decode_depth(og, og.input(z1), Domain::r);
    auto* mu2 = b.encode_depth(og, xt, Domain::r);
    double kl = 0;
    for (int64_t i = 0; i < mu2->val.numel(); ++i) kl += 0.5 * mu2->val[i] * mu2->val[i];
    kl /= mu2->val.dim(0);
    auto e2 = ctx.noise("cc_zsr", mu2->val.shape);
    Tensor<double> z2(mu2->val.shape);
    for (int64_t i = 0; i < z2.numel(); ++i) z2[i] = mu2->val[i] + e2[i];
    auto* xb = b.decode_depth(og, og.input(z2), Domain::s);
    double mae = 0;
    for (int64_t i = 0; i < x.numel(); ++i) mae += std::abs(xb->val[i] - x[i]);
    mae /= (double)x.numel();

    CHECK(value(l) == doctest::Approx(W.lambda2 * kl + W.lambda3 * mae).epsilon(1e-9));

    // twice-translated image equal to the input would zero the recon term
    Graph<double> mg;
    auto* same = lossdetail::mae(mg, mg.input(x), mg.input(x));
    CHECK(value(same) == 0.0);
}

TEST_CASE("map loss: forced-zero alignment, unit-offset norm, pose freeze") {
    Bundle<double> b(cfg_at(16));
    b.init(21);
    auto x = rand_image<double>(2, 16, 22);
    auto y = rand_rows<double>(2, 48, 23);
    LossCtx<double> ctx{10, 2, false, nullptr};  // mean path: z_y = mu_y exactly
    const int lc = b.manifest().latent_channels, ls = b.manifest().latent_spatial;

    zero_net(b, "M");
    zero_net(b, "E_s");
    {
        Graph<double> g;
        auto* l = loss_map(b, g, x, y, Domain::s, only(&LossWeights::lambda5, 1.0), ctx);
        CHECK(value(l) == 0.0);  // M(z_y) = 0 = z_x
    }

    // unit offset in every latent element: ||0 - 1||_2 = sqrt(L)
    set_cell(b, "E_s.res1.pb", 1.0);
    {
        Graph<double> g;
        auto* l = loss_map(b, g, x, y, Domain::s, only(&LossWeights::lambda5, 1.0), ctx);
        CHECK(value(l) == doctest::Approx(std::sqrt((double)lc * ls * ls)).epsilon(1e-12));
    }

    // no gradient path into the pose networks
    {
        Graph<double> g;
        LossWeights W;
        auto* l = loss_map(b, g, x, y, Domain::s, W, ctx);
        g.backward(l);
        CHECK(g.param_nodes().count("E_y.mu.w") == 0);
        CHECK(g.param_nodes().count("E_y.fc1.w") == 0);
        CHECK(g.param_nodes().count("M.up1.w") == 1);
    }

    Tensor<double> empty;
    Graph<double> ge;
    CHECK_THROWS_AS(loss_map(b, ge, empty, empty, Domain::r, LossWeights{}, ctx), DomainError);
}

TEST_CASE("posterior loss: forced values and parameter isolation") {
    Bundle<double> b(cfg_at(16));
    b.init(25);
    auto x = rand_image<double>(2, 16, 26);
    auto y = rand_rows<double>(2, 48, 27);

    zero_net(b, "E_y");
    zero_net(b, "P");  // P trunk shares D_s cells; this also zeroes the head
    {
        Graph<double> g;
        auto* l = loss_posterior(b, g, x, y, Domain::s, only(&LossWeights::lambda7, 1.0));
        CHECK(value(l) == 0.0);  // P(x) = 0 = mu_y
    }

    set_cell(b, "E_y.mu.b", 1.0);  // constant unit error in all 20 dims
    {
        Graph<double> g;
        LossWeights W;
        auto* l = loss_posterior(b, g, x, y, Domain::s, W);
        CHECK(value(l) == doctest::Approx(W.lambda7 * std::sqrt(20.0)).epsilon(1e-12));
    }

    // fresh bundle: gradient reaches shared trunk only when it is trainable
    Bundle<double> b2(cfg_at(16));
    b2.init(28);
    {
        Graph<double> g;
        auto* l = loss_posterior(b2, g, x, y, Domain::s, LossWeights{});
        g.backward(l);
        const auto& trunk = g.param_nodes().at("shared.D.conv3.w")->grad;
        double mag = 0;
        for (double v : trunk.data) mag += std::abs(v);
        CHECK(mag > 0.0);
    }
    {
        Graph<double> g;
        g.set_trainable_filter(is_posterior_head_cell);  // phase-3 policy
        auto* l = loss_posterior(b2, g, x, y, Domain::s, LossWeights{});
        g.backward(l);
        CHECK_FALSE(g.param_nodes().at("shared.D.conv3.w")->needs_grad);
        const auto& head = g.param_nodes().at("P.head.w")->grad;
        double mag = 0;
        for (double v : head.data) mag += std::abs(v);
        CHECK(mag > 0.0);
    }

    Tensor<double> empty;
    Graph<double> ge;
    CHECK_THROWS_AS(loss_posterior(b2, ge, empty, empty, Domain::r, LossWeights{}), DomainError);
}

TEST_CASE("feature matching: agreement after forcing domain symmetry") {
    Bundle<double> b(cfg_at(16));
    b.init(29);
    // make G_r identical to G_s and D_r's private layers identical to D_s's
    for (const auto& d : b.manifest().layers) {
        if (d.net != "G_r" || d.shared) continue;
        for (auto pick : {&LayerDesc::w, &LayerDesc::b, &LayerDesc::gw, &LayerDesc::gb,
                          &LayerDesc::fw, &LayerDesc::fb, &LayerDesc::pw, &LayerDesc::pb}) {
            const std::string& cell = d.*pick;
            if (cell.empty()) continue;
            std::string src = cell;
            src.replace(0, 3, "G_s");
            b.params().cell(cell).data = b.params().cell(src).data;
        }
    }
    for (const char* leaf : {"conv1.w", "conv1.b", "conv2.w", "conv2.b"})
        b.params().cell(std::string("D_r.") + leaf).data =
            b.params().cell(std::string("D_s.") + leaf).data;

    auto x_s = rand_image<double>(2, 16, 30);
    auto x_r = rand_image<double>(2, 16, 31);
    LossCtx<double> ctx{12, 4, true, nullptr};
    Graph<double> g;
    auto* l = loss_feature_matching(b, g, x_s, x_r, LossWeights{}, ctx);
    CHECK(value(l) == 0.0);
}

TEST_CASE("feature matching: plug-in arithmetic and permutation symmetry") {
    // the combination rule: lambda8 * (mean|a-b| + mean|c-d|)
    Graph<double> g;
    auto* a = g.input(Tensor<double>({1, 1}, 3.0));
    auto* bb = g.input(Tensor<double>({1, 1}, 1.0));
    auto* c = g.input(Tensor<double>({1, 1}, 0.0));
    auto* d = g.input(Tensor<double>({1, 1}, 2.0));
    auto* t = g.add(g.mean_all(g.abs_(g.sub(a, bb))), g.mean_all(g.abs_(g.sub(c, d))));
    const double lambda8 = 1.0;
    CHECK(lambda8 * value(t) == 4.0);

    // jointly permuting both feature maps leaves the term unchanged
    Bundle<double> bnd(cfg_at(16));
    bnd.init(33);
    auto x_s = rand_image<double>(1, 16, 34);
    auto x_r = rand_image<double>(1, 16, 35);
    LossCtx<double> ctx{13, 5, true, nullptr};
    Graph<double> fg;
    auto* zs = lossdetail::sampled_code(bnd, fg, fg.input(x_s), Domain::s, ctx, "zs");
    auto* ss = bnd.decode_depth(fg, zs, Domain::s);
    auto* sr = bnd.decode_depth(fg, zs, Domain::r);
    Tensor<double> pa = bnd.discriminate(fg, ss, Domain::s).phi->val;
    Tensor<double> pb = bnd.discriminate(fg, sr, Domain::r).phi->val;
    auto term = [&](const Tensor<double>& u, const Tensor<double>& v) {
        double s = 0;
        for (int64_t i = 0; i < u.numel(); ++i) s += std::abs(u[i] - v[i]);
        return s / (double)u.numel();
    };
    Tensor<double> pa_rev = pa, pb_rev = pb;
    std::reverse(pa_rev.data.begin(), pa_rev.data.end());
    std::reverse(pb_rev.data.begin(), pb_rev.data.end());
    CHECK(term(pa, pb) == doctest::Approx(term(pa_rev, pb_rev)).epsilon(1e-15));
}

TEST_CASE("total objective composes the standalone terms exactly") {
    Bundle<double> b(cfg_at(16));
    b.init(37);
    Batch<double> batch;
    batch.x_s = rand_image<double>(2, 16, 38);
    batch.y_s = rand_rows<double>(2, 48, 39);
    batch.x_r = rand_image<double>(2, 16, 40);
    batch.x_rl = rand_image<double>(1, 16, 41);
    batch.y_rl = rand_rows<double>(1, 48, 42);
    LossWeights W;
    LossCtx<double> ctx{14, 6, true, nullptr};

    auto standalone = [&](auto&& fn) {
        Graph<double> g;
        return value(fn(g));
    };

    SUBCASE("phase 2 min side") {
        double want = 0;
        want += standalone([&](Graph<double>& g) {
            return loss_vae_depth(b, g, batch.x_s, Domain::s, W, ctx);
        });
        want += standalone([&](Graph<double>& g) {
            return loss_vae_depth(b, g, batch.x_r, Domain::r, W, ctx);
        });
        want += standalone([&](Graph<double>& g) {
            auto* xr = g.input(batch.x_r);
            auto* xt = b.decode_depth(
                g, lossdetail::sampled_code(b, g, xr, Domain::r, ctx, "zr"), Domain::s);
            return loss_gan(b, g, g.input(batch.x_s), xt, Domain::s, GanSide::generator, W);
        });
        want += standalone([&](Graph<double>& g) {
            auto* xs = g.input(batch.x_s);
            auto* xt = b.decode_depth(
                g, lossdetail::sampled_code(b, g, xs, Domain::s, ctx, "zs"), Domain::r);
            return loss_gan(b, g, g.input(batch.x_r), xt, Domain::r, GanSide::generator, W);
        });
        want += standalone(
            [&](Graph<double>& g) { return loss_cycle(b, g, batch.x_s, Domain::s, W, ctx); });
        want += standalone(
            [&](Graph<double>& g) { return loss_cycle(b, g, batch.x_r, Domain::r, W, ctx); });
        want += standalone([&](Graph<double>& g) {
            return loss_map(b, g, batch.x_s, batch.y_s, Domain::s, W, ctx);
        });
        want += standalone([&](Graph<double>& g) {
            return loss_map(b, g, batch.x_rl, batch.y_rl, Domain::r, W, ctx);
        });
        LossWeights Wfm = W;
        Wfm.lambda8 = W.fm_weight_phase2;
        want += standalone([&](Graph<double>& g) {
            return loss_feature_matching(b, g, batch.x_s, batch.x_r, Wfm, ctx);
        });

        Graph<double> g;
        auto* total = total_objective(b, g, batch, W, 2, ObjectiveSide::min_players, ctx);
        CHECK(value(total) == doctest::Approx(want).epsilon(1e-9));
    }

    SUBCASE("phase 2 max side") {
        double want = 0;
        want += standalone([&](Graph<double>& g) {
            auto* xr = g.input(batch.x_r);
            auto* xt = b.decode_depth(
                g, lossdetail::sampled_code(b, g, xr, Domain::r, ctx, "zr"), Domain::s);
            return loss_gan(b, g, g.input(batch.x_s), xt, Domain::s, GanSide::discriminator, W);
        });
        want += standalone([&](Graph<double>& g) {
            auto* xs = g.input(batch.x_s);
            auto* xt = b.decode_depth(
                g, lossdetail::sampled_code(b, g, xs, Domain::s, ctx, "zs"), Domain::r);
            return loss_gan(b, g, g.input(batch.x_r), xt, Domain::r, GanSide::discriminator, W);
        });
        auto mapped = [&](const Tensor<double>& y, Domain d, const std::string& tag,
                          Graph<double>& g) {
            auto [mu_y, lv_y] = lossdetail::pose_targets(b, y);
            auto eps = ctx.noise(tag, mu_y.shape);
            Tensor<double> zy(mu_y.shape);
            for (int64_t i = 0; i < zy.numel(); ++i)
                zy[i] = mu_y[i] + std::exp(0.5 * lv_y[i]) * eps[i];
            return b.decode_depth(g, b.map_latent(g, g.input(std::move(zy))), d);
        };
        want += standalone([&](Graph<double>& g) {
            return loss_gan_fake_only(b, g, mapped(batch.y_s, Domain::s, "map_zy_s", g), Domain::s,
                                      W);
        });
        want += standalone([&](Graph<double>& g) {
            return loss_gan_fake_only(b, g, mapped(batch.y_rl, Domain::r, "map_zy_r", g),
                                      Domain::r, W);
        });

        Graph<double> g;
        auto* total = total_objective(b, g, batch, W, 2, ObjectiveSide::max_players, ctx);
        CHECK(value(total) == doctest::Approx(want).epsilon(1e-9));
    }

    SUBCASE("phase 3 composition") {
        double want = 0;
        want += standalone([&](Graph<double>& g) {
            return loss_posterior(b, g, batch.x_s, batch.y_s, Domain::s, W);
        });
        want += standalone([&](Graph<double>& g) {
            return loss_posterior(b, g, batch.x_rl, batch.y_rl, Domain::r, W);
        });
        want += standalone([&](Graph<double>& g) {
            return loss_feature_matching(b, g, batch.x_s, batch.x_r, W, ctx);
        });
        Graph<double> g;
        auto* total = total_objective(b, g, batch, W, 3, ObjectiveSide::min_players, ctx);
        CHECK(value(total) == doctest::Approx(want).epsilon(1e-9));

        // no labels: exactly POS_s + FM
        Batch<double> nolab = batch;
        nolab.x_rl = Tensor<double>();
        nolab.y_rl = Tensor<double>();
        double want2 = 0;
        want2 += standalone([&](Graph<double>& g2) {
            return loss_posterior(b, g2, batch.x_s, batch.y_s, Domain::s, W);
        });
        want2 += standalone([&](Graph<double>& g2) {
            return loss_feature_matching(b, g2, batch.x_s, batch.x_r, W, ctx);
        });
        Graph<double> g2;
        auto* t2 = total_objective(b, g2, nolab, W, 3, ObjectiveSide::min_players, ctx);
        CHECK(value(t2) == doctest::Approx(want2).epsilon(1e-9));

        // max side of phase 3 has no players
        Graph<double> g3;
        auto* t3 = total_objective(b, g3, batch, W, 3, ObjectiveSide::max_players, ctx);
        CHECK(value(t3) == 0.0);
    }

    SUBCASE("zero weights and bad phase") {
        LossWeights zero = only(&LossWeights::lambda0, 0.0);
        Graph<double> g;
        auto* t = total_objective(b, g, batch, zero, 2, ObjectiveSide::min_players, ctx);
        CHECK(value(t) == 0.0);
        Graph<double> g2;
        CHECK_THROWS_AS(total_objective(b, g2, batch, W, 1, ObjectiveSide::min_players, ctx),
                        ConfigError);
    }

    SUBCASE("noise tags fire per label availability") {
        std::map<std::string, int> counts;
        LossCtx<double> cctx{14, 6, true, &counts};
        Graph<double> g;
        total_objective(b, g, batch, W, 2, ObjectiveSide::min_players, cctx);
        CHECK(counts["map_zy_s"] == 1);
        CHECK(counts["map_zy_r"] == 1);

        counts.clear();
        Batch<double> nolab = batch;
        nolab.x_rl = Tensor<double>();
        nolab.y_rl = Tensor<double>();
        Graph<double> g2;
        total_objective(b, g2, nolab, W, 2, ObjectiveSide::min_players, cctx);
        CHECK(counts["map_zy_s"] == 1);
        CHECK(counts["map_zy_r"] == 0);
    }
}

TEST_CASE("every term is nonnegative on a random bundle") {
    Bundle<double> b(cfg_at(16));
    b.init(43);
    auto x_s = rand_image<double>(2, 16, 44);
    auto x_r = rand_image<double>(2, 16, 45);
    auto y = rand_rows<double>(2, 48, 46);
    LossWeights W;
    LossCtx<double> ctx{15, 7, true, nullptr};
    Graph<double> g;
    CHECK(value(loss_vae_pose(b, g, y, W, ctx)) >= 0.0);
    CHECK(value(loss_vae_depth(b, g, x_s, Domain::s, W, ctx)) >= 0.0);
    CHECK(value(loss_cycle(b, g, x_r, Domain::r, W, ctx)) >= 0.0);
    CHECK(value(loss_map(b, g, x_s, y, Domain::s, W, ctx)) >= 0.0);
    CHECK(value(loss_posterior(b, g, x_s, y, Domain::s, W)) >= 0.0);
    CHECK(value(loss_feature_matching(b, g, x_s, x_r, W, ctx)) >= 0.0);
    CHECK(value(loss_gan(b, g, g.input(x_s), g.input(x_r), Domain::s, GanSide::discriminator,
                         W)) >= 0.0);
}

TEST_CASE("zero-weight ablation removes a term's gradient exactly") {
    Bundle<double> b(cfg_at(8));
    b.init(47);
    auto x = rand_image<double>(1, 8, 48);
    auto y = rand_rows<double>(1, 48, 49);
    LossCtx<double> ctx{16, 8, true, nullptr};

    auto grad_of = [&](const LossWeights& W, const std::string& cell) {
        Graph<double> g;
        auto* l = loss_map(b, g, x, y, Domain::s, W, ctx);
        g.backward(l);
        return g.param_nodes().at(cell)->grad;
    };

    LossWeights full;  // defaults
    LossWeights w5 = only(&LossWeights::lambda5, full.lambda5);
    LossWeights rest = full;
    rest.lambda5 = 0.0;

    for (const char* cell : {"M.up1.w", "shared.dec_res1.gw"}) {
        auto gf = grad_of(full, cell), g5 = grad_of(w5, cell), gr = grad_of(rest, cell);
        REQUIRE(gf.numel() == g5.numel());
        double worst = 0, scale = 1.0;
        for (int64_t i = 0; i < gf.numel(); ++i) {
            worst = std::max(worst, std::abs(gf[i] - (g5[i] + gr[i])));
            scale = std::max(scale, std::abs(gf[i]));
        }
        CHECK(worst < 1e-10 * scale);
    }

    // with every weight zeroed the mapping gradient vanishes identically
    auto gz = grad_of(only(&LossWeights::lambda0, 0.0), "M.up1.w");
    for (double v : gz.data) REQUIRE(v == 0.0);
}

TEST_CASE("generator-side GAN gradient matches finite differences") {
    Bundle<double> b(cfg_at(8));
    b.init(51);
    auto x_r = rand_image<double>(1, 8, 52);
    LossWeights W;
    LossCtx<double> ctx{17, 9, true, nullptr};

    auto rep = grad_check(
        b.params(),
        [&](Graph<double>& g) {
            auto* xr = g.input(x_r);
            auto* xt = b.decode_depth(
                g, lossdetail::sampled_code(b, g, xr, Domain::r, ctx, "zr"), Domain::s);
            return loss_gan(b, g, g.input(rand_image<double>(1, 8, 53)), xt, Domain::s,
                            GanSide::generator, W);
        },
        54, 5, 1e-5, 1e-6,
        [](const std::string& n) {
            return n == "G_s.up2.w" || n == "E_r.conv1.w" || n == "shared.dec_res1.fw";
        });
    CHECK(rep.checked > 0);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("map loss gradient on M parameters matches finite differences") {
    Bundle<double> b(cfg_at(8));
    b.init(55);
    auto x = rand_image<double>(1, 8, 56);
    auto y = rand_rows<double>(1, 48, 57);
    LossWeights W;
    LossCtx<double> ctx{18, 10, true, nullptr};

    auto rep = grad_check(
        b.params(),
        [&](Graph<double>& g) { return loss_map(b, g, x, y, Domain::s, W, ctx); }, 58, 6, 1e-5,
        1e-6, [](const std::string& n) { return name_starts_with(n, "M."); });
    CHECK(rep.checked > 0);
    CHECK(rep.max_rel_err < 1e-3);
}
