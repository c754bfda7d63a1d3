#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "lsps/core/rng.hpp"
#include "lsps/models/bundle.hpp"

namespace lsps {

struct LossWeights {
    double lambda0 = 0.1;    // pose KL
    double lambda1 = 100.0;  // pose reconstruction (L2)
    double lambda2 = 0.1;    // depth KL
    double lambda3 = 100.0;  // depth reconstruction (L1)
    double lambda4 = 10.0;   // adversarial
    double lambda5 = 100.0;  // latent mapping
    double lambda6 = 10000.0;  // mapped-image reconstruction
    double lambda7 = 10.0;   // posterior regression
    double lambda8 = 1.0;    // feature matching
    double fm_weight_phase2 = 0.0001;  // replaces lambda8 while the depth model trains

    void validate() const {
        for (double v : {lambda0, lambda1, lambda2, lambda3, lambda4, lambda5, lambda6, lambda7,
                         lambda8, fm_weight_phase2})
            if (!std::isfinite(v) || v < 0) throw ConfigError("loss weights must be finite and >= 0");
    }
};

enum class GanSide { discriminator, generator };
enum class ObjectiveSide { min_players, max_players };

// Shared noise context. Reparameterization draws are keyed by a tag naming the
// encoder application site plus the iteration, never by call order, so a loss
// computed standalone sees exactly the same draws as the same term inside
// total_objective. Tags in use:
//   zy        pose VAE latent          (E_y on y_s)
//   zs, zr    depth VAE latents        (E_s on x_s / E_r on x_r)
//   cc_zsr    cycle re-encoding        (E_r on x_s->r)
//   cc_zrs    cycle re-encoding        (E_s on x_r->s)
//   map_zy_s, map_zy_r   pose latents fed to M per domain
template <typename T>
struct LossCtx {
    uint64_t seed = 0;
    uint64_t iter = 0;
    bool sample_noise = true;  // false → zero noise, mean path
    std::map<std::string, int>* call_counts = nullptr;

    Tensor<T> noise(const std::string& tag, const std::vector<int>& shape) const {
        if (call_counts) ++(*call_counts)[tag];
        Tensor<T> t(shape, T(0));
        if (sample_noise) {
            Rng rng = stream(seed, "loss/" + tag, iter);
            for (auto& v : t.data) v = (T)rng.normal();
        }
        return t;
    }
};

template <typename T>
struct Batch {
    Tensor<T> x_s, y_s;    // paired synthetic
    Tensor<T> x_r;         // unlabeled real
    Tensor<T> x_rl, y_rl;  // labeled real pairs (empty when none)
    bool has_labeled() const { return x_rl.numel() > 0; }
};

namespace lossdetail {

template <typename T>
Node<T>* check_finite(Node<T>* n, const char* where) {
    if (!std::isfinite((double)n->val[0]))
        throw NumericError(std::string(where) + ": non-finite loss value");
    return n;
}

template <typename T>
Node<T>* mae(Graph<T>& g, Node<T>* a, Node<T>* b) {
    return g.mean_all(g.abs_(g.sub(a, b)));
}

template <typename T>
Node<T>* mse(Graph<T>& g, Node<T>* a, Node<T>* b) {
    return g.mean_all(g.square(g.sub(a, b)));
}

// Batch mean of per-sample 2-norms over all trailing dims.
template <typename T>
Node<T>* mean_l2(Graph<T>& g, Node<T>* a, Node<T>* b) {
    Node<T>* d = g.square(g.sub(a, b));
    const int N = d->val.dim(0);
    d = g.reshape(d, {N, (int)(d->val.numel() / N)});
    return g.mean_all(g.sqrt_(g.row_sum(d)));
}

// Batch mean of 0.5 * sum(mu^2) over latent elements.
template <typename T>
Node<T>* half_sq_norm(Graph<T>& g, Node<T>* mu) {
    Node<T>* s = g.square(mu);
    const int N = s->val.dim(0);
    s = g.reshape(s, {N, (int)(s->val.numel() / N)});
    return g.scale(g.mean_all(g.row_sum(s)), T(0.5));
}

// Encoder mean plus unit-variance reparameterization noise for the given tag.
template <typename T>
Node<T>* sampled_code(Bundle<T>& B, Graph<T>& g, Node<T>* x, Domain d, const LossCtx<T>& ctx,
                      const std::string& tag) {
    Node<T>* mu = B.encode_depth(g, x, d);
    return g.add(mu, g.input(ctx.noise(tag, mu->val.shape)));
}

// Mean patch probability D(x) in (0,1), clamped for the logs.
template <typename T>
Node<T>* mean_patch_prob(Bundle<T>& B, Graph<T>& g, Node<T>* x, Domain d) {
    DiscOut<T> out = B.discriminate(g, x, d);
    Node<T>* p = g.spatial_mean(g.sigmoid_(out.patch));  // (N,1)
    return g.clamp(p, (T)1e-7, (T)(1.0 - 1e-7));
}

template <typename T>
Node<T>* neg_mean_log(Graph<T>& g, Node<T>* p) {
    return g.scale(g.mean_all(g.log_(p)), T(-1));
}

template <typename T>
Node<T>* one_minus(Graph<T>& g, Node<T>* p) {
    return g.add_scalar(g.scale(p, T(-1)), T(1));
}

// Pose posterior parameters as plain tensors: evaluated off-graph so no
// gradient ever reaches the pose networks from losses that consume them.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> pose_targets(Bundle<T>& B, const Tensor<T>& y) {
    Graph<T> tg;
    tg.set_trainable_filter([](const std::string&) { return false; });
    PoseEnc<T> e = B.encode_pose(tg, tg.input(y));
    return {e.mu->val, e.logvar->val};
}

template <typename T>
void require_pairs(const Tensor<T>& x, const Tensor<T>& y, Domain d, const char* where) {
    if (x.numel() == 0 || y.numel() == 0)
        throw DomainError(std::string(where) + ": empty " +
                          (d == Domain::r ? "labeled real" : "synthetic") + " pair set");
    if (x.dim(0) != y.dim(0)) throw ShapeError(std::string(where) + ": pair count mismatch");
}

}  // namespace lossdetail

// Eq. 1: lambda0 * KL(N(mu,sigma^2) || N(0,I)) + lambda1 * MSE(y, G_y(z_y)).
template <typename T>
Node<T>* loss_vae_pose(Bundle<T>& B, Graph<T>& g, const Tensor<T>& y, const LossWeights& W,
                       const LossCtx<T>& ctx) {
    using namespace lossdetail;
    Node<T>* yin = g.input(y);
    PoseEnc<T> e = B.encode_pose(g, yin);
    // 0.5 * sum_d (mu^2 + exp(lv) - 1 - lv), batch mean
    Node<T>* kl = g.sub(g.add_scalar(g.add(g.square(e.mu), g.exp_(e.logvar)), T(-1)), e.logvar);
    kl = g.scale(g.mean_all(g.row_sum(kl)), T(0.5));
    Node<T>* std_ = g.exp_(g.scale(e.logvar, T(0.5)));
    Node<T>* z = g.add(e.mu, g.mul(std_, g.input(ctx.noise("zy", e.mu->val.shape))));
    Node<T>* rec = mse(g, B.decode_pose(g, z), yin);
    Node<T>* out = g.add(g.scale(kl, (T)W.lambda0), g.scale(rec, (T)W.lambda1));
    return check_finite(out, "loss_vae_pose");
}

// Eq. 3: lambda2 * 0.5*sum(mu^2) + lambda3 * MAE(x, G(E(x)+eps)).
template <typename T>
Node<T>* loss_vae_depth(Bundle<T>& B, Graph<T>& g, const Tensor<T>& x, Domain d,
                        const LossWeights& W, const LossCtx<T>& ctx) {
    using namespace lossdetail;
    Node<T>* xin = g.input(x);
    Node<T>* mu = B.encode_depth(g, xin, d);
    Node<T>* kl = half_sq_norm(g, mu);
    Node<T>* z = g.add(mu, g.input(ctx.noise(d == Domain::s ? "zs" : "zr", mu->val.shape)));
    Node<T>* rec = mae(g, B.decode_depth(g, z, d), xin);
    Node<T>* out = g.add(g.scale(kl, (T)W.lambda2), g.scale(rec, (T)W.lambda3));
    return check_finite(out, "loss_vae_depth");
}

// Eq. 4 on domain d's discriminator. x_translated must already be on-graph
// (cross-domain translation or G(M(z_y))); the discriminator side anchors on
// native images, the generator side is the non-saturating surrogate.
template <typename T>
Node<T>* loss_gan(Bundle<T>& B, Graph<T>& g, Node<T>* x_native, Node<T>* x_translated, Domain d,
                  GanSide side, const LossWeights& W) {
    using namespace lossdetail;
    Node<T>* out;
    if (side == GanSide::discriminator) {
        Node<T>* p_nat = mean_patch_prob(B, g, x_native, d);
        Node<T>* p_tr = mean_patch_prob(B, g, x_translated, d);
        out = g.add(neg_mean_log(g, p_nat), neg_mean_log(g, one_minus(g, p_tr)));
    } else {
        out = neg_mean_log(g, mean_patch_prob(B, g, x_translated, d));
    }
    return check_finite(g.scale(out, (T)W.lambda4), "loss_gan");
}

// Discriminator update term for fakes that have no fresh native anchor
// (mapped images in the phase-2 max step): lambda4 * -log(1 - D(x)).
template <typename T>
Node<T>* loss_gan_fake_only(Bundle<T>& B, Graph<T>& g, Node<T>* x_translated, Domain d,
                            const LossWeights& W) {
    using namespace lossdetail;
    Node<T>* p = mean_patch_prob(B, g, x_translated, d);
    return check_finite(g.scale(neg_mean_log(g, one_minus(g, p)), (T)W.lambda4),
                        "loss_gan_fake_only");
}

// Eq. 5: translate d -> other, re-encode, KL on the re-encoded mean plus MAE
// of the twice-translated image against the original.
template <typename T>
Node<T>* loss_cycle(Bundle<T>& B, Graph<T>& g, const Tensor<T>& x, Domain d,
                    const LossWeights& W, const LossCtx<T>& ctx) {
    using namespace lossdetail;
    const Domain o = d == Domain::s ? Domain::r : Domain::s;
    Node<T>* xin = g.input(x);
    Node<T>* z1 = sampled_code(B, g, xin, d, ctx, d == Domain::s ? "zs" : "zr");
    Node<T>* xt = B.decode_depth(g, z1, o);
    Node<T>* mu2 = B.encode_depth(g, xt, o);
    Node<T>* kl = half_sq_norm(g, mu2);
    Node<T>* z2 =
        g.add(mu2, g.input(ctx.noise(d == Domain::s ? "cc_zsr" : "cc_zrs", mu2->val.shape)));
    Node<T>* rec = mae(g, B.decode_depth(g, z2, d), xin);
    Node<T>* out = g.add(g.scale(kl, (T)W.lambda2), g.scale(rec, (T)W.lambda3));
    return check_finite(out, "loss_cycle");
}

// Eq. 6: lambda5 * mean ||M(z_y) - z_x||_2 + lambda6 * MAE(x, G(M(z_y)))
// + lambda4 * generator GAN on G(M(z_y)). z_y is a detached reparameterized
// sample of the pose posterior, z_x the depth-encoder mean.
template <typename T>
Node<T>* loss_map(Bundle<T>& B, Graph<T>& g, const Tensor<T>& x, const Tensor<T>& y, Domain d,
                  const LossWeights& W, const LossCtx<T>& ctx) {
    using namespace lossdetail;
    require_pairs(x, y, d, "loss_map");
    auto [mu_y, lv_y] = pose_targets(B, y);
    Tensor<T> eps = ctx.noise(d == Domain::s ? "map_zy_s" : "map_zy_r", mu_y.shape);
    Tensor<T> zy(mu_y.shape);
    for (int64_t i = 0; i < zy.numel(); ++i)
        zy[i] = mu_y[i] + std::exp(T(0.5) * lv_y[i]) * eps[i];

    Node<T>* xin = g.input(x);
    Node<T>* zm = B.map_latent(g, g.input(std::move(zy)));
    Node<T>* zx = B.encode_depth(g, xin, d);
    Node<T>* t1 = g.scale(mean_l2(g, zm, zx), (T)W.lambda5);
    Node<T>* xm = B.decode_depth(g, zm, d);
    Node<T>* t2 = g.scale(mae(g, xm, xin), (T)W.lambda6);
    Node<T>* t3 = g.scale(neg_mean_log(g, mean_patch_prob(B, g, xm, d)), (T)W.lambda4);
    return check_finite(g.add(g.add(t1, t2), t3), "loss_map");
}

// Eq. 7: lambda7 * mean ||P(x) - mu_y||_2, target detached.
template <typename T>
Node<T>* loss_posterior(Bundle<T>& B, Graph<T>& g, const Tensor<T>& x, const Tensor<T>& y,
                        Domain d, const LossWeights& W) {
    using namespace lossdetail;
    require_pairs(x, y, d, "loss_posterior");
    auto [mu_y, lv_y] = pose_targets(B, y);
    (void)lv_y;
    Node<T>* zhat = B.posterior(g, g.input(x));
    Node<T>* out = g.scale(mean_l2(g, zhat, g.input(mu_y)), (T)W.lambda7);
    return check_finite(out, "loss_posterior");
}

// Eq. 9: lambda8 * ( mean|phi_s(x_s->s) - phi_r(x_s->r)|
//                  + mean|phi_s(x_r->s) - phi_r(x_r->r)| ).
template <typename T>
Node<T>* loss_feature_matching(Bundle<T>& B, Graph<T>& g, const Tensor<T>& x_s,
                               const Tensor<T>& x_r, const LossWeights& W,
                               const LossCtx<T>& ctx) {
    using namespace lossdetail;
    Node<T>* zs = sampled_code(B, g, g.input(x_s), Domain::s, ctx, "zs");
    Node<T>* zr = sampled_code(B, g, g.input(x_r), Domain::r, ctx, "zr");
    Node<T>* ss = B.decode_depth(g, zs, Domain::s);
    Node<T>* sr = B.decode_depth(g, zs, Domain::r);
    Node<T>* rs = B.decode_depth(g, zr, Domain::s);
    Node<T>* rr = B.decode_depth(g, zr, Domain::r);
    Node<T>* t1 = g.mean_all(g.abs_(
        g.sub(B.discriminate(g, ss, Domain::s).phi, B.discriminate(g, sr, Domain::r).phi)));
    Node<T>* t2 = g.mean_all(g.abs_(
        g.sub(B.discriminate(g, rs, Domain::s).phi, B.discriminate(g, rr, Domain::r).phi)));
    return check_finite(g.scale(g.add(t1, t2), (T)W.lambda8), "loss_feature_matching");
}

// Phase-2/3 objectives. The value is the plain sum of the standalone terms
// above (same noise tags, so it matches them exactly); min side carries the
// generator-facing terms, max side the discriminator updates.
template <typename T>
Node<T>* total_objective(Bundle<T>& B, Graph<T>& g, const Batch<T>& batch, const LossWeights& W,
                         int phase, ObjectiveSide side, const LossCtx<T>& ctx) {
    using namespace lossdetail;
    if (phase != 2 && phase != 3) throw ConfigError("total_objective: phase must be 2 or 3");
    Node<T>* total = g.scalar_input(T(0));
    auto acc = [&](Node<T>* t) { total = g.add(total, t); };

    if (phase == 2) {
        // Cross-domain translations, shared with the standalone losses by tag.
        Node<T>* xs = g.input(batch.x_s);
        Node<T>* xr = g.input(batch.x_r);
        Node<T>* xt_sr = B.decode_depth(g, sampled_code(B, g, xs, Domain::s, ctx, "zs"), Domain::r);
        Node<T>* xt_rs = B.decode_depth(g, sampled_code(B, g, xr, Domain::r, ctx, "zr"), Domain::s);
        if (side == ObjectiveSide::min_players) {
            acc(loss_vae_depth(B, g, batch.x_s, Domain::s, W, ctx));
            acc(loss_vae_depth(B, g, batch.x_r, Domain::r, W, ctx));
            acc(loss_gan(B, g, xs, xt_rs, Domain::s, GanSide::generator, W));
            acc(loss_gan(B, g, xr, xt_sr, Domain::r, GanSide::generator, W));
            acc(loss_cycle(B, g, batch.x_s, Domain::s, W, ctx));
            acc(loss_cycle(B, g, batch.x_r, Domain::r, W, ctx));
            acc(loss_map(B, g, batch.x_s, batch.y_s, Domain::s, W, ctx));
            if (batch.has_labeled()) acc(loss_map(B, g, batch.x_rl, batch.y_rl, Domain::r, W, ctx));
            LossWeights Wfm = W;
            Wfm.lambda8 = W.fm_weight_phase2;
            acc(loss_feature_matching(B, g, batch.x_s, batch.x_r, Wfm, ctx));
        } else {
            acc(loss_gan(B, g, xs, xt_rs, Domain::s, GanSide::discriminator, W));
            acc(loss_gan(B, g, xr, xt_sr, Domain::r, GanSide::discriminator, W));
            // Mapped fakes also train the discriminators; their native anchors
            // are already counted once above.
            auto mapped = [&](const Tensor<T>& y, Domain d, const std::string& tag) {
                auto [mu_y, lv_y] = pose_targets(B, y);
                Tensor<T> eps = ctx.noise(tag, mu_y.shape);
                Tensor<T> zy(mu_y.shape);
                for (int64_t i = 0; i < zy.numel(); ++i)
                    zy[i] = mu_y[i] + std::exp(T(0.5) * lv_y[i]) * eps[i];
                return B.decode_depth(g, B.map_latent(g, g.input(std::move(zy))), d);
            };
            acc(loss_gan_fake_only(B, g, mapped(batch.y_s, Domain::s, "map_zy_s"), Domain::s, W));
            if (batch.has_labeled())
                acc(loss_gan_fake_only(B, g, mapped(batch.y_rl, Domain::r, "map_zy_r"), Domain::r,
                                       W));
        }
    } else {  // phase 3: posterior regression plus full-weight feature matching
        if (side == ObjectiveSide::min_players) {
            acc(loss_posterior(B, g, batch.x_s, batch.y_s, Domain::s, W));
            if (batch.has_labeled())
                acc(loss_posterior(B, g, batch.x_rl, batch.y_rl, Domain::r, W));
            acc(loss_feature_matching(B, g, batch.x_s, batch.x_r, W, ctx));
        }
    }
    return check_finite(total, "total_objective");
}

}  // namespace lsps
