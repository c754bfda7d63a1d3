#include "lsps/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "lsps/kernels/image.hpp"

namespace lsps {

void TrainConfig::validate() const {
    weights.validate();
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw ConfigError("adam betas must lie in [0,1)");
    if (!(adam_epsilon > 0)) throw ConfigError("adam_epsilon must be positive");
    if (phase1_iterations < 0 || phase2_iterations < 0 || phase3_iterations < 0)
        throw ConfigError("phase iteration counts must be non-negative");
    if (batch_p1 < 1 || batch_p2 < 1 || batch_p3 < 1)
        throw ConfigError("batch sizes must be at least 1");
    if (label_fraction_m > 100) throw ConfigError("label_fraction_m must be <= 100");
    if (log_every < 1) throw ConfigError("log_every must be at least 1");
}

long long TrainConfig::phase_iterations(int phase) const {
    if (phase == 1) return phase1_iterations;
    if (phase == 2) return phase2_iterations;
    if (phase == 3) return phase3_iterations;
    throw ConfigError("phase must be 1, 2 or 3");
}

int TrainConfig::batch_size(int phase) const {
    if (phase == 1) return batch_p1;
    if (phase == 2) return batch_p2;
    if (phase == 3) return batch_p3;
    throw ConfigError("phase must be 1, 2 or 3");
}

ProgressCsv::ProgressCsv(const std::string& path) : path_(path) {
    std::ifstream probe(path_);
    if (probe.good()) return;
    std::ofstream f(path_);
    if (!f) throw IoError("cannot open progress log " + path_);
    f << "phase,iteration,wall_s,term,value\n";
}

void ProgressCsv::operator()(const ProgressRow& row) {
    std::ofstream f(path_, std::ios::app);
    if (!f) throw IoError("cannot append to progress log " + path_);
    for (const auto& [term, value] : row.terms)
        f << row.phase << ',' << row.iteration << ',' << row.wall_s << ',' << term << ','
          << value << '\n';
}

namespace {

std::vector<int> draw_indices(uint64_t seed, const std::string& tag, long long iter, uint64_t sub,
                              int n, int count) {
    if (n < 1) throw DomainError("cannot sample a batch from an empty split");
    Rng rng = stream(seed, tag, (uint64_t)iter, sub);
    std::vector<int> idx(count);
    for (auto& i : idx) i = (int)rng.uniform_int((uint64_t)n);
    return idx;
}

Tensor<float> gather_rows(const Tensor<float>& src, const std::vector<int>& idx) {
    std::vector<int> shape = src.shape;
    shape[0] = (int)idx.size();
    Tensor<float> out(shape);
    const int64_t row = src.numel() / src.dim(0);
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy_n(src.ptr() + (int64_t)idx[i] * row, row, out.ptr() + (int64_t)i * row);
    return out;
}

// In-place rotation/translation of normalized depth rows and matching pose
// vectors (same conventions as the dataset-level augmentation).
void augment_rows(Tensor<float>& x, Tensor<float>* y, Rng& rng, int res, double cube_size) {
    const int n = x.dim(0);
    const double mm_per_px = cube_size / res;
    std::vector<float> tmp((size_t)res * res);
    for (int i = 0; i < n; ++i) {
        const double theta = rng.uniform(-M_PI, M_PI);
        const double tx = rng.uniform(-10.0, 10.0), ty = rng.uniform(-10.0, 10.0);
        const double tz = rng.uniform(-10.0, 10.0);
        float* img = x.ptr() + (int64_t)i * res * res;
        kern::rotate_shift(img, res, theta, tx / mm_per_px, ty / mm_per_px, tmp.data(), 1.0);
        const float dz = (float)(2.0 * tz / cube_size);
        for (size_t p = 0; p < tmp.size(); ++p)
            img[p] = tmp[p] < 1.0f ? std::clamp(tmp[p] + dz, -1.0f, 1.0f) : tmp[p];
        if (!y) continue;
        const double c = std::cos(theta), s = std::sin(theta);
        const double tscale = 2.0 / cube_size;
        float* pv = y->ptr() + (int64_t)i * y->dim(1);
        for (int j = 0; j < y->dim(1) / 3; ++j) {
            const double px = pv[3 * j], py = pv[3 * j + 1];
            pv[3 * j] = (float)(c * px - s * py + tx * tscale);
            pv[3 * j + 1] = (float)(s * px + c * py + ty * tscale);
            pv[3 * j + 2] = (float)(pv[3 * j + 2] + tz * tscale);
        }
    }
}

double frozen_value(const std::function<Node<float>*(Graph<float>&)>& build) {
    Graph<float> g;
    g.set_trainable_filter([](const std::string&) { return false; });
    return (double)build(g)->val[0];
}

}  // namespace

Trainer::Trainer(Bundle<float>& bundle, const DatasetArchive& archive, TrainConfig cfg)
    : bundle_(bundle), archive_(archive), cfg_(std::move(cfg)) {
    cfg_.validate();
    mask_ = cfg_.label_fraction_m < 0 ? archive_.label_mask()
                                      : archive_.label_view(cfg_.label_fraction_m);
    auto pair = archive_.labeled_real(mask_);
    labeled_x_ = std::move(pair.first);
    labeled_y_ = std::move(pair.second);
    stats_.visible_labels = labeled_x_.numel() > 0 ? labeled_x_.dim(0) : 0;
}

void Trainer::set_divergence_checkpoint(const std::string& path, uint64_t digest) {
    diverge_path_ = path;
    diverge_digest_ = digest;
}

void Trainer::diverge(int phase, long long it, const std::string& why) {
    if (!diverge_path_.empty()) {
        TrainState st = state_;
        st.phase = phase;
        st.iteration = it;
        save_checkpoint(bundle_.params(), st, {diverge_digest_, phase, it, cfg_.seed},
                        diverge_path_);
    }
    throw DivergenceError(phase, it, "training diverged at phase " + std::to_string(phase) +
                                         " iteration " + std::to_string(it) + ": " + why);
}

void adam_update(AdamGroup& ag, Graph<float>& g, ParamStore<float>& ps, double lr, double beta1,
                 double beta2, double eps) {
    for (const auto& [name, node] : g.param_nodes())
        if (node->needs_grad && !node->grad.all_finite())
            throw NumericError("non-finite gradient in " + name);
    ++ag.t;
    const double corr1 = 1.0 - std::pow(beta1, (double)ag.t);
    const double corr2 = 1.0 - std::pow(beta2, (double)ag.t);
    for (const auto& [name, node] : g.param_nodes()) {
        if (!node->needs_grad) continue;
        Tensor<float>& w = ps.cell(name);
        const Tensor<float>& gr = node->grad;
        auto& m = ag.m.try_emplace(name, Tensor<float>(gr.shape, 0.0f)).first->second;
        auto& v = ag.v.try_emplace(name, Tensor<float>(gr.shape, 0.0f)).first->second;
        for (int64_t i = 0; i < gr.numel(); ++i) {
            const double gi = gr[i];
            m[i] = (float)(beta1 * m[i] + (1.0 - beta1) * gi);
            v[i] = (float)(beta2 * v[i] + (1.0 - beta2) * gi * gi);
            w[i] -= (float)(lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps));
        }
    }
}

void Trainer::adam_step(const std::string& group, Graph<float>& g) {
    adam_update(state_.adam[group], g, bundle_.params(), cfg_.learning_rate, cfg_.adam_beta1,
                cfg_.adam_beta2, cfg_.adam_epsilon);
}

void Trainer::log_row(int phase, long long it, double wall,
                      std::vector<std::pair<std::string, double>> terms) {
    if (!progress_) return;
    ProgressRow row;
    row.phase = phase;
    row.iteration = it;
    row.wall_s = wall;
    row.terms = std::move(terms);
    progress_(row);
}

void Trainer::phase1_iter(long long it) {
    const auto& poses = archive_.synthetic_poses();
    auto idx = draw_indices(cfg_.seed, "batch/p1", it, 0, poses.dim(0), cfg_.batch_p1);
    Tensor<float> y = gather_rows(poses, idx);
    LossCtx<float> ctx{subseed(cfg_.seed, "phase1"), (uint64_t)it, true, &counts_};
    Graph<float> g;
    g.set_trainable_filter(is_pose_cell);
    Node<float>* loss = loss_vae_pose(bundle_, g, y, cfg_.weights, ctx);
    const double total = loss->val[0];
    g.backward(loss);
    adam_step("main", g);
    if (it % cfg_.log_every == 0 || it + 1 == cfg_.phase1_iterations) {
        LossWeights wk = cfg_.weights, wr = cfg_.weights;
        wk.lambda1 = 0;
        wr.lambda0 = 0;
        const double kl = frozen_value(
            [&](Graph<float>& f) { return loss_vae_pose(bundle_, f, y, wk, ctx); });
        const double rec = frozen_value(
            [&](Graph<float>& f) { return loss_vae_pose(bundle_, f, y, wr, ctx); });
        log_row(1, it, wall_(), {{"total", total}, {"kl", kl}, {"recon", rec}});
    }
}

Batch<float> Trainer::make_batch(const char* s_tag, const char* r_tag, const char* rl_tag,
                                 long long it, uint64_t sub, int bs, bool want_labeled) {
    Batch<float> b;
    auto is = draw_indices(cfg_.seed, s_tag, it, sub, archive_.synthetic_images().dim(0), bs);
    b.x_s = gather_rows(archive_.synthetic_images(), is);
    b.y_s = gather_rows(archive_.synthetic_poses(), is);
    b.x_r = gather_rows(archive_.real_images(),
                        draw_indices(cfg_.seed, r_tag, it, sub, archive_.real_images().dim(0), bs));
    if (want_labeled && labeled_x_.numel() > 0) {
        auto il = draw_indices(cfg_.seed, rl_tag, it, sub, labeled_x_.dim(0), bs);
        b.x_rl = gather_rows(labeled_x_, il);
        b.y_rl = gather_rows(labeled_y_, il);
    }
    if (cfg_.augment) {
        const int res = bundle_.cfg().image_resolution;
        const double cs = archive_.manifest().cube_size_mm;
        Rng rs = stream(cfg_.seed, std::string("aug/") + s_tag, (uint64_t)it, sub);
        augment_rows(b.x_s, &b.y_s, rs, res, cs);
        Rng rr = stream(cfg_.seed, std::string("aug/") + r_tag, (uint64_t)it, sub);
        augment_rows(b.x_r, nullptr, rr, res, cs);
        if (b.has_labeled()) {
            Rng rl = stream(cfg_.seed, std::string("aug/") + rl_tag, (uint64_t)it, sub);
            augment_rows(b.x_rl, &b.y_rl, rl, res, cs);
        }
    }
    return b;
}

void Trainer::phase2_iter(long long it) {
    // Discriminator step, then generator step, on independent batches.
    Batch<float> bd = make_batch("batch/p2s", "batch/p2r", "batch/p2rl", it, 0, cfg_.batch_p2, true);
    LossCtx<float> ctx_d{subseed(cfg_.seed, "phase2"), (uint64_t)(2 * it), true, &counts_};
    double total_d;
    {
        Graph<float> g;
        g.set_trainable_filter(is_disc_cell);
        Node<float>* L = total_objective(bundle_, g, bd, cfg_.weights, 2,
                                         ObjectiveSide::max_players, ctx_d);
        total_d = L->val[0];
        g.backward(L);
        adam_step("d", g);
        ++stats_.d_steps;
    }

    Batch<float> bg = make_batch("batch/p2s", "batch/p2r", "batch/p2rl", it, 1, cfg_.batch_p2, true);
    LossCtx<float> ctx_g{subseed(cfg_.seed, "phase2"), (uint64_t)(2 * it + 1), true, &counts_};
    double total_g;
    {
        Graph<float> g;
        g.set_trainable_filter(is_gen_cell);
        Node<float>* L = total_objective(bundle_, g, bg, cfg_.weights, 2,
                                         ObjectiveSide::min_players, ctx_g);
        total_g = L->val[0];
        g.backward(L);
        adam_step("g", g);
        ++stats_.g_steps;
    }
    stats_.map_r_evals = counts_.count("map_zy_r") ? counts_["map_zy_r"] : 0;

    if (it % cfg_.log_every == 0 || it + 1 == cfg_.phase2_iterations) {
        const LossWeights& W = cfg_.weights;
        LossWeights Wfm = W;
        Wfm.lambda8 = W.fm_weight_phase2;
        auto term = [&](const std::function<Node<float>*(Graph<float>&)>& b) {
            return frozen_value(b);
        };
        std::vector<std::pair<std::string, double>> t;
        t.push_back({"total_g", total_g});
        t.push_back({"total_d", total_d});
        t.push_back({"vae_s", term([&](Graph<float>& f) {
            return loss_vae_depth(bundle_, f, bg.x_s, Domain::s, W, ctx_g); })});
        t.push_back({"vae_r", term([&](Graph<float>& f) {
            return loss_vae_depth(bundle_, f, bg.x_r, Domain::r, W, ctx_g); })});
        t.push_back({"cc_s", term([&](Graph<float>& f) {
            return loss_cycle(bundle_, f, bg.x_s, Domain::s, W, ctx_g); })});
        t.push_back({"cc_r", term([&](Graph<float>& f) {
            return loss_cycle(bundle_, f, bg.x_r, Domain::r, W, ctx_g); })});
        t.push_back({"map_s", term([&](Graph<float>& f) {
            return loss_map(bundle_, f, bg.x_s, bg.y_s, Domain::s, W, ctx_g); })});
        if (bg.has_labeled())
            t.push_back({"map_r", term([&](Graph<float>& f) {
                return loss_map(bundle_, f, bg.x_rl, bg.y_rl, Domain::r, W, ctx_g); })});
        t.push_back({"fm", term([&](Graph<float>& f) {
            return loss_feature_matching(bundle_, f, bg.x_s, bg.x_r, Wfm, ctx_g); })});
        log_row(2, it, wall_(), std::move(t));
    }
}

void Trainer::phase3_iter(long long it) {
    Batch<float> b = make_batch("batch/p3s", "batch/p3r", "batch/p3rl", it, 0, cfg_.batch_p3, true);
    LossCtx<float> ctx{subseed(cfg_.seed, "phase3"), (uint64_t)it, true, &counts_};
    Graph<float> g;
    g.set_trainable_filter(is_posterior_head_cell);
    Node<float>* L = total_objective(bundle_, g, b, cfg_.weights, 3, ObjectiveSide::min_players,
                                     ctx);
    const double total = L->val[0];
    g.backward(L);
    adam_step("main", g);
    if (b.has_labeled()) ++stats_.pos_r_evals;

    if (it % cfg_.log_every == 0 || it + 1 == cfg_.phase3_iterations) {
        const LossWeights& W = cfg_.weights;
        std::vector<std::pair<std::string, double>> t;
        t.push_back({"total", total});
        t.push_back({"pos_s", frozen_value([&](Graph<float>& f) {
            return loss_posterior(bundle_, f, b.x_s, b.y_s, Domain::s, W); })});
        if (b.has_labeled())
            t.push_back({"pos_r", frozen_value([&](Graph<float>& f) {
                return loss_posterior(bundle_, f, b.x_rl, b.y_rl, Domain::r, W); })});
        t.push_back({"fm", frozen_value([&](Graph<float>& f) {
            return loss_feature_matching(bundle_, f, b.x_s, b.x_r, W, ctx); })});
        log_row(3, it, wall_(), std::move(t));
    }
}

void Trainer::run_phase(int phase, long long max_iters) {
    long long total = cfg_.phase_iterations(phase);
    if (state_.phase > phase)
        throw ConfigError("training state is already past phase " + std::to_string(phase));
    if (state_.phase < phase) state_ = TrainState{phase, 0, {}};
    if (max_iters >= 0) total = std::min(total, state_.iteration + max_iters);
    start_ = std::chrono::steady_clock::now();
    for (long long it = state_.iteration; it < total; ++it) {
        try {
            if (phase == 1)
                phase1_iter(it);
            else if (phase == 2)
                phase2_iter(it);
            else
                phase3_iter(it);
        } catch (const NumericError& e) {
            diverge(phase, it, e.what());
        }
        state_.iteration = it + 1;
    }
}

double Trainer::wall_() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void train_phase1(Bundle<float>& b, const DatasetArchive& a, const TrainConfig& c, ProgressFn s) {
    Trainer t(b, a, c);
    t.set_progress(std::move(s));
    t.run_phase(1);
}

void train_phase2(Bundle<float>& b, const DatasetArchive& a, const TrainConfig& c, ProgressFn s) {
    Trainer t(b, a, c);
    t.set_progress(std::move(s));
    t.state() = TrainState{2, 0, {}};
    t.run_phase(2);
}

void train_phase3(Bundle<float>& b, const DatasetArchive& a, const TrainConfig& c, ProgressFn s) {
    Trainer t(b, a, c);
    t.set_progress(std::move(s));
    t.state() = TrainState{3, 0, {}};
    t.run_phase(3);
}

}  // namespace lsps
