#include "lsps/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lsps/core/io.hpp"

namespace lsps {

namespace {

std::string hex_u64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
    return buf;
}

void freeze(Graph<float>& g) {
    g.set_trainable_filter([](const std::string&) { return false; });
}

}  // namespace

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["split"] = split;
    j["config_digest"] = hex_u64(config_digest);
    j["seed"] = hex_u64(seed);
    j["label_fraction_m"] = label_fraction_m;
    j["mean_joint_error_mm"] = mean_joint_error_mm;
    nlohmann::json fw = nlohmann::json::object();
    for (const auto& [d, f] : frames_within) {
        std::ostringstream k;
        k << d;
        fw[k.str()] = f;
    }
    j["frames_within"] = std::move(fw);
    j["per_joint_errors_mm"] = per_joint_errors_mm;
    j["clip_events"] = clip_events;
    j["convention"] = convention;
    return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
    EvalReport r;
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        r.kind = j.at("kind").get<std::string>();
        r.split = j.at("split").get<std::string>();
        r.config_digest = std::stoull(j.at("config_digest").get<std::string>(), nullptr, 16);
        r.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
        r.label_fraction_m = j.at("label_fraction_m").get<double>();
        r.mean_joint_error_mm = j.at("mean_joint_error_mm").get<double>();
        for (const auto& [k, v] : j.at("frames_within").items())
            r.frames_within[std::stod(k)] = v.get<double>();
        r.per_joint_errors_mm = j.at("per_joint_errors_mm").get<std::vector<double>>();
        r.clip_events = j.at("clip_events").get<long long>();
        r.convention = j.at("convention").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad eval report: " + std::string(e.what()));
    }
    return r;
}

void EvalReport::validate() const {
    if (mean_joint_error_mm < 0) throw DomainError("mean error must be non-negative");
    double prev = 0;
    for (const auto& [d, f] : frames_within) {
        if (f < 0 || f > 1) throw DomainError("frames_within fraction outside [0,1]");
        if (f < prev) throw DomainError("frames_within must be non-decreasing in threshold");
        prev = f;
    }
}

std::string baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::synthetic_only: return "synthetic_only";
        case BaselineKind::lsps_synthetic: return "lsps_synthetic";
        case BaselineKind::lsps_semi: return "lsps_semi";
        case BaselineKind::real_only: return "real_only";
    }
    throw ConfigError("unknown baseline kind");
}

BaselineKind baseline_from_name(const std::string& n) {
    if (n == "synthetic_only") return BaselineKind::synthetic_only;
    if (n == "lsps_synthetic") return BaselineKind::lsps_synthetic;
    if (n == "lsps_semi") return BaselineKind::lsps_semi;
    if (n == "real_only") return BaselineKind::real_only;
    throw ConfigError("unknown baseline kind: " + n);
}

// ---- metrics ----

std::vector<std::vector<double>> joint_errors_mm(const std::vector<Pose>& preds,
                                                 const std::vector<Pose>& gts) {
    if (preds.size() != gts.size())
        throw ShapeError("prediction/ground-truth frame counts differ");
    std::vector<std::vector<double>> errs(preds.size());
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].joints.size() != gts[i].joints.size())
            throw ShapeError("prediction/ground-truth joint counts differ");
        errs[i].resize(preds[i].joints.size());
        for (size_t j = 0; j < preds[i].joints.size(); ++j) {
            const auto& a = preds[i].joints[j];
            const auto& b = gts[i].joints[j];
            errs[i][j] = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                                   (a[2] - b[2]) * (a[2] - b[2]));
        }
    }
    return errs;
}

double mean_joint_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts) {
    const auto errs = joint_errors_mm(preds, gts);
    if (errs.empty()) throw DomainError("no frames to evaluate");
    double total = 0;
    for (const auto& frame : errs) {
        double s = 0;
        for (double e : frame) s += e;
        total += s / (double)frame.size();
    }
    return total / (double)errs.size();
}

double frames_within(const std::vector<Pose>& preds, const std::vector<Pose>& gts, double d_mm) {
    const auto errs = joint_errors_mm(preds, gts);
    if (errs.empty()) throw DomainError("no frames to evaluate");
    long long ok = 0;
    for (const auto& frame : errs) {
        double worst = 0;
        for (double e : frame) worst = std::max(worst, e);
        if (worst < d_mm) ++ok;
    }
    return (double)ok / (double)errs.size();
}

std::vector<std::pair<double, double>> error_curve(const std::vector<Pose>& preds,
                                                   const std::vector<Pose>& gts,
                                                   const std::vector<double>& thresholds) {
    for (size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] < thresholds[i - 1])
            throw DomainError("thresholds must be ascending");
    std::vector<std::pair<double, double>> out;
    out.reserve(thresholds.size());
    for (double d : thresholds) out.emplace_back(d, frames_within(preds, gts, d));
    return out;
}

// ---- prediction ----

namespace {

// Clips latent-decoded pose rows, denormalizes, applies the eval mask.
std::vector<Pose> rows_to_poses(const SkeletonSpec& spec, const Tensor<float>& rows,
                                const std::array<double, 3>& center, double cube_size,
                                bool apply_mask, long long* clip_events) {
    const int n = rows.dim(0), cols = rows.dim(1);
    if (cols != 3 * spec.joint_count) throw ShapeError("pose rows do not match skeleton");
    std::vector<Pose> out(n);
    for (int i = 0; i < n; ++i) {
        PoseVec v;
        v.cube_center = center;
        v.cube_size = cube_size;
        v.values.resize(cols);
        for (int c = 0; c < cols; ++c) {
            double x = rows[(int64_t)i * cols + c];
            if (clip_events && (x < -1.05 || x > 1.05)) {
                x = std::clamp(x, -1.05, 1.05);
                ++*clip_events;
            }
            v.values[c] = x;
        }
        Pose full = denormalize_pose(v);
        if (!apply_mask) {
            out[i] = std::move(full);
            continue;
        }
        Pose sel;
        sel.handedness = full.handedness;
        for (int j = 0; j < spec.joint_count; ++j)
            if (spec.eval_mask[j]) sel.joints.push_back(full.joints[j]);
        out[i] = std::move(sel);
    }
    return out;
}

Tensor<float> slice_rows(const Tensor<float>& src, int begin, int count) {
    std::vector<int> shape = src.shape;
    shape[0] = count;
    Tensor<float> out(shape);
    const int64_t row = src.numel() / src.dim(0);
    std::copy_n(src.ptr() + begin * row, count * row, out.ptr());
    return out;
}

// Runs `latent(x)` over row chunks and decodes through G_y.
template <typename LatentFn>
Tensor<float> decode_rows_through_gy(Bundle<float>& bundle, const Tensor<float>& images,
                                     int batch, LatentFn latent) {
    const int n = images.dim(0);
    Tensor<float> rows({n, 3 * bundle.cfg().joint_count});
    for (int at = 0; at < n; at += batch) {
        const int take = std::min(batch, n - at);
        Graph<float> g;
        freeze(g);
        Node<float>* x = g.input(slice_rows(images, at, take));
        Node<float>* y = bundle.decode_pose(g, latent(g, x));
        std::copy_n(y->val.ptr(), y->val.numel(), rows.ptr() + (int64_t)at * rows.dim(1));
    }
    return rows;
}

}  // namespace

std::vector<Pose> decode_pose_rows(const SkeletonSpec& spec, const Tensor<float>& rows,
                                   const std::array<double, 3>& cube_center, double cube_size) {
    return rows_to_poses(spec, rows, cube_center, cube_size, true, nullptr);
}

std::vector<Pose> predict_poses(Bundle<float>& bundle, const SkeletonSpec& spec,
                                const Tensor<float>& images,
                                const std::array<double, 3>& cube_center, double cube_size,
                                int batch, long long* clip_events) {
    Tensor<float> rows = decode_rows_through_gy(
        bundle, images, batch,
        [&](Graph<float>& g, Node<float>* x) { return bundle.posterior(g, x); });
    long long clips = 0;
    auto poses = rows_to_poses(spec, rows, cube_center, cube_size, true, &clips);
    if (clip_events) *clip_events += clips;
    return poses;
}

Pose predict_pose(Bundle<float>& bundle, const SkeletonSpec& spec, const DepthImage& image,
                  const std::array<double, 3>& cube_center, double cube_size) {
    const int res = image.resolution;
    if (res != bundle.cfg().image_resolution)
        throw ShapeError("image resolution does not match the model");
    Tensor<float> x({1, 1, res, res});
    std::copy(image.pixels.begin(), image.pixels.end(), x.ptr());
    return predict_poses(bundle, spec, x, cube_center, cube_size, 1, nullptr)[0];
}

// ---- direct regressor ----

Regressor::Regressor(const ArchConfig& c)
    : cfg(c), manifest(plan_regressor(c)), params(make_param_store<float>(manifest)) {}

void Regressor::init(uint64_t seed) { init_params(params, seed, cfg.negative_slope); }

Node<float>* Regressor::forward(Graph<float>& g, Node<float>* x) {
    return g.spatial_mean(run_net(g, manifest, params, "B", x, cfg.negative_slope));
}

void train_regressor(Regressor& reg, Bundle<float>& bundle, const Tensor<float>& images,
                     const Tensor<float>& poses, const TrainConfig& cfg, long long iterations,
                     ProgressFn progress) {
    if (images.dim(0) < 1) throw DomainError("regressor needs at least one training pair");
    AdamGroup adam;
    const int n = images.dim(0);
    const int bs = std::min(cfg.batch_p3, n);
    for (long long it = 0; it < iterations; ++it) {
        Rng rng = stream(cfg.seed, "batch/reg", (uint64_t)it);
        std::vector<int> shape_x = images.shape, shape_y = poses.shape;
        shape_x[0] = shape_y[0] = bs;
        Tensor<float> bx(shape_x), by(shape_y);
        const int64_t rx = images.numel() / n, ry = poses.numel() / n;
        for (int i = 0; i < bs; ++i) {
            const int64_t k = (int64_t)rng.uniform_int((uint64_t)n);
            std::copy_n(images.ptr() + k * rx, rx, bx.ptr() + i * rx);
            std::copy_n(poses.ptr() + k * ry, ry, by.ptr() + i * ry);
        }
        auto [mu, lv] = lossdetail::pose_targets(bundle, by);
        try {
            Graph<float> g;
            Node<float>* pred = reg.forward(g, g.input(std::move(bx)));
            Node<float>* loss = g.scale(lossdetail::mean_l2(g, pred, g.input(std::move(mu))),
                                        (float)cfg.weights.lambda7);
            lossdetail::check_finite(loss, "regressor loss");
            g.backward(loss);
            adam_update(adam, g, reg.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                        cfg.adam_epsilon);
            if (progress && (it % cfg.log_every == 0 || it + 1 == iterations)) {
                ProgressRow row;
                row.phase = 0;
                row.iteration = it;
                row.terms = {{"regressor", (double)loss->val[0]}};
                progress(row);
            }
        } catch (const NumericError& e) {
            throw DivergenceError(0, it, std::string("regressor diverged: ") + e.what());
        }
    }
}

// ---- baselines ----

EvalReport run_baseline(BaselineKind kind, const DatasetArchive& archive, const ArchConfig& arch,
                        const TrainConfig& train, const EvalConfig& eval, double label_m,
                        ProgressFn progress) {
    TrainConfig tc = train;
    if (kind == BaselineKind::lsps_semi)
        tc.label_fraction_m = label_m;
    else if (kind == BaselineKind::real_only)
        tc.label_fraction_m = 100.0;
    else
        tc.label_fraction_m = 0.0;

    Bundle<float> bundle(arch);
    bundle.init(tc.seed);
    Trainer tr(bundle, archive, tc);
    if (progress) tr.set_progress(progress);
    tr.run_phase(1);

    const SkeletonSpec& spec = archive.manifest().skeleton;
    const double cs = archive.manifest().cube_size_mm;
    const std::array<double, 3> center{0, 0, 0};
    long long clips = 0;
    std::vector<Pose> preds;

    if (kind == BaselineKind::lsps_synthetic || kind == BaselineKind::lsps_semi) {
        tr.run_phase(2);
        tr.run_phase(3);
        preds = predict_poses(bundle, spec, archive.test_images(), center, cs, eval.batch, &clips);
    } else {
        Regressor reg(arch);
        reg.init(subseed(tc.seed, "regressor"));
        Tensor<float> xs, ys;
        if (kind == BaselineKind::synthetic_only) {
            xs = archive.synthetic_images();
            ys = archive.synthetic_poses();
        } else {
            const int n_r = archive.real_images().dim(0);
            auto pair = archive.labeled_real(std::vector<uint8_t>(n_r, 1));
            xs = std::move(pair.first);
            ys = std::move(pair.second);
        }
        train_regressor(reg, bundle, xs, ys, tc, eval.regressor_iterations, progress);
        Tensor<float> rows = decode_rows_through_gy(
            bundle, archive.test_images(), eval.batch,
            [&](Graph<float>& g, Node<float>* x) { return reg.forward(g, x); });
        preds = rows_to_poses(spec, rows, center, cs, true, &clips);
    }

    std::vector<Pose> gts = decode_pose_rows(spec, archive.test_poses(), center, cs);

    EvalReport rep;
    rep.kind = baseline_name(kind);
    rep.seed = tc.seed;
    rep.label_fraction_m = tc.label_fraction_m;
    rep.mean_joint_error_mm = mean_joint_error(preds, gts);
    for (auto [d, f] : error_curve(preds, gts, eval.thresholds_mm)) rep.frames_within[d] = f;
    const auto errs = joint_errors_mm(preds, gts);
    rep.per_joint_errors_mm.assign(preds[0].joints.size(), 0.0);
    for (const auto& frame : errs)
        for (size_t j = 0; j < frame.size(); ++j) rep.per_joint_errors_mm[j] += frame[j];
    for (auto& e : rep.per_joint_errors_mm) e /= (double)errs.size();
    rep.clip_events = clips;
    rep.validate();
    return rep;
}

// ---- generative artifacts ----

std::vector<WalkPoint> latent_walk(Bundle<float>& bundle, const Tensor<float>& y_a,
                                   const Tensor<float>& y_b, int steps) {
    if (steps < 0) throw DomainError("steps must be non-negative");
    const int cols = 3 * bundle.cfg().joint_count;
    require_shape(y_a, {1, cols}, "latent_walk");
    require_shape(y_b, {1, cols}, "latent_walk");

    Tensor<float> mu_a, mu_b;
    {
        Graph<float> g;
        freeze(g);
        mu_a = bundle.encode_pose(g, g.input(y_a)).mu->val;
        mu_b = bundle.encode_pose(g, g.input(y_b)).mu->val;
    }
    const int latent = bundle.cfg().pose_latent_dim;
    const int k = steps + 2;
    Tensor<float> z({k, latent});
    for (int i = 0; i < k; ++i) {
        const float t = (float)i / (float)(k - 1);
        for (int c = 0; c < latent; ++c)
            z.ptr()[(int64_t)i * latent + c] = (1.0f - t) * mu_a[c] + t * mu_b[c];
    }

    Graph<float> g;
    freeze(g);
    Node<float>* zn = g.input(z);
    Node<float>* pose = bundle.decode_pose(g, zn);
    Node<float>* zx = bundle.map_latent(g, zn);
    Node<float>* im_s = bundle.decode_depth(g, zx, Domain::s);
    Node<float>* im_r = bundle.decode_depth(g, zx, Domain::r);

    const int res = bundle.cfg().image_resolution;
    std::vector<WalkPoint> out(k);
    for (int i = 0; i < k; ++i) {
        out[i].pose_row = Tensor<float>({cols});
        std::copy_n(pose->val.ptr() + (int64_t)i * cols, cols, out[i].pose_row.ptr());
        out[i].image_s = Tensor<float>({1, res, res});
        out[i].image_r = Tensor<float>({1, res, res});
        std::copy_n(im_s->val.ptr() + (int64_t)i * res * res, res * res, out[i].image_s.ptr());
        std::copy_n(im_r->val.ptr() + (int64_t)i * res * res, res * res, out[i].image_r.ptr());
    }
    return out;
}

PriorSamples sample_prior(Bundle<float>& bundle, const SkeletonSpec& spec, int n, uint64_t seed,
                          double cube_size) {
    if (n < 1) throw DomainError("sample count must be positive");
    const int latent = bundle.cfg().pose_latent_dim;
    Tensor<float> z({n, latent});
    Rng rng = stream(seed, "prior");
    for (auto& v : z.data) v = (float)rng.normal();

    Graph<float> g;
    freeze(g);
    Node<float>* zn = g.input(z);
    Node<float>* pose = bundle.decode_pose(g, zn);
    Node<float>* zx = bundle.map_latent(g, zn);
    Node<float>* im_s = bundle.decode_depth(g, zx, Domain::s);
    Node<float>* im_r = bundle.decode_depth(g, zx, Domain::r);

    const int res = bundle.cfg().image_resolution;
    const int cols = 3 * bundle.cfg().joint_count;
    PriorSamples out;
    out.points.resize(n);
    for (int i = 0; i < n; ++i) {
        out.points[i].pose_row = Tensor<float>({cols});
        std::copy_n(pose->val.ptr() + (int64_t)i * cols, cols, out.points[i].pose_row.ptr());
        out.points[i].image_s = Tensor<float>({1, res, res});
        out.points[i].image_r = Tensor<float>({1, res, res});
        std::copy_n(im_s->val.ptr() + (int64_t)i * res * res, res * res,
                    out.points[i].image_s.ptr());
        std::copy_n(im_r->val.ptr() + (int64_t)i * res * res, res * res,
                    out.points[i].image_r.ptr());
    }

    // Bone-length deviation of decoded poses against the skeleton (mm).
    auto poses = rows_to_poses(spec, pose->val, {0, 0, 0}, cube_size, false, nullptr);
    double total = 0, worst = 0;
    long long count = 0;
    for (const auto& p : poses)
        for (int j = 0; j < spec.joint_count; ++j) {
            if (spec.parents[j] == j) continue;
            const auto& a = p.joints[j];
            const auto& b = p.joints[spec.parents[j]];
            const double len = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) +
                                         (a[1] - b[1]) * (a[1] - b[1]) +
                                         (a[2] - b[2]) * (a[2] - b[2]));
            const double dev = std::abs(len - spec.bone_lengths_mm[j]);
            total += dev;
            worst = std::max(worst, dev);
            ++count;
        }
    out.bone_dev_mean_mm = total / (double)count;
    out.bone_dev_max_mm = worst;
    return out;
}

Tensor<float> translate_images(Bundle<float>& bundle, const Tensor<float>& images, Domain from,
                               Domain to, int batch) {
    const int n = images.dim(0);
    Tensor<float> out(images.shape);
    for (int at = 0; at < n; at += batch) {
        const int take = std::min(batch, n - at);
        Graph<float> g;
        freeze(g);
        Node<float>* x = g.input(slice_rows(images, at, take));
        Node<float>* y = bundle.decode_depth(g, bundle.encode_depth(g, x, from), to);
        std::copy_n(y->val.ptr(), y->val.numel(), out.ptr() + (int64_t)at * (out.numel() / n));
    }
    return out;
}

void write_curve_csv(const std::string& path,
                     const std::vector<std::pair<double, double>>& curve) {
    std::ostringstream s;
    s << "threshold_mm,fraction\n";
    for (const auto& [d, f] : curve) s << d << ',' << f << '\n';
    write_text_file(path, s.str());
}

}  // namespace lsps
