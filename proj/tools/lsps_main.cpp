#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lsps/cli/runconfig.hpp"
#include "lsps/core/io.hpp"
#include "lsps/eval/eval.hpp"
#include "lsps/trainer/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace lsps;

namespace {

void apply_worker_env() {
#ifdef _OPENMP
    int workers = 1;  // single worker default keeps runs bitwise reproducible
    if (const char* env = std::getenv("LSPS_NUM_WORKERS")) workers = std::max(1, std::atoi(env));
    omp_set_num_threads(workers);
#endif
}

std::string hex_u64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
    return buf;
}

// Verifies skeleton/resolution agreement between config and archive.
void check_archive_matches(const RunConfig& cfg, const DatasetArchive& ar) {
    if (ar.manifest().resolution != cfg.arch.image_resolution)
        throw ConfigError("archive resolution does not match arch.image_resolution");
    if (ar.manifest().skeleton.joint_count != cfg.arch.joint_count)
        throw ConfigError("archive skeleton does not match arch.joint_count");
}

Checkpoint load_verified(const std::string& path, uint64_t digest) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta.config_digest != digest)
        throw ConfigError("checkpoint config digest mismatch for " + path +
                          " (expected " + hex_u64(digest) + ", found " +
                          hex_u64(ck.meta.config_digest) + ")");
    return ck;
}

std::vector<const float*> image_row_ptrs(const Tensor<float>& t, int count, int res) {
    std::vector<const float*> out;
    for (int i = 0; i < count; ++i) out.push_back(t.ptr() + (int64_t)i * res * res);
    return out;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, bool force) {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw IoError("output directory " + out_dir + " is not empty (use --force)");
    SkeletonSpec spec = SkeletonSpec::default_hand();
    DatasetArchive ar = make_dataset(spec, cfg.data.synthetic_style, cfg.data.real_style,
                                     cfg.data.n_synthetic, cfg.data.n_real, cfg.data.n_test,
                                     cfg.data.label_fraction_m, cfg.data_seed(),
                                     cfg.arch.image_resolution, cfg.data.cube_size_mm);
    ar.save(out_dir);
    int labeled = 0;
    for (uint8_t b : ar.label_mask()) labeled += b;
    std::cout << "archive written to " << out_dir << "\n"
              << "synthetic=" << cfg.data.n_synthetic << " real=" << cfg.data.n_real
              << " test=" << cfg.data.n_test << " labels_visible=" << labeled << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& archive_dir,
              const std::string& out_dir, const std::string& phase_arg,
              const std::string& resume, long long stop_after) {
    RunConfig cfg = RunConfig::from_file(config_path);
    DatasetArchive ar = DatasetArchive::load(archive_dir);
    check_archive_matches(cfg, ar);
    ensure_dir(out_dir);
    const uint64_t digest = cfg.digest();

    std::vector<int> phases;
    if (phase_arg == "all")
        phases = {1, 2, 3};
    else if (phase_arg == "1" || phase_arg == "2" || phase_arg == "3")
        phases = {phase_arg[0] - '0'};
    else
        throw ConfigError("--phase must be 1, 2, 3 or all");
    if (stop_after >= 0 && phases.size() != 1)
        throw ConfigError("--stop-after requires a single --phase");

    Bundle<float> bundle(cfg.arch);
    bundle.init(cfg.train.seed);
    Trainer tr(bundle, ar, cfg.train);
    ProgressCsv csv((fs::path(out_dir) / "progress.csv").string());
    tr.set_progress([&csv](const ProgressRow& r) { csv(r); });
    tr.set_divergence_checkpoint((fs::path(out_dir) / "ckpt_diverged.bin").string(), digest);

    auto ckpt_path = [&](int p) {
        return (fs::path(out_dir) / ("ckpt_phase" + std::to_string(p) + ".bin")).string();
    };

    if (!resume.empty()) {
        Checkpoint ck = load_verified(resume, digest);
        apply_checkpoint(ck, bundle.params());
        tr.state() = ck.state;
    } else if (phases.front() > 1) {
        const int prev = phases.front() - 1;
        const std::string prior = ckpt_path(prev);
        if (!fs::exists(prior))
            throw ConfigError("phase " + std::to_string(phases.front()) +
                              " requires the phase-" + std::to_string(prev) + " checkpoint (" +
                              prior + "); train it first");
        Checkpoint ck = load_verified(prior, digest);
        if (ck.state.phase != prev || ck.state.iteration != cfg.train.phase_iterations(prev))
            throw ConfigError("checkpoint " + prior + " is not a completed phase-" +
                              std::to_string(prev) + " state");
        apply_checkpoint(ck, bundle.params());
        tr.state() = ck.state;
    }

    for (int p : phases) {
        tr.run_phase(p, stop_after);
        save_checkpoint(bundle.params(), tr.state(),
                        {digest, p, tr.state().iteration, cfg.train.seed}, ckpt_path(p));
        std::cout << "phase " << p << ": iterations=" << tr.state().iteration
                  << " checkpoint=" << ckpt_path(p) << "\n";
    }
    return 0;
}

void write_report_files(const EvalReport& rep, const EvalConfig& eval, const std::string& out_dir,
                        const std::string& stem) {
    ensure_dir(out_dir);
    write_text_file((fs::path(out_dir) / (stem + ".json")).string(), rep.to_json());
    std::vector<std::pair<double, double>> curve;
    for (const auto& [d, f] : rep.frames_within) curve.emplace_back(d, f);
    write_curve_csv((fs::path(out_dir) / (stem + "_curve.csv")).string(), curve);
    (void)eval;
}

int cmd_eval(const std::string& config_path, const std::string& archive_dir,
             const std::string& checkpoint, const std::string& baseline, double labels_m,
             const std::string& out_dir) {
    RunConfig cfg = RunConfig::from_file(config_path);
    DatasetArchive ar = DatasetArchive::load(archive_dir);
    check_archive_matches(cfg, ar);
    if (checkpoint.empty() == baseline.empty())
        throw ConfigError("eval needs exactly one of --checkpoint or --baseline");

    EvalReport rep;
    std::string stem;
    if (!checkpoint.empty()) {
        Checkpoint ck = load_verified(checkpoint, cfg.digest());
        Bundle<float> bundle(cfg.arch);
        apply_checkpoint(ck, bundle.params());
        const SkeletonSpec& spec = ar.manifest().skeleton;
        const double cs = ar.manifest().cube_size_mm;
        long long clips = 0;
        auto preds = predict_poses(bundle, spec, ar.test_images(), {0, 0, 0}, cs,
                                   cfg.eval.batch, &clips);
        auto gts = decode_pose_rows(spec, ar.test_poses(), {0, 0, 0}, cs);
        rep.kind = "checkpoint";
        rep.seed = ck.meta.seed;
        rep.label_fraction_m = cfg.train.label_fraction_m;
        rep.mean_joint_error_mm = mean_joint_error(preds, gts);
        for (auto [d, f] : error_curve(preds, gts, cfg.eval.thresholds_mm))
            rep.frames_within[d] = f;
        const auto errs = joint_errors_mm(preds, gts);
        rep.per_joint_errors_mm.assign(preds[0].joints.size(), 0.0);
        for (const auto& frame : errs)
            for (size_t j = 0; j < frame.size(); ++j) rep.per_joint_errors_mm[j] += frame[j];
        for (auto& e : rep.per_joint_errors_mm) e /= (double)errs.size();
        rep.clip_events = clips;
        stem = "report_checkpoint_seed" + std::to_string(cfg.train.seed);
    } else {
        BaselineKind kind = baseline_from_name(baseline);
        rep = run_baseline(kind, ar, cfg.arch, cfg.train, cfg.eval, labels_m);
        std::ostringstream s;
        s << "report_" << baseline;
        if (kind == BaselineKind::lsps_semi) s << "_m" << (long long)labels_m;
        s << "_seed" << cfg.train.seed;
        stem = s.str();
    }
    rep.config_digest = cfg.digest();
    rep.validate();
    write_report_files(rep, cfg.eval, out_dir, stem);

    const int res = cfg.arch.image_resolution;
    const int n_show = std::min(16, ar.test_images().dim(0));
    write_depth_grid_pgm((fs::path(out_dir) / (stem + "_inputs.pgm")).string(),
                         image_row_ptrs(ar.test_images(), n_show, res), res, 8);
    std::cout << stem << ": mean_joint_error_mm=" << rep.mean_joint_error_mm << "\n";
    return 0;
}

int cmd_translate(const std::string& config_path, const std::string& archive_dir,
                  const std::string& checkpoint, const std::string& direction, int count,
                  const std::string& out_dir) {
    RunConfig cfg = RunConfig::from_file(config_path);
    DatasetArchive ar = DatasetArchive::load(archive_dir);
    check_archive_matches(cfg, ar);
    Checkpoint ck = load_verified(checkpoint, cfg.digest());
    Bundle<float> bundle(cfg.arch);
    apply_checkpoint(ck, bundle.params());

    Domain from, to;
    bool from_synth;
    if (direction == "s2r") { from = Domain::s; to = Domain::r; from_synth = true; }
    else if (direction == "r2s") { from = Domain::r; to = Domain::s; from_synth = false; }
    else if (direction == "recon-s") { from = Domain::s; to = Domain::s; from_synth = true; }
    else if (direction == "recon-r") { from = Domain::r; to = Domain::r; from_synth = false; }
    else throw ConfigError("--direction must be s2r, r2s, recon-s or recon-r");

    const Tensor<float>& split = from_synth ? ar.synthetic_images() : ar.real_images();
    if (count < 1 || count > split.dim(0))
        throw ConfigError("--count out of range for the source split");
    Tensor<float> in({count, 1, cfg.arch.image_resolution, cfg.arch.image_resolution});
    std::copy_n(split.ptr(), in.numel(), in.ptr());
    Tensor<float> out = translate_images(bundle, in, from, to, cfg.eval.batch);

    ensure_dir(out_dir);
    const int res = cfg.arch.image_resolution;
    const int cols = std::min(count, 8);
    write_depth_grid_pgm((fs::path(out_dir) / ("translate_" + direction + "_in.pgm")).string(),
                         image_row_ptrs(in, count, res), res, cols);
    write_depth_grid_pgm((fs::path(out_dir) / ("translate_" + direction + "_out.pgm")).string(),
                         image_row_ptrs(out, count, res), res, cols);
    std::cout << "translated " << count << " images (" << direction << ")\n";
    return 0;
}

int cmd_walk(const std::string& config_path, const std::string& archive_dir,
             const std::string& checkpoint, int from_idx, int to_idx, int steps,
             const std::string& out_dir) {
    RunConfig cfg = RunConfig::from_file(config_path);
    DatasetArchive ar = DatasetArchive::load(archive_dir);
    check_archive_matches(cfg, ar);
    Checkpoint ck = load_verified(checkpoint, cfg.digest());
    Bundle<float> bundle(cfg.arch);
    apply_checkpoint(ck, bundle.params());

    const Tensor<float>& poses = ar.synthetic_poses();
    if (from_idx < 0 || from_idx >= poses.dim(0) || to_idx < 0 || to_idx >= poses.dim(0))
        throw ConfigError("--from/--to index out of range");
    const int cols = poses.dim(1);
    Tensor<float> ya({1, cols}), yb({1, cols});
    std::copy_n(poses.ptr() + (int64_t)from_idx * cols, cols, ya.ptr());
    std::copy_n(poses.ptr() + (int64_t)to_idx * cols, cols, yb.ptr());

    auto walk = latent_walk(bundle, ya, yb, steps);
    ensure_dir(out_dir);
    const int res = cfg.arch.image_resolution;
    std::vector<const float*> imgs_s, imgs_r;
    for (const auto& p : walk) {
        imgs_s.push_back(p.image_s.ptr());
        imgs_r.push_back(p.image_r.ptr());
    }
    write_depth_grid_pgm((fs::path(out_dir) / "walk_s.pgm").string(), imgs_s, res,
                         (int)walk.size());
    write_depth_grid_pgm((fs::path(out_dir) / "walk_r.pgm").string(), imgs_r, res,
                         (int)walk.size());

    const SkeletonSpec& spec = ar.manifest().skeleton;
    const double cs = ar.manifest().cube_size_mm;
    std::ostringstream csv;
    csv << "index,t";
    for (int j = 0; j < spec.joint_count; ++j)
        csv << ",x" << j << ",y" << j << ",z" << j;
    csv << "\n";
    for (size_t i = 0; i < walk.size(); ++i) {
        Tensor<float> row({1, cols});
        std::copy_n(walk[i].pose_row.ptr(), cols, row.ptr());
        PoseVec v;
        v.cube_center = {0, 0, 0};
        v.cube_size = cs;
        v.values.assign(row.ptr(), row.ptr() + cols);
        Pose p = denormalize_pose(v);
        csv << i << ',' << (double)i / (double)(walk.size() - 1);
        for (const auto& jt : p.joints) csv << ',' << jt[0] << ',' << jt[1] << ',' << jt[2];
        csv << "\n";
    }
    write_text_file((fs::path(out_dir) / "walk_poses.csv").string(), csv.str());
    std::cout << "walk columns=" << walk.size() << "\n";
    return 0;
}

int cmd_sample(const std::string& config_path, const std::string& checkpoint, int n,
               uint64_t seed, const std::string& out_dir) {
    RunConfig cfg = RunConfig::from_file(config_path);
    Checkpoint ck = load_verified(checkpoint, cfg.digest());
    Bundle<float> bundle(cfg.arch);
    apply_checkpoint(ck, bundle.params());

    SkeletonSpec spec = SkeletonSpec::default_hand();
    PriorSamples samples = sample_prior(bundle, spec, n, seed, cfg.data.cube_size_mm);
    ensure_dir(out_dir);
    const int res = cfg.arch.image_resolution;
    std::vector<const float*> imgs_s, imgs_r;
    for (const auto& p : samples.points) {
        imgs_s.push_back(p.image_s.ptr());
        imgs_r.push_back(p.image_r.ptr());
    }
    const int cols = std::min(n, 8);
    write_depth_grid_pgm((fs::path(out_dir) / "sample_s.pgm").string(), imgs_s, res, cols);
    write_depth_grid_pgm((fs::path(out_dir) / "sample_r.pgm").string(), imgs_r, res, cols);

    std::ostringstream csv;
    csv << "index";
    for (int c = 0; c < 3 * spec.joint_count; ++c) csv << ",v" << c;
    csv << "\n";
    for (int i = 0; i < n; ++i) {
        csv << i;
        for (int c = 0; c < 3 * spec.joint_count; ++c)
            csv << ',' << samples.points[i].pose_row[c];
        csv << "\n";
    }
    write_text_file((fs::path(out_dir) / "sample_poses.csv").string(), csv.str());

    nlohmann::json stats = {{"n", n},
                            {"seed", hex_u64(seed)},
                            {"bone_dev_mean_mm", samples.bone_dev_mean_mm},
                            {"bone_dev_max_mm", samples.bone_dev_max_mm}};
    write_text_file((fs::path(out_dir) / "sample_stats.json").string(), stats.dump(2) + "\n");
    std::cout << "samples=" << n << " bone_dev_mean_mm=" << samples.bone_dev_mean_mm << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir, bool gnuplot) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(run_dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("report_", 0) == 0 && e.path().extension() == ".json")
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no report_*.json files in " + run_dir);

    std::vector<EvalReport> reports;
    for (const auto& f : files) reports.push_back(EvalReport::from_json(read_text_file(f)));

    std::ostringstream table;
    table << "kind              labels_m   mean_error_mm   frames<40mm\n";
    for (const auto& r : reports) {
        char line[160];
        std::string within = "n/a";
        auto it = r.frames_within.find(40.0);
        if (it != r.frames_within.end()) {
            char b[32];
            std::snprintf(b, sizeof b, "%.1f%%", 100.0 * it->second);
            within = b;
        }
        std::snprintf(line, sizeof line, "%-17s %8.4g %15.2f %13s\n", r.kind.c_str(),
                      r.label_fraction_m, r.mean_joint_error_mm, within.c_str());
        table << line;
    }
    std::cout << table.str();
    write_text_file((fs::path(run_dir) / "summary_table.txt").string(), table.str());

    // Label-fraction sweep: median mean error per m over the semi reports.
    std::map<double, std::vector<double>> by_m;
    for (const auto& r : reports)
        if (r.kind == "lsps_semi") by_m[r.label_fraction_m].push_back(r.mean_joint_error_mm);
    if (!by_m.empty()) {
        std::ostringstream csv;
        csv << "label_fraction_m,median_mean_error_mm,runs\n";
        for (auto& [m, v] : by_m) {
            std::sort(v.begin(), v.end());
            const double med = v.size() % 2 ? v[v.size() / 2]
                                            : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
            csv << m << ',' << med << ',' << v.size() << "\n";
        }
        write_text_file((fs::path(run_dir) / "label_fraction.csv").string(), csv.str());
    }

    if (gnuplot) {
        std::ostringstream g;
        g << "set datafile separator ','\n"
          << "set xlabel 'threshold (mm)'\n"
          << "set ylabel 'fraction of frames'\n"
          << "set yrange [0:1]\n"
          << "set key bottom right\n"
          << "plot ";
        bool first = true;
        for (const auto& f : files) {
            fs::path curve = fs::path(f).parent_path() /
                             (fs::path(f).stem().string() + "_curve.csv");
            if (!fs::exists(curve)) continue;
            if (!first) g << ", \\\n     ";
            g << "'" << curve.filename().string() << "' using 1:2 with linespoints title '"
              << fs::path(f).stem().string() << "'";
            first = false;
        }
        g << "\n";
        write_text_file((fs::path(run_dir) / "curves.gnuplot").string(), g.str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    apply_worker_env();
    CLI::App app{"shared-latent-space hand pose estimation from depth images"};
    app.require_subcommand(1);

    std::string config, archive, out, checkpoint, resume, phase = "all", direction = "s2r";
    std::string baseline, run_dir;
    bool force = false, gnuplot = false;
    int count = 8, from_idx = 0, to_idx = 1, steps = 6, n = 16;
    long long stop_after = -1;
    double labels_m = 0;
    uint64_t sample_seed = 1;

    auto* gen = app.add_subcommand("gen-data", "generate a dual-domain dataset archive");
    gen->add_option("--config", config)->required();
    gen->add_option("--out", out)->required();
    gen->add_flag("--force", force);

    auto* train = app.add_subcommand("train", "run the training phases");
    train->add_option("--config", config)->required();
    train->add_option("--archive", archive)->required();
    train->add_option("--out", out)->required();
    train->add_option("--phase", phase)->check(CLI::IsMember({"1", "2", "3", "all"}));
    train->add_option("--resume", resume);
    train->add_option("--stop-after", stop_after);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline");
    eval->add_option("--config", config)->required();
    eval->add_option("--archive", archive)->required();
    eval->add_option("--out", out)->required();
    eval->add_option("--checkpoint", checkpoint);
    eval->add_option("--baseline", baseline);
    eval->add_option("--labels", labels_m);

    auto* translate = app.add_subcommand("translate", "translate depth images across domains");
    translate->add_option("--config", config)->required();
    translate->add_option("--archive", archive)->required();
    translate->add_option("--checkpoint", checkpoint)->required();
    translate->add_option("--direction", direction)
        ->check(CLI::IsMember({"s2r", "r2s", "recon-s", "recon-r"}));
    translate->add_option("--count", count);
    translate->add_option("--out", out)->required();

    auto* walk = app.add_subcommand("walk", "latent-space walk between two poses");
    walk->add_option("--config", config)->required();
    walk->add_option("--archive", archive)->required();
    walk->add_option("--checkpoint", checkpoint)->required();
    walk->add_option("--from", from_idx);
    walk->add_option("--to", to_idx);
    walk->add_option("--steps", steps);
    walk->add_option("--out", out)->required();

    auto* sample = app.add_subcommand("sample", "decode prior samples into all domains");
    sample->add_option("--config", config)->required();
    sample->add_option("--checkpoint", checkpoint)->required();
    sample->add_option("--n", n);
    sample->add_option("--seed", sample_seed);
    sample->add_option("--out", out)->required();

    auto* report = app.add_subcommand("report", "aggregate eval reports into tables");
    report->add_option("--run-dir", run_dir)->required();
    report->add_flag("--gnuplot", gnuplot);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config, out, force);
        if (train->parsed()) return cmd_train(config, archive, out, phase, resume, stop_after);
        if (eval->parsed()) return cmd_eval(config, archive, checkpoint, baseline, labels_m, out);
        if (translate->parsed())
            return cmd_translate(config, archive, checkpoint, direction, count, out);
        if (walk->parsed())
            return cmd_walk(config, archive, checkpoint, from_idx, to_idx, steps, out);
        if (sample->parsed()) return cmd_sample(config, checkpoint, n, sample_seed, out);
        if (report->parsed()) return cmd_report(run_dir, gnuplot);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ChecksumError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
