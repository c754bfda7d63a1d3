#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "lsps/core/io.hpp"
#include "lsps/core/rng.hpp"
#include "lsps/synthgen/synthgen.hpp"

namespace lsps {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json style_to_json(const DomainStyle& s) {
    return json{{"kind", s.kind == StyleKind::synthetic ? "synthetic" : "real"},
                {"noise_sigma", s.noise_sigma},
                {"quantization_step", s.quantization_step},
                {"hole_probability", s.hole_probability},
                {"shape_scale", s.shape_scale},
                {"edge_jitter", s.edge_jitter}};
}

DomainStyle style_from_json(const json& j) {
    DomainStyle s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "synthetic")
        s.kind = StyleKind::synthetic;
    else if (kind == "real")
        s.kind = StyleKind::real;
    else
        throw ConfigError("unknown style kind: " + kind);
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.quantization_step = j.at("quantization_step").get<double>();
    s.hole_probability = j.at("hole_probability").get<double>();
    s.shape_scale = j.at("shape_scale").get<double>();
    s.edge_jitter = j.at("edge_jitter").get<double>();
    s.validate();
    return s;
}

struct FileSpec {
    const char* name;
    std::vector<int> shape;
};

}  // namespace

std::string DatasetManifest::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["resolution"] = resolution;
    j["cube_size_mm"] = cube_size_mm;
    j["n_synthetic"] = n_synthetic;
    j["n_real"] = n_real;
    j["n_test"] = n_test;
    j["label_fraction_m"] = label_fraction_m;
    j["skeleton"] = json::parse(skeleton.to_json());
    j["styles"] = {{"synthetic", style_to_json(synthetic_style)},
                   {"real", style_to_json(real_style)}};
    const int jc3 = skeleton.joint_count * 3;
    j["files"] = {
        {"synthetic_images", {{"file", "synthetic_images.f32"}, {"shape", {n_synthetic, 1, resolution, resolution}}}},
        {"synthetic_poses", {{"file", "synthetic_poses.f32"}, {"shape", {n_synthetic, jc3}}}},
        {"real_images", {{"file", "real_images.f32"}, {"shape", {n_real, 1, resolution, resolution}}}},
        {"real_labels_hidden", {{"file", "real_labels_hidden.f32"}, {"shape", {n_real, jc3}}}},
        {"test_images", {{"file", "test_images.f32"}, {"shape", {n_test, 1, resolution, resolution}}}},
        {"test_poses", {{"file", "test_poses.f32"}, {"shape", {n_test, jc3}}}},
        {"label_mask", {{"file", "label_mask.u8"}, {"shape", {n_real}}}}};
    return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest parse failure: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != 1) throw ConfigError("unsupported manifest schema_version");
        m.seed = j.at("seed").get<uint64_t>();
        m.resolution = j.at("resolution").get<int>();
        m.cube_size_mm = j.at("cube_size_mm").get<double>();
        m.n_synthetic = j.at("n_synthetic").get<int>();
        m.n_real = j.at("n_real").get<int>();
        m.n_test = j.at("n_test").get<int>();
        m.label_fraction_m = j.at("label_fraction_m").get<double>();
        m.skeleton = SkeletonSpec::from_json(j.at("skeleton").dump());
        m.synthetic_style = style_from_json(j.at("styles").at("synthetic"));
        m.real_style = style_from_json(j.at("styles").at("real"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest field error: ") + e.what());
    }
    return m;
}

std::vector<uint8_t> draw_label_mask(int n, double m_percent, uint64_t seed,
                                     const std::string& tag, uint64_t salt) {
    if (m_percent < 0 || m_percent > 100) throw ConfigError("label fraction must be in [0,100]");
    const int k = (int)std::llround(m_percent / 100.0 * n);
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = stream(seed, tag, salt);
    std::vector<uint8_t> mask((size_t)n, 0);
    for (int i = 0; i < k; ++i) {
        const int j = i + (int)rng.uniform_int((uint64_t)(n - i));
        std::swap(idx[(size_t)i], idx[(size_t)j]);
        mask[(size_t)idx[(size_t)i]] = 1;
    }
    return mask;
}

DatasetArchive make_dataset(const SkeletonSpec& spec, const DomainStyle& synthetic,
                            const DomainStyle& real, int n_s, int n_r, int n_test,
                            double label_fraction_m, uint64_t seed, int resolution,
                            double cube_size) {
    spec.validate();
    synthetic.validate();
    real.validate();
    if (n_s <= 0 || n_r <= 0 || n_test <= 0) throw ConfigError("split sizes must be positive");

    DatasetArchive a;
    a.manifest_.seed = seed;
    a.manifest_.resolution = resolution;
    a.manifest_.cube_size_mm = cube_size;
    a.manifest_.n_synthetic = n_s;
    a.manifest_.n_real = n_r;
    a.manifest_.n_test = n_test;
    a.manifest_.label_fraction_m = label_fraction_m;
    a.manifest_.skeleton = spec;
    a.manifest_.synthetic_style = synthetic;
    a.manifest_.real_style = real;

    const int px = resolution * resolution, jc3 = spec.joint_count * 3;
    auto fill_split = [&](const char* tag, const DomainStyle& style, int n, Tensor<float>& images,
                          Tensor<float>& poses) {
        images = Tensor<float>({n, 1, resolution, resolution});
        poses = Tensor<float>({n, jc3});
        const std::string pose_tag = std::string("pose/") + tag;
        const std::string render_tag = std::string("render/") + tag;
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < n; ++i) {
            const Pose pose = sample_pose(spec, subseed(seed, pose_tag, (uint64_t)i));
            const DepthImage img = render_depth(pose, spec, style,
                                                subseed(seed, render_tag, (uint64_t)i),
                                                resolution, cube_size);
            const PoseVec pv = normalize_pose(pose, {0, 0, 0}, cube_size);
            std::copy(img.pixels.begin(), img.pixels.end(), images.ptr() + (int64_t)i * px);
            for (int t = 0; t < jc3; ++t)
                poses[(int64_t)i * jc3 + t] = (float)pv.values[(size_t)t];
        }
    };
    fill_split("s", synthetic, n_s, a.synth_images_, a.synth_poses_);
    fill_split("r", real, n_r, a.real_images_, a.real_labels_hidden_);
    fill_split("t", real, n_test, a.test_images_, a.test_poses_);
    a.label_mask_ = draw_label_mask(n_r, label_fraction_m, seed, "mask");
    return a;
}

std::pair<Tensor<float>, Tensor<float>> DatasetArchive::labeled_real(
    const std::vector<uint8_t>& mask) const {
    if ((int)mask.size() != manifest_.n_real)
        throw ShapeError("label mask size does not match the real split");
    ++audit_.labeled_real_requests;
    int k = 0;
    for (uint8_t m : mask) k += m ? 1 : 0;
    const int jc3 = real_labels_hidden_.dim(1);
    const int px = (int)(real_images_.numel() / manifest_.n_real);
    std::vector<int> xshape = real_images_.shape;
    xshape[0] = k;
    Tensor<float> xs(xshape), ys({k, jc3});
    int row = 0;
    for (int i = 0; i < manifest_.n_real; ++i) {
        if (!mask[(size_t)i]) continue;
        std::copy(real_images_.ptr() + (int64_t)i * px, real_images_.ptr() + (int64_t)(i + 1) * px,
                  xs.ptr() + (int64_t)row * px);
        std::copy(real_labels_hidden_.ptr() + (int64_t)i * jc3,
                  real_labels_hidden_.ptr() + (int64_t)(i + 1) * jc3, ys.ptr() + (int64_t)row * jc3);
        ++row;
    }
    audit_.labeled_rows_served += k;
    return {std::move(xs), std::move(ys)};
}

std::vector<uint8_t> DatasetArchive::label_view(double m_percent) const {
    return draw_label_mask(manifest_.n_real, m_percent, manifest_.seed, "mask_view",
                           (uint64_t)std::llround(m_percent * 10000.0));
}

void DatasetArchive::save(const std::string& dir) const {
    ensure_dir(dir);
    const fs::path d(dir);
    write_text_file(d / "manifest.json", manifest_.to_json());
    write_f32_file(d / "synthetic_images.f32", synth_images_.ptr(), synth_images_.numel());
    write_f32_file(d / "synthetic_poses.f32", synth_poses_.ptr(), synth_poses_.numel());
    write_f32_file(d / "real_images.f32", real_images_.ptr(), real_images_.numel());
    write_f32_file(d / "real_labels_hidden.f32", real_labels_hidden_.ptr(),
                   real_labels_hidden_.numel());
    write_f32_file(d / "test_images.f32", test_images_.ptr(), test_images_.numel());
    write_f32_file(d / "test_poses.f32", test_poses_.ptr(), test_poses_.numel());
    write_bytes_file(d / "label_mask.u8", label_mask_.data(), (int64_t)label_mask_.size());
}

DatasetArchive DatasetArchive::load(const std::string& dir) {
    const fs::path d(dir);
    DatasetArchive a;
    a.manifest_ = DatasetManifest::from_json(read_text_file(d / "manifest.json"));
    const auto& m = a.manifest_;
    const int jc3 = m.skeleton.joint_count * 3;
    auto load_f32 = [&](const char* file, std::vector<int> shape) {
        Tensor<float> t(shape);
        read_f32_file_into(d / file, t.ptr(), t.numel());
        return t;
    };
    a.synth_images_ = load_f32("synthetic_images.f32", {m.n_synthetic, 1, m.resolution, m.resolution});
    a.synth_poses_ = load_f32("synthetic_poses.f32", {m.n_synthetic, jc3});
    a.real_images_ = load_f32("real_images.f32", {m.n_real, 1, m.resolution, m.resolution});
    a.real_labels_hidden_ = load_f32("real_labels_hidden.f32", {m.n_real, jc3});
    a.test_images_ = load_f32("test_images.f32", {m.n_test, 1, m.resolution, m.resolution});
    a.test_poses_ = load_f32("test_poses.f32", {m.n_test, jc3});
    a.label_mask_ = read_bytes_file(d / "label_mask.u8");
    if ((int)a.label_mask_.size() != m.n_real)
        throw ChecksumError("label_mask.u8 size does not match manifest");
    return a;
}

}  // namespace lsps
