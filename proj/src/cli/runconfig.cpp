#include "lsps/cli/runconfig.hpp"

#include <set>

#include "json.hpp"
#include "lsps/core/io.hpp"

namespace lsps {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key \"" + k + "\" in " + where);
}

template <typename T>
void opt(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for \"") + key + "\"");
    }
}

DomainStyle parse_style(const json& j, const std::string& where, DomainStyle base) {
    check_keys(j, {"noise_sigma", "quantization_step", "hole_probability", "shape_scale",
                   "edge_jitter"},
               where);
    opt(j, "noise_sigma", base.noise_sigma);
    opt(j, "quantization_step", base.quantization_step);
    opt(j, "hole_probability", base.hole_probability);
    opt(j, "shape_scale", base.shape_scale);
    opt(j, "edge_jitter", base.edge_jitter);
    return base;
}

json style_json(const DomainStyle& s) {
    return {{"noise_sigma", s.noise_sigma},
            {"quantization_step", s.quantization_step},
            {"hole_probability", s.hole_probability},
            {"shape_scale", s.shape_scale},
            {"edge_jitter", s.edge_jitter}};
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    check_keys(j, {"schema_version", "seed", "arch", "data", "train", "eval"}, "config");
    if (!j.contains("schema_version")) throw ConfigError("config requires schema_version");
    RunConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
    opt(j, "seed", c.seed);

    if (j.contains("arch")) {
        const json& a = j.at("arch");
        check_keys(a,
                   {"image_resolution", "base_channels", "joint_count", "pose_latent_dim",
                    "pose_hidden", "depth_latent_channels", "residual_cardinality",
                    "negative_slope"},
                   "arch");
        opt(a, "image_resolution", c.arch.image_resolution);
        opt(a, "base_channels", c.arch.base_channels);
        opt(a, "joint_count", c.arch.joint_count);
        opt(a, "pose_latent_dim", c.arch.pose_latent_dim);
        opt(a, "pose_hidden", c.arch.pose_hidden);
        opt(a, "depth_latent_channels", c.arch.depth_latent_channels);
        opt(a, "residual_cardinality", c.arch.residual_cardinality);
        opt(a, "negative_slope", c.arch.negative_slope);
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d,
                   {"n_synthetic", "n_real", "n_test", "label_fraction_m", "cube_size_mm", "seed",
                    "synthetic_style", "real_style"},
                   "data");
        opt(d, "n_synthetic", c.data.n_synthetic);
        opt(d, "n_real", c.data.n_real);
        opt(d, "n_test", c.data.n_test);
        opt(d, "label_fraction_m", c.data.label_fraction_m);
        opt(d, "cube_size_mm", c.data.cube_size_mm);
        opt(d, "seed", c.data.seed);
        if (d.contains("synthetic_style"))
            c.data.synthetic_style = parse_style(d.at("synthetic_style"), "data.synthetic_style",
                                                 c.data.synthetic_style);
        if (d.contains("real_style"))
            c.data.real_style = parse_style(d.at("real_style"), "data.real_style",
                                            c.data.real_style);
    }

    c.train.seed = c.seed;
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
                    "phase1_iterations", "phase2_iterations", "phase3_iterations", "batch_p1",
                    "batch_p2", "batch_p3", "label_fraction_m", "seed", "log_every", "augment",
                    "weights"},
                   "train");
        opt(t, "learning_rate", c.train.learning_rate);
        opt(t, "adam_beta1", c.train.adam_beta1);
        opt(t, "adam_beta2", c.train.adam_beta2);
        opt(t, "adam_epsilon", c.train.adam_epsilon);
        opt(t, "phase1_iterations", c.train.phase1_iterations);
        opt(t, "phase2_iterations", c.train.phase2_iterations);
        opt(t, "phase3_iterations", c.train.phase3_iterations);
        opt(t, "batch_p1", c.train.batch_p1);
        opt(t, "batch_p2", c.train.batch_p2);
        opt(t, "batch_p3", c.train.batch_p3);
        opt(t, "label_fraction_m", c.train.label_fraction_m);
        opt(t, "seed", c.train.seed);
        opt(t, "log_every", c.train.log_every);
        opt(t, "augment", c.train.augment);
        if (t.contains("weights")) {
            const json& w = t.at("weights");
            check_keys(w,
                       {"lambda0", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5",
                        "lambda6", "lambda7", "lambda8", "fm_weight_phase2"},
                       "train.weights");
            opt(w, "lambda0", c.train.weights.lambda0);
            opt(w, "lambda1", c.train.weights.lambda1);
            opt(w, "lambda2", c.train.weights.lambda2);
            opt(w, "lambda3", c.train.weights.lambda3);
            opt(w, "lambda4", c.train.weights.lambda4);
            opt(w, "lambda5", c.train.weights.lambda5);
            opt(w, "lambda6", c.train.weights.lambda6);
            opt(w, "lambda7", c.train.weights.lambda7);
            opt(w, "lambda8", c.train.weights.lambda8);
            opt(w, "fm_weight_phase2", c.train.weights.fm_weight_phase2);
        }
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, {"thresholds_mm", "regressor_iterations", "batch"}, "eval");
        opt(e, "thresholds_mm", c.eval.thresholds_mm);
        opt(e, "regressor_iterations", c.eval.regressor_iterations);
        opt(e, "batch", c.eval.batch);
    }

    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path));
}

void RunConfig::validate() const {
    arch.validate();
    train.validate();
    data.synthetic_style.validate();
    data.real_style.validate();
    if (data.n_synthetic < 1 || data.n_real < 1 || data.n_test < 1)
        throw ConfigError("dataset split sizes must be positive");
    if (data.label_fraction_m < 0 || data.label_fraction_m > 100)
        throw ConfigError("data.label_fraction_m must lie in [0,100]");
    if (data.cube_size_mm <= 0) throw ConfigError("cube_size_mm must be positive");
    if (eval.thresholds_mm.empty()) throw ConfigError("eval.thresholds_mm must be non-empty");
    for (size_t i = 1; i < eval.thresholds_mm.size(); ++i)
        if (eval.thresholds_mm[i] < eval.thresholds_mm[i - 1])
            throw ConfigError("eval.thresholds_mm must be ascending");
    if (eval.regressor_iterations < 1) throw ConfigError("regressor_iterations must be positive");
    if (eval.batch < 1) throw ConfigError("eval.batch must be positive");
}

std::string RunConfig::canonical() const {
    json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["arch"] = {{"image_resolution", arch.image_resolution},
                 {"base_channels", arch.base_channels},
                 {"joint_count", arch.joint_count},
                 {"pose_latent_dim", arch.pose_latent_dim},
                 {"pose_hidden", arch.pose_hidden},
                 {"depth_latent_channels", arch.depth_latent_channels},
                 {"residual_cardinality", arch.residual_cardinality},
                 {"negative_slope", arch.negative_slope}};
    j["data"] = {{"n_synthetic", data.n_synthetic},
                 {"n_real", data.n_real},
                 {"n_test", data.n_test},
                 {"label_fraction_m", data.label_fraction_m},
                 {"cube_size_mm", data.cube_size_mm},
                 {"seed", data_seed()},
                 {"synthetic_style", style_json(data.synthetic_style)},
                 {"real_style", style_json(data.real_style)}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"adam_beta1", train.adam_beta1},
                  {"adam_beta2", train.adam_beta2},
                  {"adam_epsilon", train.adam_epsilon},
                  {"phase1_iterations", train.phase1_iterations},
                  {"phase2_iterations", train.phase2_iterations},
                  {"phase3_iterations", train.phase3_iterations},
                  {"batch_p1", train.batch_p1},
                  {"batch_p2", train.batch_p2},
                  {"batch_p3", train.batch_p3},
                  {"label_fraction_m", train.label_fraction_m},
                  {"seed", train.seed},
                  {"augment", train.augment},
                  {"weights",
                   {{"lambda0", train.weights.lambda0},
                    {"lambda1", train.weights.lambda1},
                    {"lambda2", train.weights.lambda2},
                    {"lambda3", train.weights.lambda3},
                    {"lambda4", train.weights.lambda4},
                    {"lambda5", train.weights.lambda5},
                    {"lambda6", train.weights.lambda6},
                    {"lambda7", train.weights.lambda7},
                    {"lambda8", train.weights.lambda8},
                    {"fm_weight_phase2", train.weights.fm_weight_phase2}}}};
    return j.dump();
}

}  // namespace lsps
