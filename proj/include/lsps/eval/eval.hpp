#pragma once

#include <map>
#include <string>
#include <vector>

#include "lsps/models/bundle.hpp"
#include "lsps/posekit/posekit.hpp"
#include "lsps/synthgen/synthgen.hpp"
#include "lsps/trainer/trainer.hpp"

namespace lsps {

struct EvalReport {
    std::string kind;              // baseline kind or "checkpoint"
    std::string split = "test";
    uint64_t config_digest = 0;
    uint64_t seed = 0;
    double label_fraction_m = 0;
    double mean_joint_error_mm = 0;
    std::map<double, double> frames_within;  // threshold mm -> fraction
    std::vector<double> per_joint_errors_mm;  // evaluation joints only
    long long clip_events = 0;  // decoded pose values clipped to [-1.05, 1.05]
    std::string convention = "frames_within uses strict <";

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    void validate() const;
};

struct EvalConfig {
    std::vector<double> thresholds_mm = {10, 20, 30, 40, 50, 60, 70, 80};
    long long regressor_iterations = 10000;  // direct-regressor baselines
    int batch = 64;
};

enum class BaselineKind { synthetic_only, lsps_synthetic, lsps_semi, real_only };
std::string baseline_name(BaselineKind k);
BaselineKind baseline_from_name(const std::string& n);

// ---- metrics ----

// Per-frame, per-joint Euclidean errors in mm. Poses must be matched in frame
// count and joint count.
std::vector<std::vector<double>> joint_errors_mm(const std::vector<Pose>& preds,
                                                 const std::vector<Pose>& gts);
double mean_joint_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts);
// Fraction of frames whose maximum per-joint error is strictly below d_mm.
double frames_within(const std::vector<Pose>& preds, const std::vector<Pose>& gts, double d_mm);
std::vector<std::pair<double, double>> error_curve(const std::vector<Pose>& preds,
                                                   const std::vector<Pose>& gts,
                                                   const std::vector<double>& thresholds);

// ---- prediction ----

// G_y(P(x)) decoded to mm inside the crop cube; joints selected by eval_mask.
Pose predict_pose(Bundle<float>& bundle, const SkeletonSpec& spec, const DepthImage& image,
                  const std::array<double, 3>& cube_center, double cube_size);

// Batched variant over (N,1,res,res) rows; accumulates clip events.
std::vector<Pose> predict_poses(Bundle<float>& bundle, const SkeletonSpec& spec,
                                const Tensor<float>& images,
                                const std::array<double, 3>& cube_center, double cube_size,
                                int batch, long long* clip_events = nullptr);

// Decodes already-normalized pose rows (N,3J) to eval-mask Poses.
std::vector<Pose> decode_pose_rows(const SkeletonSpec& spec, const Tensor<float>& rows,
                                   const std::array<double, 3>& cube_center, double cube_size);

// ---- direct regressor (matched-capacity baseline) ----

struct Regressor {
    ArchConfig cfg;
    Manifest manifest;
    ParamStore<float> params;

    explicit Regressor(const ArchConfig& c);
    void init(uint64_t seed);
    // (N,1,res,res) -> (N, pose_latent_dim)
    Node<float>* forward(Graph<float>& g, Node<float>* x);
};

// Trains the regressor on (x, y) pairs with the posterior-regression loss
// against the frozen pose encoder's mean codes.
void train_regressor(Regressor& reg, Bundle<float>& bundle, const Tensor<float>& images,
                     const Tensor<float>& poses, const TrainConfig& cfg, long long iterations,
                     ProgressFn progress = nullptr);

// ---- baselines ----

EvalReport run_baseline(BaselineKind kind, const DatasetArchive& archive, const ArchConfig& arch,
                        const TrainConfig& train, const EvalConfig& eval, double label_m,
                        ProgressFn progress = nullptr);

// ---- generative artifacts ----

struct WalkPoint {
    Tensor<float> pose_row;  // normalized (3J)
    Tensor<float> image_s, image_r;  // (1,res,res)
};

// Endpoints plus `steps` interior points at t = i/(steps+1), decoded through
// G_y, G_s(M(z)), G_r(M(z)).
std::vector<WalkPoint> latent_walk(Bundle<float>& bundle, const Tensor<float>& y_a,
                                   const Tensor<float>& y_b, int steps);

struct PriorSamples {
    std::vector<WalkPoint> points;
    double bone_dev_mean_mm = 0;  // |actual - spec| bone length deviation
    double bone_dev_max_mm = 0;
};

PriorSamples sample_prior(Bundle<float>& bundle, const SkeletonSpec& spec, int n, uint64_t seed,
                          double cube_size);

// Mean-path translation of depth rows: encode in `from`, decode in `to`.
Tensor<float> translate_images(Bundle<float>& bundle, const Tensor<float>& images, Domain from,
                               Domain to, int batch);

void write_curve_csv(const std::string& path,
                     const std::vector<std::pair<double, double>>& curve);

}  // namespace lsps
