#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lsps/core/depth_image.hpp"
#include "lsps/core/tensor.hpp"
#include "lsps/posekit/posekit.hpp"

namespace lsps {

enum class StyleKind { synthetic, real };

struct DomainStyle {
    StyleKind kind = StyleKind::synthetic;
    double noise_sigma = 0.0;        // normalized depth units
    double quantization_step = 0.0;  // normalized depth units
    double hole_probability = 0.0;   // per image
    double shape_scale = 1.0;        // multiplier on capsule radii
    double edge_jitter = 0.0;        // pixels

    void validate() const;
    static DomainStyle synthetic_default();
    static DomainStyle real_default();  // 0.02 / 0.01 / 0.3 / 1.08 / 1px
};

// Orthographic z-buffer over per-bone capsules, followed by the style's
// degradations in order: noise, quantization, holes, edge jitter.
DepthImage render_depth(const Pose& pose, const SkeletonSpec& spec, const DomainStyle& style,
                        uint64_t rng_seed, int resolution = 64, double cube_size = 300.0);

// Orthographic raw depth frame in millimeters. Pixel u spans lateral
// millimeters [origin_x + u*mm_per_px, origin_x + (u+1)*mm_per_px).
struct RawDepthFrame {
    int height = 0, width = 0;
    double mm_per_px = 1.0;
    double origin_x_mm = 0.0, origin_y_mm = 0.0;
    std::vector<double> depth_mm;
};

DepthImage crop_normalize(const RawDepthFrame& raw, const std::array<double, 3>& cube_center,
                          double cube_size, int out_resolution);

// Inverse of the crop's value map: lifts a normalized crop back into a raw
// frame whose lateral extent equals the cube.
RawDepthFrame to_raw_frame(const DepthImage& img, const std::array<double, 3>& cube_center,
                           double cube_size);

struct DatasetManifest {
    int schema_version = 1;
    uint64_t seed = 0;
    int resolution = 64;
    double cube_size_mm = 300.0;
    int n_synthetic = 0, n_real = 0, n_test = 0;
    double label_fraction_m = 0.0;  // percent
    SkeletonSpec skeleton;
    DomainStyle synthetic_style, real_style;

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

// In-memory dataset with audited accessors. Real-split labels are stored but
// reachable for training only through labeled_real(), which serves rows whose
// mask entry is true; evaluation reads go through the test split.
class DatasetArchive {
  public:
    struct Audit {
        long long synthetic_reads = 0;
        long long real_image_reads = 0;
        long long labeled_real_requests = 0;
        long long labeled_rows_served = 0;
        long long test_reads = 0;
    };

    const DatasetManifest& manifest() const { return manifest_; }

    const Tensor<float>& synthetic_images() const { ++audit_.synthetic_reads; return synth_images_; }
    const Tensor<float>& synthetic_poses() const { ++audit_.synthetic_reads; return synth_poses_; }
    const Tensor<float>& real_images() const { ++audit_.real_image_reads; return real_images_; }
    const Tensor<float>& test_images() const { ++audit_.test_reads; return test_images_; }
    const Tensor<float>& test_poses() const { ++audit_.test_reads; return test_poses_; }
    const std::vector<uint8_t>& label_mask() const { return label_mask_; }

    // Labeled (x_r, y_r) rows for the given visibility mask. Rows with a
    // false mask never leave the archive.
    std::pair<Tensor<float>, Tensor<float>> labeled_real(const std::vector<uint8_t>& mask) const;

    // Derived visibility mask for label-fraction sweeps on one archive:
    // uniform without replacement, size round(m% * N_r), keyed by (seed, m).
    std::vector<uint8_t> label_view(double m_percent) const;

    const Audit& audit() const { return audit_; }

    void save(const std::string& dir) const;
    static DatasetArchive load(const std::string& dir);

    friend DatasetArchive make_dataset(const SkeletonSpec& spec, const DomainStyle& synthetic,
                                       const DomainStyle& real, int n_s, int n_r, int n_test,
                                       double label_fraction_m, uint64_t seed, int resolution,
                                       double cube_size);

  private:
    DatasetManifest manifest_;
    Tensor<float> synth_images_, synth_poses_;
    Tensor<float> real_images_, real_labels_hidden_;
    Tensor<float> test_images_, test_poses_;
    std::vector<uint8_t> label_mask_;
    mutable Audit audit_;
};

DatasetArchive make_dataset(const SkeletonSpec& spec, const DomainStyle& synthetic,
                            const DomainStyle& real, int n_s, int n_r, int n_test,
                            double label_fraction_m, uint64_t seed, int resolution = 64,
                            double cube_size = 300.0);

// Uniform-without-replacement boolean mask with round(m% * n) true entries.
std::vector<uint8_t> draw_label_mask(int n, double m_percent, uint64_t seed,
                                     const std::string& tag, uint64_t salt = 0);

}  // namespace lsps
