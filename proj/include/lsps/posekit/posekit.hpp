#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lsps/core/depth_image.hpp"
#include "lsps/core/errors.hpp"

namespace lsps {

struct SkeletonSpec {
    int joint_count = 0;
    std::vector<int> parents;  // root points at itself; children after parents
    std::vector<double> bone_lengths_mm;
    // Per joint, per rotation axis (x,y,z): {min,max} radians.
    std::vector<std::array<std::array<double, 2>, 3>> angle_limits_rad;
    std::vector<double> capsule_radii_mm;  // bone ending at the joint; root = wrist sphere
    std::vector<uint8_t> eval_mask;        // joints included in evaluation

    int root() const;
    void validate() const;
    int eval_joint_count() const;

    static SkeletonSpec default_hand();
    static SkeletonSpec load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_json() const;
    static SkeletonSpec from_json(const std::string& text);
};

enum class Handedness { left, right };

struct Pose {
    std::vector<std::array<double, 3>> joints;  // mm, crop-cube coordinates
    Handedness handedness = Handedness::right;
};

struct PoseVec {
    std::vector<double> values;  // 3J, in [-1,1]
    std::array<double, 3> cube_center{0.0, 0.0, 0.0};
    double cube_size = 300.0;
};

// Per-joint intrinsic rotations (x,y,z axes), applied before the joint's bone
// offset along local +x.
using JointAngles = std::vector<std::array<double, 3>>;

Pose forward_kinematics(const SkeletonSpec& spec, const JointAngles& angles);
Pose sample_pose(const SkeletonSpec& spec, uint64_t rng_seed);

PoseVec normalize_pose(const Pose& pose, const std::array<double, 3>& cube_center,
                       double cube_size);
Pose denormalize_pose(const PoseVec& vec);

struct Augmentation {
    double rotation_deg = 0.0;
    std::array<double, 3> translation_mm{0.0, 0.0, 0.0};
};

// In-plane rotation about the cube center plus 3-d translation, applied
// identically to the image (bilinear, background fill +1) and the pose.
std::pair<DepthImage, Pose> augment_pair(const DepthImage& depth, const Pose& pose,
                                         double rotation_deg,
                                         const std::array<double, 3>& translation_mm,
                                         uint64_t rng_seed, double cube_size = 300.0);

// Draws augmentation parameters uniformly within the given bounds.
Augmentation sample_augmentation(uint64_t seed, double max_rotation_deg = 180.0,
                                 double max_translation_mm = 10.0);

std::pair<DepthImage, Pose> flip_handedness(const DepthImage& depth, const Pose& pose);

}  // namespace lsps
