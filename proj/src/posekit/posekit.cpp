#include "lsps/posekit/posekit.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lsps/core/io.hpp"
#include "lsps/core/rng.hpp"
#include "lsps/kernels/image.hpp"

namespace lsps {

using nlohmann::json;

int SkeletonSpec::root() const {
    for (int i = 0; i < joint_count; ++i)
        if (parents[(size_t)i] == i) return i;
    throw ConfigError("skeleton has no root joint");
}

void SkeletonSpec::validate() const {
    const size_t J = (size_t)joint_count;
    if (joint_count < 5) throw ConfigError("skeleton needs at least 5 joints");
    if (parents.size() != J || bone_lengths_mm.size() != J || angle_limits_rad.size() != J ||
        capsule_radii_mm.size() != J || eval_mask.size() != J)
        throw ConfigError("skeleton field lengths disagree with joint_count");
    int roots = 0;
    for (int i = 0; i < joint_count; ++i) {
        const int p = parents[(size_t)i];
        if (p == i) {
            ++roots;
            continue;
        }
        if (p < 0 || p >= joint_count || p > i)
            throw ConfigError("joint " + std::to_string(i) +
                              ": parent must precede it (tree order)");
        if (!(bone_lengths_mm[(size_t)i] > 0))
            throw ConfigError("joint " + std::to_string(i) + ": bone length must be positive");
    }
    if (roots != 1) throw ConfigError("skeleton must have exactly one root");
    for (int i = 0; i < joint_count; ++i) {
        for (int a = 0; a < 3; ++a) {
            const auto& lim = angle_limits_rad[(size_t)i][(size_t)a];
            if (!(lim[0] <= lim[1]))
                throw ConfigError("joint " + std::to_string(i) + ": angle limits min > max");
        }
        if (!(capsule_radii_mm[(size_t)i] > 0))
            throw ConfigError("joint " + std::to_string(i) + ": capsule radius must be positive");
    }
}

int SkeletonSpec::eval_joint_count() const {
    int n = 0;
    for (uint8_t m : eval_mask) n += m ? 1 : 0;
    return n;
}

SkeletonSpec SkeletonSpec::default_hand() {
    // Wrist plus five fingers of three joints each. Bones extend along local
    // +x; splay and flexion live in the angle limits. Chain reach stays below
    // ~135mm so every pose anchored at the wrist fits a 300mm crop cube.
    SkeletonSpec s;
    s.joint_count = 16;
    s.parents = {0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14};
    s.bone_lengths_mm = {0,  55, 30, 22,   // thumb
                         74, 30, 21,       // index
                         78, 32, 23,       // middle
                         73, 30, 21,       // ring
                         62, 26, 19};      // pinky
    const double splay[5] = {-0.55, -0.28, 0.0, 0.26, 0.52};
    s.angle_limits_rad.assign(16, {{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}});
    s.angle_limits_rad[0] = {{{-0.5, 0.5}, {-0.4, 0.4}, {-0.6, 0.6}}};
    for (int f = 0; f < 5; ++f) {
        const size_t base = (size_t)(1 + 3 * f);
        s.angle_limits_rad[base] = {{{0.0, 0.0}, {-1.1, 0.25}, {splay[f] - 0.18, splay[f] + 0.18}}};
        s.angle_limits_rad[base + 1] = {{{0.0, 0.0}, {-1.4, 0.1}, {-0.05, 0.05}}};
        s.angle_limits_rad[base + 2] = {{{0.0, 0.0}, {-1.1, 0.05}, {0.0, 0.0}}};
    }
    s.capsule_radii_mm = {16, 10, 7, 5.5, 11, 7, 5.5, 11, 7, 5.5, 11, 7, 5.5, 10, 6.5, 5};
    s.eval_mask.assign(16, 1);
    s.validate();
    return s;
}

std::string SkeletonSpec::to_json() const {
    json j;
    j["joint_count"] = joint_count;
    j["parents"] = parents;
    j["bone_lengths_mm"] = bone_lengths_mm;
    json lims = json::array();
    for (const auto& jl : angle_limits_rad) {
        json axes = json::array();
        for (const auto& ax : jl) axes.push_back({ax[0], ax[1]});
        lims.push_back(axes);
    }
    j["angle_limits_rad"] = lims;
    j["capsule_radii_mm"] = capsule_radii_mm;
    j["eval_mask"] = std::vector<int>(eval_mask.begin(), eval_mask.end());
    return j.dump(2);
}

SkeletonSpec SkeletonSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("skeleton JSON parse failure: ") + e.what());
    }
    SkeletonSpec s;
    try {
        s.joint_count = j.at("joint_count").get<int>();
        s.parents = j.at("parents").get<std::vector<int>>();
        s.bone_lengths_mm = j.at("bone_lengths_mm").get<std::vector<double>>();
        for (const auto& jl : j.at("angle_limits_rad")) {
            std::array<std::array<double, 2>, 3> axes{};
            for (int a = 0; a < 3; ++a) {
                axes[(size_t)a][0] = jl.at(a).at(0).get<double>();
                axes[(size_t)a][1] = jl.at(a).at(1).get<double>();
            }
            s.angle_limits_rad.push_back(axes);
        }
        s.capsule_radii_mm = j.at("capsule_radii_mm").get<std::vector<double>>();
        for (int v : j.at("eval_mask").get<std::vector<int>>()) s.eval_mask.push_back((uint8_t)(v ? 1 : 0));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("skeleton JSON field error: ") + e.what());
    }
    s.validate();
    return s;
}

SkeletonSpec SkeletonSpec::load(const std::string& path) {
    return from_json(read_text_file(path));
}

void SkeletonSpec::save(const std::string& path) const { write_text_file(path, to_json()); }

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
            c[i][j] = s;
        }
    return c;
}

std::array<double, 3> mat_apply(const Mat3& m, const std::array<double, 3>& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

// Intrinsic rotation R = Rz(az) * Ry(ay) * Rx(ax).
Mat3 rotation_xyz(double ax, double ay, double az) {
    const double cx = std::cos(ax), sx = std::sin(ax);
    const double cy = std::cos(ay), sy = std::sin(ay);
    const double cz = std::cos(az), sz = std::sin(az);
    const Mat3 Rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    const Mat3 Ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const Mat3 Rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    return mat_mul(Rz, mat_mul(Ry, Rx));
}

}  // namespace

Pose forward_kinematics(const SkeletonSpec& spec, const JointAngles& angles) {
    spec.validate();
    if ((int)angles.size() != spec.joint_count)
        throw ShapeError("forward_kinematics: angle count does not match joint count");
    for (int i = 0; i < spec.joint_count; ++i)
        for (int a = 0; a < 3; ++a) {
            const auto& lim = spec.angle_limits_rad[(size_t)i][(size_t)a];
            const double v = angles[(size_t)i][(size_t)a];
            if (v < lim[0] || v > lim[1]) {
                static const char* axis_names = "xyz";
                throw DomainError("joint " + std::to_string(i) + " axis " +
                                  std::string(1, axis_names[a]) + " angle " + std::to_string(v) +
                                  " outside limits [" + std::to_string(lim[0]) + ", " +
                                  std::to_string(lim[1]) + "]");
            }
        }

    Pose pose;
    pose.joints.assign((size_t)spec.joint_count, {0.0, 0.0, 0.0});
    std::vector<Mat3> frames((size_t)spec.joint_count);
    for (int i = 0; i < spec.joint_count; ++i) {
        const Mat3 R = rotation_xyz(angles[(size_t)i][0], angles[(size_t)i][1], angles[(size_t)i][2]);
        const int p = spec.parents[(size_t)i];
        if (p == i) {
            frames[(size_t)i] = R;
            pose.joints[(size_t)i] = {0.0, 0.0, 0.0};
        } else {
            frames[(size_t)i] = mat_mul(frames[(size_t)p], R);
            const std::array<double, 3> bone{spec.bone_lengths_mm[(size_t)i], 0.0, 0.0};
            const auto off = mat_apply(frames[(size_t)i], bone);
            for (int k = 0; k < 3; ++k)
                pose.joints[(size_t)i][(size_t)k] = pose.joints[(size_t)p][(size_t)k] + off[(size_t)k];
        }
    }
    return pose;
}

Pose sample_pose(const SkeletonSpec& spec, uint64_t rng_seed) {
    spec.validate();
    Rng rng = stream(rng_seed, "pose");
    JointAngles angles((size_t)spec.joint_count);
    for (int i = 0; i < spec.joint_count; ++i)
        for (int a = 0; a < 3; ++a) {
            const auto& lim = spec.angle_limits_rad[(size_t)i][(size_t)a];
            angles[(size_t)i][(size_t)a] = lim[0] == lim[1] ? lim[0] : rng.uniform(lim[0], lim[1]);
        }
    return forward_kinematics(spec, angles);
}

PoseVec normalize_pose(const Pose& pose, const std::array<double, 3>& cube_center,
                       double cube_size) {
    if (!(cube_size > 0)) throw ConfigError("cube_size must be positive");
    PoseVec v;
    v.cube_center = cube_center;
    v.cube_size = cube_size;
    v.values.resize(pose.joints.size() * 3);
    std::string outside;
    for (size_t j = 0; j < pose.joints.size(); ++j) {
        bool bad = false;
        for (int k = 0; k < 3; ++k) {
            const double n = (pose.joints[j][(size_t)k] - cube_center[(size_t)k]) * 2.0 / cube_size;
            v.values[3 * j + (size_t)k] = n;
            if (std::abs(n) > 1.0) bad = true;
        }
        if (bad) outside += (outside.empty() ? "" : ", ") + std::to_string(j);
    }
    if (!outside.empty()) throw DomainError("pose outside crop cube at joints: " + outside);
    return v;
}

Pose denormalize_pose(const PoseVec& vec) {
    if (vec.values.size() % 3 != 0) throw ShapeError("pose vector length must be divisible by 3");
    Pose p;
    p.joints.resize(vec.values.size() / 3);
    for (size_t j = 0; j < p.joints.size(); ++j)
        for (int k = 0; k < 3; ++k)
            p.joints[j][(size_t)k] =
                vec.cube_center[(size_t)k] + vec.values[3 * j + (size_t)k] * vec.cube_size / 2.0;
    return p;
}

std::pair<DepthImage, Pose> augment_pair(const DepthImage& depth, const Pose& pose,
                                         double rotation_deg,
                                         const std::array<double, 3>& translation_mm,
                                         uint64_t rng_seed, double cube_size) {
    (void)rng_seed;  // parameters are explicit; see sample_augmentation for draws
    if (std::abs(rotation_deg) > 180.0)
        throw DomainError("augmentation rotation exceeds 180 degrees");
    for (double t : translation_mm)
        if (std::abs(t) > 10.0) throw DomainError("augmentation translation exceeds 10mm");
    depth.validate();

    const double theta = rotation_deg * (M_PI / 180.0);
    const double c = std::cos(theta), s = std::sin(theta);
    Pose out_pose = pose;
    for (auto& jp : out_pose.joints) {
        const double x = jp[0], y = jp[1];
        jp[0] = c * x - s * y + translation_mm[0];
        jp[1] = s * x + c * y + translation_mm[1];
        jp[2] += translation_mm[2];
    }

    const int res = depth.resolution;
    const double mm_per_px = cube_size / res;
    DepthImage out_img(res);
    kern::rotate_shift(depth.pixels.data(), res, theta, translation_mm[0] / mm_per_px,
                       translation_mm[1] / mm_per_px, out_img.pixels.data(), 1.0);
    const double dz = 2.0 * translation_mm[2] / cube_size;
    if (dz != 0.0)
        for (auto& v : out_img.pixels)
            if (v < 1.0f)  // exact background stays background
                v = (float)std::min(1.0, std::max(-1.0, (double)v + dz));
    return {std::move(out_img), std::move(out_pose)};
}

Augmentation sample_augmentation(uint64_t seed, double max_rotation_deg,
                                 double max_translation_mm) {
    Rng rng = stream(seed, "augment");
    Augmentation a;
    a.rotation_deg = rng.uniform(-max_rotation_deg, max_rotation_deg);
    for (int k = 0; k < 3; ++k)
        a.translation_mm[(size_t)k] = rng.uniform(-max_translation_mm, max_translation_mm);
    return a;
}

std::pair<DepthImage, Pose> flip_handedness(const DepthImage& depth, const Pose& pose) {
    DepthImage img(depth.resolution);
    kern::mirror_h(depth.pixels.data(), depth.resolution, depth.resolution, img.pixels.data());
    Pose p = pose;
    for (auto& jp : p.joints) jp[0] = -jp[0];
    p.handedness = pose.handedness == Handedness::left ? Handedness::right : Handedness::left;
    return {std::move(img), std::move(p)};
}

}  // namespace lsps
