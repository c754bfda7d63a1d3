#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "lsps/core/rng.hpp"
#include "lsps/posekit/posekit.hpp"

using namespace lsps;

namespace {

// Minimal chain skeleton: root plus `n-1` bones along +x, generous limits.
SkeletonSpec chain_spec(const std::vector<double>& bones) {
    SkeletonSpec s;
    s.joint_count = (int)bones.size();
    for (int i = 0; i < s.joint_count; ++i) {
        s.parents.push_back(i == 0 ? 0 : i - 1);
        s.bone_lengths_mm.push_back(bones[(size_t)i]);
        s.angle_limits_rad.push_back({{{-3.2, 3.2}, {-3.2, 3.2}, {-3.2, 3.2}}});
        s.capsule_radii_mm.push_back(5.0);
        s.eval_mask.push_back(1);
    }
    // validate() wants J >= 5; pad with zero-length leaves hanging off the tip
    while (s.joint_count < 5) {
        s.parents.push_back(s.joint_count - 1);
        s.bone_lengths_mm.push_back(1.0);
        s.angle_limits_rad.push_back({{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}});
        s.capsule_radii_mm.push_back(1.0);
        s.eval_mask.push_back(0);
        ++s.joint_count;
    }
    return s;
}

JointAngles zero_angles(const SkeletonSpec& s) {
    return JointAngles((size_t)s.joint_count, {0.0, 0.0, 0.0});
}

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                     (a[2] - b[2]) * (a[2] - b[2]));
}

// Independent forward-kinematics oracle via explicit 4x4 homogeneous matrices.
using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 m4_identity() {
    Mat4 m{};
    for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
    return m;
}

Mat4 m4_mul(const Mat4& a, const Mat4& b) {
    Mat4 c{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat4 m4_rot_x(double a) {
    Mat4 m = m4_identity();
    m[1][1] = std::cos(a);
    m[1][2] = -std::sin(a);
    m[2][1] = std::sin(a);
    m[2][2] = std::cos(a);
    return m;
}

Mat4 m4_rot_y(double a) {
    Mat4 m = m4_identity();
    m[0][0] = std::cos(a);
    m[0][2] = std::sin(a);
    m[2][0] = -std::sin(a);
    m[2][2] = std::cos(a);
    return m;
}

Mat4 m4_rot_z(double a) {
    Mat4 m = m4_identity();
    m[0][0] = std::cos(a);
    m[0][1] = -std::sin(a);
    m[1][0] = std::sin(a);
    m[1][1] = std::cos(a);
    return m;
}

Mat4 m4_trans(double x, double y, double z) {
    Mat4 m = m4_identity();
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    return m;
}

std::vector<std::array<double, 3>> fk_oracle(const SkeletonSpec& spec, const JointAngles& ang) {
    std::vector<Mat4> M((size_t)spec.joint_count);
    std::vector<std::array<double, 3>> out((size_t)spec.joint_count);
    for (int i = 0; i < spec.joint_count; ++i) {
        const Mat4 R = m4_mul(m4_rot_z(ang[(size_t)i][2]),
                              m4_mul(m4_rot_y(ang[(size_t)i][1]), m4_rot_x(ang[(size_t)i][0])));
        const int p = spec.parents[(size_t)i];
        const Mat4 local = m4_mul(R, m4_trans(spec.bone_lengths_mm[(size_t)i], 0.0, 0.0));
        M[(size_t)i] = (p == i) ? m4_mul(R, m4_trans(0, 0, 0)) : m4_mul(M[(size_t)p], local);
        out[(size_t)i] = {M[(size_t)i][0][3], M[(size_t)i][1][3], M[(size_t)i][2][3]};
    }
    return out;
}

JointAngles random_angles(const SkeletonSpec& spec, uint64_t seed) {
    Rng rng(seed);
    JointAngles ang((size_t)spec.joint_count);
    for (int i = 0; i < spec.joint_count; ++i)
        for (int a = 0; a < 3; ++a) {
            const auto& lim = spec.angle_limits_rad[(size_t)i][(size_t)a];
            ang[(size_t)i][(size_t)a] = rng.uniform(lim[0], lim[1]);
        }
    return ang;
}

}  // namespace

TEST_CASE("forward kinematics: straight chain at zero angles") {
    auto spec = chain_spec({0.0, 40.0, 30.0});
    auto pose = forward_kinematics(spec, zero_angles(spec));
    CHECK(pose.joints[0] == std::array<double, 3>{0, 0, 0});
    CHECK(pose.joints[1] == std::array<double, 3>{40, 0, 0});
    CHECK(pose.joints[2] == std::array<double, 3>{70, 0, 0});
}

TEST_CASE("forward kinematics: quarter turn about z") {
    auto spec = chain_spec({0.0, 40.0});
    auto ang = zero_angles(spec);
    ang[1][2] = M_PI / 2.0;
    auto pose = forward_kinematics(spec, ang);
    CHECK(std::abs(pose.joints[1][0] - 0.0) < 1e-9);
    CHECK(std::abs(pose.joints[1][1] - 40.0) < 1e-9);
    CHECK(std::abs(pose.joints[1][2] - 0.0) < 1e-9);
}

TEST_CASE("forward kinematics matches the matrix-chain oracle") {
    auto spec = SkeletonSpec::default_hand();
    REQUIRE(spec.joint_count == 16);
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto ang = random_angles(spec, seed);
        auto pose = forward_kinematics(spec, ang);
        auto want = fk_oracle(spec, ang);
        double worst = 0;
        for (int j = 0; j < spec.joint_count; ++j)
            worst = std::max(worst, dist3(pose.joints[(size_t)j], want[(size_t)j]));
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("forward kinematics preserves bone lengths") {
    auto spec = SkeletonSpec::default_hand();
    for (uint64_t seed : {11u, 12u, 13u}) {
        auto pose = forward_kinematics(spec, random_angles(spec, seed));
        for (int j = 0; j < spec.joint_count; ++j) {
            const int p = spec.parents[(size_t)j];
            if (p == j) continue;
            CHECK(std::abs(dist3(pose.joints[(size_t)j], pose.joints[(size_t)p]) -
                           spec.bone_lengths_mm[(size_t)j]) < 1e-6);
        }
    }
}

TEST_CASE("forward kinematics rejects out-of-limit angles naming the joint") {
    auto spec = SkeletonSpec::default_hand();
    auto ang = random_angles(spec, 17);
    ang[3][1] = 100.0;
    CHECK_THROWS_WITH_AS(forward_kinematics(spec, ang), doctest::Contains("joint 3"),
                         DomainError);
}

TEST_CASE("sample_pose is deterministic per seed") {
    auto spec = SkeletonSpec::default_hand();
    auto a = sample_pose(spec, 99), b = sample_pose(spec, 99), c = sample_pose(spec, 100);
    CHECK(a.joints == b.joints);
    CHECK(a.joints != c.joints);
}

TEST_CASE("sample_pose with zero-width limits is the constant limit pose") {
    auto spec = chain_spec({0.0, 25.0, 25.0});
    for (auto& lims : spec.angle_limits_rad)
        lims = {{{0.3, 0.3}, {-0.1, -0.1}, {0.7, 0.7}}};
    JointAngles fixed((size_t)spec.joint_count, {0.3, -0.1, 0.7});
    auto want = forward_kinematics(spec, fixed);
    for (uint64_t seed : {5u, 6u, 7u}) {
        auto got = sample_pose(spec, seed);
        for (int j = 0; j < spec.joint_count; ++j)
            CHECK(dist3(got.joints[(size_t)j], want.joints[(size_t)j]) < 1e-12);
    }
}

TEST_CASE("sample_pose angles are uniform within limits") {
    // z-rotation only on one joint so the angle is recoverable from the pose
    auto spec = chain_spec({0.0, 50.0});
    for (auto& lims : spec.angle_limits_rad) lims = {{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}};
    const double lo = -1.0, hi = 2.0;
    spec.angle_limits_rad[1] = {{{0.0, 0.0}, {0.0, 0.0}, {lo, hi}}};

    const int n = 10000;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        auto pose = sample_pose(spec, (uint64_t)i);
        const double a = std::atan2(pose.joints[1][1], pose.joints[1][0]);
        REQUIRE(a >= lo - 1e-12);
        REQUIRE(a <= hi + 1e-12);
        sum += a;
    }
    const double mean = sum / n;
    const double se = (hi - lo) / std::sqrt(12.0 * n);
    CHECK(std::abs(mean - 0.5 * (lo + hi)) < 3.0 * se);
}

TEST_CASE("normalize_pose basics") {
    Pose p;
    p.joints = {{10.0, -20.0, 5.0}};
    auto v = normalize_pose(p, {10.0, -20.0, 5.0}, 300.0);
    CHECK(v.values == std::vector<double>{0.0, 0.0, 0.0});

    p.joints = {{160.0, -20.0, 5.0}};
    v = normalize_pose(p, {10.0, -20.0, 5.0}, 300.0);
    CHECK(v.values[0] == doctest::Approx(1.0));

    p.joints = {{200.0, 0.0, 0.0}};
    CHECK_THROWS_WITH_AS(normalize_pose(p, {0.0, 0.0, 0.0}, 300.0),
                         doctest::Contains("joints: 0"), DomainError);
    CHECK_THROWS_AS(normalize_pose(p, {0.0, 0.0, 0.0}, 0.0), ConfigError);
}

TEST_CASE("normalize/denormalize round-trips within 1e-6 mm") {
    auto spec = SkeletonSpec::default_hand();
    for (uint64_t seed : {21u, 22u, 23u}) {
        auto pose = sample_pose(spec, seed);
        auto vec = normalize_pose(pose, {0.0, 0.0, 0.0}, 300.0);
        for (double x : vec.values) {
            CHECK(x >= -1.0);
            CHECK(x <= 1.0);
        }
        auto back = denormalize_pose(vec);
        REQUIRE(back.joints.size() == pose.joints.size());
        for (size_t j = 0; j < pose.joints.size(); ++j)
            CHECK(dist3(back.joints[j], pose.joints[j]) < 1e-6);
    }
}

TEST_CASE("augment_pair identity leaves image and pose untouched") {
    DepthImage img(16);
    Rng rng(31);
    for (auto& v : img.pixels) v = (float)rng.uniform(-1.0, 1.0);
    Pose pose;
    pose.joints = {{10.0, 20.0, -5.0}, {0.0, 1.0, 2.0}};
    auto [img2, pose2] = augment_pair(img, pose, 0.0, {0.0, 0.0, 0.0}, 1);
    CHECK(img2.pixels == img.pixels);
    CHECK(pose2.joints == pose.joints);
}

TEST_CASE("augment_pair rotation by 180 twice restores the pose") {
    DepthImage img(16);
    Pose pose;
    pose.joints = {{12.0, -34.0, 56.0}, {-7.0, 8.0, -9.0}};
    auto [i1, p1] = augment_pair(img, pose, 180.0, {0.0, 0.0, 0.0}, 1);
    auto [i2, p2] = augment_pair(i1, p1, 180.0, {0.0, 0.0, 0.0}, 2);
    for (size_t j = 0; j < pose.joints.size(); ++j)
        CHECK(dist3(p2.joints[j], pose.joints[j]) < 1e-6);
}

TEST_CASE("augment_pair rotates the depth minimum about the image center") {
    const int res = 33;  // odd: center falls on a pixel
    DepthImage img(res);
    const int cx = 16, cy = 16;
    const int bx = cx + 10, by = cy + 4;
    // small dark blob; unique minimum at (bx, by)
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            img.at(by + dy, bx + dx) = dx == 0 && dy == 0 ? -0.9f : -0.4f;

    auto [rot, pose2] = augment_pair(img, Pose{{{0, 0, 0}}, Handedness::right}, 90.0,
                                     {0.0, 0.0, 0.0}, 1);
    int mi = 0;
    for (int i = 1; i < res * res; ++i)
        if (rot.pixels[(size_t)i] < rot.pixels[(size_t)mi]) mi = i;
    const int my = mi / res, mx = mi % res;
    // forward map q = R(90) p: offset (10,4) -> (-4,10)
    CHECK(std::abs(mx - (cx - 4)) <= 1);
    CHECK(std::abs(my - (cy + 10)) <= 1);
}

TEST_CASE("augment_pair bounds") {
    DepthImage img(8);
    Pose pose;
    pose.joints = {{0, 0, 0}};
    CHECK_THROWS_AS(augment_pair(img, pose, 181.0, {0, 0, 0}, 1), DomainError);
    CHECK_THROWS_AS(augment_pair(img, pose, 0.0, {0, 0, 11.0}, 1), DomainError);
}

TEST_CASE("sample_augmentation is deterministic and bounded") {
    auto a = sample_augmentation(7), b = sample_augmentation(7), c = sample_augmentation(8);
    CHECK(a.rotation_deg == b.rotation_deg);
    CHECK(a.translation_mm == b.translation_mm);
    CHECK(a.rotation_deg != c.rotation_deg);
    for (uint64_t s = 0; s < 200; ++s) {
        auto g = sample_augmentation(s);
        CHECK(std::abs(g.rotation_deg) <= 180.0);
        for (double t : g.translation_mm) CHECK(std::abs(t) <= 10.0);
    }
}

TEST_CASE("flip_handedness is an involution and negates x") {
    DepthImage img(8);
    Rng rng(41);
    for (auto& v : img.pixels) v = (float)rng.uniform(-1.0, 1.0);
    Pose pose;
    pose.joints = {{37.0, 5.0, -2.0}, {-1.0, 0.0, 3.0}};
    pose.handedness = Handedness::right;

    auto [i1, p1] = flip_handedness(img, pose);
    CHECK(p1.joints[0][0] == -37.0);
    CHECK(p1.joints[0][1] == 5.0);
    CHECK(p1.joints[0][2] == -2.0);
    CHECK(p1.handedness == Handedness::left);

    auto [i2, p2] = flip_handedness(i1, p1);
    CHECK(i2.pixels == img.pixels);
    CHECK(p2.joints == pose.joints);
    CHECK(p2.handedness == Handedness::right);

    // symmetric scene is unchanged
    DepthImage sym(8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) {
            const float v = -0.1f * (float)(x + y);
            sym.at(y, x) = v;
            sym.at(y, 7 - x) = v;
        }
    auto [s1, sp] = flip_handedness(sym, pose);
    CHECK(s1.pixels == sym.pixels);
}

TEST_CASE("augment and flip commute with normalize_pose as affine maps on the vector") {
    auto spec = SkeletonSpec::default_hand();
    auto pose = sample_pose(spec, 51);
    const double cs = 300.0;
    DepthImage img(16);

    const double deg = 37.0, th = deg * M_PI / 180.0;
    const std::array<double, 3> t{3.0, -4.0, 5.0};
    auto [ai, ap] = augment_pair(img, pose, deg, t, 1, cs);
    auto va = normalize_pose(ap, {0, 0, 0}, cs);
    auto v0 = normalize_pose(pose, {0, 0, 0}, cs);
    for (size_t j = 0; j < pose.joints.size(); ++j) {
        const double x = v0.values[3 * j], y = v0.values[3 * j + 1], z = v0.values[3 * j + 2];
        CHECK(va.values[3 * j] ==
              doctest::Approx(std::cos(th) * x - std::sin(th) * y + t[0] * 2.0 / cs).epsilon(1e-9));
        CHECK(va.values[3 * j + 1] ==
              doctest::Approx(std::sin(th) * x + std::cos(th) * y + t[1] * 2.0 / cs).epsilon(1e-9));
        CHECK(va.values[3 * j + 2] == doctest::Approx(z + t[2] * 2.0 / cs).epsilon(1e-9));
    }

    auto [fi, fp] = flip_handedness(img, pose);
    auto vf = normalize_pose(fp, {0, 0, 0}, cs);
    for (size_t j = 0; j < pose.joints.size(); ++j) {
        CHECK(vf.values[3 * j] == doctest::Approx(-v0.values[3 * j]).epsilon(1e-12));
        CHECK(vf.values[3 * j + 1] == v0.values[3 * j + 1]);
        CHECK(vf.values[3 * j + 2] == v0.values[3 * j + 2]);
    }
}

TEST_CASE("skeleton spec json round-trip and validation") {
    auto spec = SkeletonSpec::default_hand();
    spec.validate();
    auto back = SkeletonSpec::from_json(spec.to_json());
    CHECK(back.joint_count == spec.joint_count);
    CHECK(back.parents == spec.parents);
    CHECK(back.bone_lengths_mm == spec.bone_lengths_mm);
    CHECK(back.angle_limits_rad == spec.angle_limits_rad);
    CHECK(back.capsule_radii_mm == spec.capsule_radii_mm);
    CHECK(back.eval_mask == spec.eval_mask);

    auto file = std::string("/tmp/lsps_test_skel.json");
    spec.save(file);
    auto loaded = SkeletonSpec::load(file);
    CHECK(loaded.parents == spec.parents);
    std::remove(file.c_str());

    auto bad = spec;
    bad.bone_lengths_mm[3] = -1.0;
    CHECK_THROWS(bad.validate());
    bad = spec;
    bad.angle_limits_rad[2][1] = {1.0, -1.0};
    CHECK_THROWS(bad.validate());
    bad = spec;
    bad.parents[4] = 20;
    CHECK_THROWS(bad.validate());
}
