#include <algorithm>
#include <cmath>
#include <limits>

#include "lsps/core/rng.hpp"
#include "lsps/kernels/image.hpp"
#include "lsps/synthgen/synthgen.hpp"

namespace lsps {

void DomainStyle::validate() const {
    for (double v : {noise_sigma, quantization_step, hole_probability, shape_scale, edge_jitter})
        if (!std::isfinite(v) || v < 0) throw ConfigError("style parameters must be finite and >= 0");
    if (hole_probability > 1) throw ConfigError("hole_probability must be in [0,1]");
    if (shape_scale <= 0) throw ConfigError("shape_scale must be positive");
    if (kind == StyleKind::synthetic &&
        (noise_sigma != 0 || quantization_step != 0 || hole_probability != 0 ||
         shape_scale != 1 || edge_jitter != 0))
        throw ConfigError("synthetic style must have all degradations disabled");
}

DomainStyle DomainStyle::synthetic_default() { return DomainStyle{}; }

DomainStyle DomainStyle::real_default() {
    DomainStyle s;
    s.kind = StyleKind::real;
    s.noise_sigma = 0.02;
    s.quantization_step = 0.01;
    s.hole_probability = 0.3;
    s.shape_scale = 1.08;
    s.edge_jitter = 1.0;
    return s;
}

namespace {

struct Capsule {
    std::array<double, 3> a, b;
    double r;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

// First z at which the +z ray through (x, y) enters the capsule; the capsule
// solid is the union of two balls and a finite cylinder, so the entry is the
// minimum over the parts' entries.
double capsule_entry_z(const Capsule& c, double x, double y) {
    double best = kInf;
    const double r2 = c.r * c.r;
    for (const auto& e : {c.a, c.b}) {
        const double dx = x - e[0], dy = y - e[1];
        const double rho2 = dx * dx + dy * dy;
        if (rho2 <= r2) best = std::min(best, e[2] - std::sqrt(r2 - rho2));
    }
    const double Dx = c.b[0] - c.a[0], Dy = c.b[1] - c.a[1], Dz = c.b[2] - c.a[2];
    const double L2 = Dx * Dx + Dy * Dy + Dz * Dz;
    if (L2 > 0) {
        const double L = std::sqrt(L2);
        const double ux = Dx / L, uy = Dy / L, uz = Dz / L;
        const double px = x - c.a[0], py = y - c.a[1];
        const double k = px * ux + py * uy;
        const double A = 1.0 - uz * uz;
        if (A > 1e-12) {  // not parallel to the ray; parallel case is covered by the caps
            const double C = px * px + py * py - k * k - r2;
            const double disc = k * uz * k * uz - A * C;
            if (disc >= 0) {
                const double t = (k * uz - std::sqrt(disc)) / A;  // smaller root = entry
                const double s = k + t * uz;                      // axial coordinate
                if (s >= 0 && s <= L) best = std::min(best, c.a[2] + t);
            }
        }
    }
    return best;
}

}  // namespace

DepthImage render_depth(const Pose& pose, const SkeletonSpec& spec, const DomainStyle& style,
                        uint64_t rng_seed, int resolution, double cube_size) {
    spec.validate();
    style.validate();
    if (resolution <= 0 || cube_size <= 0) throw ConfigError("render: bad resolution/cube_size");
    if ((int)pose.joints.size() != spec.joint_count)
        throw ShapeError("render: pose joint count does not match skeleton");

    const double half = cube_size / 2.0;
    std::string outside;
    for (size_t j = 0; j < pose.joints.size(); ++j)
        if (std::abs(pose.joints[j][0]) > half || std::abs(pose.joints[j][1]) > half ||
            std::abs(pose.joints[j][2]) > half)
            outside += (outside.empty() ? "" : ", ") + std::to_string(j);
    if (!outside.empty()) throw DomainError("pose outside crop cube at joints: " + outside);

    std::vector<Capsule> caps;
    caps.reserve(pose.joints.size());
    const int rj = spec.root();
    caps.push_back({pose.joints[(size_t)rj], pose.joints[(size_t)rj],
                    spec.capsule_radii_mm[(size_t)rj] * style.shape_scale});
    for (int j = 0; j < spec.joint_count; ++j) {
        if (j == rj) continue;
        caps.push_back({pose.joints[(size_t)spec.parents[(size_t)j]], pose.joints[(size_t)j],
                        spec.capsule_radii_mm[(size_t)j] * style.shape_scale});
    }

    DepthImage img(resolution);
    const double mm_per_px = cube_size / resolution;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < resolution; ++v) {
        const double y = -half + (v + 0.5) * mm_per_px;
        for (int u = 0; u < resolution; ++u) {
            const double x = -half + (u + 0.5) * mm_per_px;
            double z = kInf;
            for (const auto& c : caps) z = std::min(z, capsule_entry_z(c, x, y));
            img.at(v, u) = z == kInf
                               ? 1.0f
                               : (float)std::min(1.0, std::max(-1.0, (z * 2.0) / cube_size));
        }
    }

    // Degradations, in a fixed order so streams replay exactly.
    if (style.noise_sigma > 0) {
        Rng rn = stream(rng_seed, "noise");
        for (auto& p : img.pixels)
            p = (float)std::min(
                1.0, std::max(-1.0, (double)p + style.noise_sigma * rn.normal()));
    }
    if (style.quantization_step > 0) {
        const double q = style.quantization_step;
        for (auto& p : img.pixels)
            p = (float)std::min(1.0, std::max(-1.0, std::round((double)p / q) * q));
    }
    if (style.hole_probability > 0) {
        Rng rh = stream(rng_seed, "hole");
        if (rh.bernoulli(style.hole_probability)) {
            int x0 = resolution, x1 = -1, y0 = resolution, y1 = -1;
            for (int v = 0; v < resolution; ++v)
                for (int u = 0; u < resolution; ++u)
                    if (img.at(v, u) < 0.9f) {
                        x0 = std::min(x0, u); x1 = std::max(x1, u);
                        y0 = std::min(y0, v); y1 = std::max(y1, v);
                    }
            if (x1 >= x0) {  // an ellipse of background over the silhouette
                const double cx = rh.uniform(x0, x1 + 1.0), cy = rh.uniform(y0, y1 + 1.0);
                const double ea = rh.uniform(resolution / 16.0, resolution / 6.0);
                const double eb = rh.uniform(resolution / 16.0, resolution / 6.0);
                const double phi = rh.uniform(0.0, M_PI);
                const double cph = std::cos(phi), sph = std::sin(phi);
                for (int v = 0; v < resolution; ++v)
                    for (int u = 0; u < resolution; ++u) {
                        const double dx = u + 0.5 - cx, dy = v + 0.5 - cy;
                        const double ax = (cph * dx + sph * dy) / ea;
                        const double ay = (-sph * dx + cph * dy) / eb;
                        if (ax * ax + ay * ay <= 1.0) img.at(v, u) = 1.0f;
                    }
            }
        }
    }
    if (style.edge_jitter > 0) {
        Rng rjit = stream(rng_seed, "jitter");
        const int jr = (int)std::ceil(style.edge_jitter);
        const std::vector<float> src = img.pixels;
        auto fg = [&](int v, int u) { return src[(size_t)v * resolution + u] < 0.9f; };
        for (int v = 0; v < resolution; ++v)
            for (int u = 0; u < resolution; ++u) {
                const bool f = fg(v, u);
                bool boundary = false;
                if (u > 0 && fg(v, u - 1) != f) boundary = true;
                if (u + 1 < resolution && fg(v, u + 1) != f) boundary = true;
                if (v > 0 && fg(v - 1, u) != f) boundary = true;
                if (v + 1 < resolution && fg(v + 1, u) != f) boundary = true;
                if (!boundary) continue;
                const int du = (int)rjit.uniform_int((uint64_t)(2 * jr + 1)) - jr;
                const int dv = (int)rjit.uniform_int((uint64_t)(2 * jr + 1)) - jr;
                const int su = std::min(resolution - 1, std::max(0, u + du));
                const int sv = std::min(resolution - 1, std::max(0, v + dv));
                img.at(v, u) = src[(size_t)sv * resolution + su];
            }
    }
    return img;
}

DepthImage crop_normalize(const RawDepthFrame& raw, const std::array<double, 3>& cube_center,
                          double cube_size, int out_resolution) {
    if (raw.height <= 0 || raw.width <= 0 ||
        raw.depth_mm.size() != (size_t)raw.height * raw.width)
        throw ShapeError("crop_normalize: raw frame storage mismatch");
    if (!(raw.mm_per_px > 0)) throw ConfigError("crop_normalize: mm_per_px must be positive");
    if (!(cube_size > 0) || out_resolution <= 0)
        throw ConfigError("crop_normalize: bad cube_size/resolution");

    const double half = cube_size / 2.0;
    const double rx0 = (cube_center[0] - half - raw.origin_x_mm) / raw.mm_per_px;
    const double rx1 = (cube_center[0] + half - raw.origin_x_mm) / raw.mm_per_px;
    const double ry0 = (cube_center[1] - half - raw.origin_y_mm) / raw.mm_per_px;
    const double ry1 = (cube_center[1] + half - raw.origin_y_mm) / raw.mm_per_px;
    if (rx1 <= 0 || ry1 <= 0 || rx0 >= raw.width || ry0 >= raw.height)
        throw DomainError("crop_normalize: crop cube does not intersect the raw frame");

    const double near = cube_center[2] - half, far = cube_center[2] + half;
    std::vector<double> buf((size_t)out_resolution * out_resolution);
    kern::resample_rect(raw.depth_mm.data(), raw.height, raw.width, rx0, ry0, rx1, ry1,
                        buf.data(), out_resolution, out_resolution, far);
    DepthImage img(out_resolution);
    for (size_t i = 0; i < buf.size(); ++i) {
        const double d = std::min(far, std::max(near, buf[i]));
        img.pixels[i] = (float)(((d - cube_center[2]) * 2.0) / cube_size);
    }
    return img;
}

RawDepthFrame to_raw_frame(const DepthImage& img, const std::array<double, 3>& cube_center,
                           double cube_size) {
    img.validate();
    RawDepthFrame raw;
    raw.height = raw.width = img.resolution;
    raw.mm_per_px = cube_size / img.resolution;
    raw.origin_x_mm = cube_center[0] - cube_size / 2.0;
    raw.origin_y_mm = cube_center[1] - cube_size / 2.0;
    raw.depth_mm.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i)
        raw.depth_mm[i] = cube_center[2] + (double)img.pixels[i] * (cube_size / 2.0);
    return raw;
}

}  // namespace lsps
