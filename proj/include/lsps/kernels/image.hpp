#pragma once

#include <cmath>
#include <vector>

// Image resampling helpers for preprocessing and augmentation. All functions
// work on single-channel row-major images and use double arithmetic
// internally so that identity mappings reproduce their input bitwise.

namespace lsps::kern {

// Bilinear sample with border fill. (sx, sy) are pixel-center coordinates:
// integer values hit pixel centers exactly.
template <typename T>
double bilinear_at(const T* img, int h, int w, double sx, double sy, double fill) {
    const int x0 = (int)std::floor(sx), y0 = (int)std::floor(sy);
    const double fx = sx - x0, fy = sy - y0;
    auto px = [&](int x, int y) -> double {
        if (x < 0 || x >= w || y < 0 || y >= h) return fill;
        return (double)img[(int64_t)y * w + x];
    };
    const double top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
    const double bot = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

// Resamples the axis-aligned source rectangle [rx0, rx1) x [ry0, ry1) (pixel
// units) onto a dst grid of (oh, ow). When the rectangle equals the full
// frame and sizes match, the result is a bitwise copy.
template <typename T>
void resample_rect(const T* src, int h, int w, double rx0, double ry0, double rx1, double ry1,
                   T* dst, int oh, int ow, double fill) {
    const double sx_step = (rx1 - rx0) / ow, sy_step = (ry1 - ry0) / oh;
    for (int oy = 0; oy < oh; ++oy) {
        const double sy = ry0 + (oy + 0.5) * sy_step - 0.5;
        for (int ox = 0; ox < ow; ++ox) {
            const double sx = rx0 + (ox + 0.5) * sx_step - 0.5;
            const double v = (sx == std::floor(sx) && sy == std::floor(sy) && sx >= 0 && sy >= 0 &&
                              sx < w && sy < h)
                                 ? (double)src[(int64_t)sy * w + (int64_t)sx]
                                 : bilinear_at(src, h, w, sx, sy, fill);
            dst[(int64_t)oy * ow + ox] = (T)v;
        }
    }
}

// In-plane rotation by theta radians about the image center plus a shift of
// (dx, dy) pixels, resampled bilinearly; out-of-frame samples read as fill.
// The forward map is q = R(theta) p + d, so sampling inverts it.
template <typename T>
void rotate_shift(const T* src, int res, double theta, double dx, double dy, T* dst, double fill) {
    const double c = std::cos(theta), s = std::sin(theta);
    const double ctr = 0.5 * (res - 1);
    for (int oy = 0; oy < res; ++oy)
        for (int ox = 0; ox < res; ++ox) {
            const double qx = ox - ctr - dx, qy = oy - ctr - dy;
            const double sx = c * qx + s * qy + ctr;
            const double sy = -s * qx + c * qy + ctr;
            double v;
            if (theta == 0.0 && dx == std::floor(dx) && dy == std::floor(dy)) {
                const int ix = ox - (int)dx, iy = oy - (int)dy;
                v = (ix >= 0 && ix < res && iy >= 0 && iy < res)
                        ? (double)src[(int64_t)iy * res + ix]
                        : fill;
            } else {
                v = bilinear_at(src, res, res, sx, sy, fill);
            }
            dst[(int64_t)oy * res + ox] = (T)v;
        }
}

template <typename T>
void mirror_h(const T* src, int h, int w, T* dst) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) dst[(int64_t)y * w + x] = src[(int64_t)y * w + (w - 1 - x)];
}

}  // namespace lsps::kern
