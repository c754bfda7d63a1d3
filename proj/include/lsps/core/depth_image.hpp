#pragma once

#include <cmath>
#include <vector>

#include "lsps/core/errors.hpp"

namespace lsps {

// Single-channel depth crop: row-major, near = -1, background = +1.
struct DepthImage {
    int resolution = 0;
    std::vector<float> pixels;

    DepthImage() = default;
    explicit DepthImage(int res, float fill = 1.0f)
        : resolution(res), pixels((size_t)res * res, fill) {}

    float& at(int y, int x) { return pixels[(size_t)y * resolution + x]; }
    float at(int y, int x) const { return pixels[(size_t)y * resolution + x]; }

    void validate() const {
        if (resolution <= 0 || pixels.size() != (size_t)resolution * resolution)
            throw ShapeError("depth image storage does not match resolution");
        for (float v : pixels)
            if (!(v >= -1.0f && v <= 1.0f))
                throw NumericError("depth image value outside [-1,1]");
    }
};

}  // namespace lsps
