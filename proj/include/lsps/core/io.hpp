#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsps/core/tensor.hpp"

namespace lsps {

// Raw little-endian float32 files (no header; shape lives in the manifest).
void write_f32_file(const std::filesystem::path& path, const float* data, int64_t count);
std::vector<float> read_f32_file(const std::filesystem::path& path);
void read_f32_file_into(const std::filesystem::path& path, float* out, int64_t count);

void write_bytes_file(const std::filesystem::path& path, const uint8_t* data, int64_t count);
std::vector<uint8_t> read_bytes_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Binary PGM (P5), maxval 255. `pixels` is row-major, size w*h.
void write_pgm(const std::filesystem::path& path, const std::vector<uint8_t>& pixels, int w,
               int h);

// Maps depth values in [-1, 1] to gray (near = bright) and tiles images into a
// grid with a 2px separator. Each image is (res x res), row-major.
std::vector<uint8_t> depth_to_gray(const float* img, int count);
void write_depth_grid_pgm(const std::filesystem::path& path, const std::vector<const float*>& imgs,
                          int res, int cols);

uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

void ensure_dir(const std::filesystem::path& dir);

}  // namespace lsps
