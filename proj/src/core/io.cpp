#include "lsps/core/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "lsps/core/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw float files are little-endian; big-endian hosts are unsupported");
static_assert(sizeof(float) == 4);

namespace lsps {

namespace fs = std::filesystem;

void write_f32_file(const fs::path& path, const float* data, int64_t count) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(data), count * 4);
    if (!f) throw IoError("short write: " + path.string());
}

std::vector<float> read_f32_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::streamoff bytes = f.tellg();
    if (bytes % 4 != 0) throw IoError("file size not a multiple of 4: " + path.string());
    std::vector<float> out((size_t)(bytes / 4));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(out.data()), bytes);
    if (!f) throw IoError("short read: " + path.string());
    return out;
}

void read_f32_file_into(const fs::path& path, float* out, int64_t count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::streamoff bytes = f.tellg();
    if (bytes != count * 4)
        throw IoError("size mismatch for " + path.string() + ": expected " +
                      std::to_string(count * 4) + " bytes, found " + std::to_string((long long)bytes));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(out), bytes);
    if (!f) throw IoError("short read: " + path.string());
}

void write_bytes_file(const fs::path& path, const uint8_t* data, int64_t count) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(data), count);
    if (!f) throw IoError("short write: " + path.string());
}

std::vector<uint8_t> read_bytes_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::streamoff bytes = f.tellg();
    std::vector<uint8_t> out((size_t)bytes);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(out.data()), bytes);
    if (!f) throw IoError("short read: " + path.string());
    return out;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(text.data(), (std::streamsize)text.size());
    if (!f) throw IoError("short write: " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::streamoff bytes = f.tellg();
    std::string out((size_t)bytes, '\0');
    f.seekg(0);
    f.read(out.data(), bytes);
    if (!f) throw IoError("short read: " + path.string());
    return out;
}

void write_pgm(const fs::path& path, const std::vector<uint8_t>& pixels, int w, int h) {
    if ((int64_t)pixels.size() != (int64_t)w * h)
        throw ShapeError("pgm pixel count does not match dimensions");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), (std::streamsize)pixels.size());
    if (!f) throw IoError("short write: " + path.string());
}

std::vector<uint8_t> depth_to_gray(const float* img, int count) {
    std::vector<uint8_t> out((size_t)count);
    for (int i = 0; i < count; ++i) {
        // [-1,1] -> [255,0]: near surfaces render bright, background dark.
        double v = (1.0 - (double)std::clamp(img[i], -1.0f, 1.0f)) * 0.5;
        out[(size_t)i] = (uint8_t)std::lround(v * 255.0);
    }
    return out;
}

void write_depth_grid_pgm(const fs::path& path, const std::vector<const float*>& imgs, int res,
                          int cols) {
    if (imgs.empty()) throw ShapeError("empty image grid");
    if (cols <= 0) cols = (int)imgs.size();
    const int sep = 2;
    int rows = ((int)imgs.size() + cols - 1) / cols;
    int w = cols * res + (cols - 1) * sep;
    int h = rows * res + (rows - 1) * sep;
    std::vector<uint8_t> canvas((size_t)w * h, 255);
    for (int i = 0; i < (int)imgs.size(); ++i) {
        int r = i / cols, c = i % cols;
        int y0 = r * (res + sep), x0 = c * (res + sep);
        std::vector<uint8_t> gray = depth_to_gray(imgs[(size_t)i], res * res);
        for (int y = 0; y < res; ++y)
            std::memcpy(&canvas[(size_t)(y0 + y) * w + x0], &gray[(size_t)y * res], (size_t)res);
    }
    write_pgm(path, canvas, w, h);
}

namespace {
std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}
}  // namespace

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
    static const std::array<uint32_t, 256> table = make_crc_table();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir))
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace lsps
