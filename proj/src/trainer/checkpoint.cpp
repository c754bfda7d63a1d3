#include <bit>
#include <cstring>

#include "json.hpp"
#include "lsps/core/io.hpp"
#include "lsps/trainer/trainer.hpp"

namespace lsps {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'P', 'S', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((uint8_t)(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back((uint8_t)(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& b, const Tensor<float>& t) {
    for (int64_t i = 0; i < t.numel(); ++i) put_u32(b, std::bit_cast<uint32_t>(t[i]));
}

uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (uint32_t)p[i] << (8 * i);
    return v;
}

uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t)p[i] << (8 * i);
    return v;
}

std::string hex_u64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
    return buf;
}

uint64_t parse_hex_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

uint64_t config_digest(const std::string& canonical_json) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canonical_json) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void save_checkpoint(const ParamStore<float>& params, const TrainState& state,
                     const CheckpointMeta& meta, const std::string& path) {
    nlohmann::json h;
    h["config_digest"] = hex_u64(meta.config_digest);
    h["phase"] = meta.phase;
    h["iteration"] = meta.iteration;
    h["seed"] = hex_u64(meta.seed);
    h["state"] = {{"phase", state.phase}, {"iteration", state.iteration}};
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& name : params.canonical_names())
        cells.push_back({{"name", name}, {"shape", params.cell(name).shape}});
    h["cells"] = std::move(cells);
    nlohmann::json adam = nlohmann::json::array();
    for (const auto& [group, ag] : state.adam) {
        std::vector<std::string> names;
        for (const auto& [n, t] : ag.m) names.push_back(n);
        adam.push_back({{"group", group}, {"t", ag.t}, {"cells", names}});
    }
    h["adam"] = std::move(adam);

    const std::string hdr = h.dump();
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 8);
    put_u32(buf, kVersion);
    put_u64(buf, (uint64_t)hdr.size());
    buf.insert(buf.end(), hdr.begin(), hdr.end());
    for (const auto& name : params.canonical_names()) put_f32(buf, params.cell(name));
    for (const auto& [group, ag] : state.adam)
        for (const auto& [n, m] : ag.m) {
            put_f32(buf, m);
            put_f32(buf, ag.v.at(n));
        }
    put_u32(buf, crc32(buf.data(), buf.size()));
    write_bytes_file(path, buf.data(), (int64_t)buf.size());
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::vector<uint8_t> buf = read_bytes_file(path);
    if (buf.size() < 8 + 4 + 8 + 4 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw ChecksumError("not a checkpoint file: " + path);
    if (get_u32(buf.data() + 8) != kVersion)
        throw ConfigError("unsupported checkpoint version in " + path);
    const uint32_t stored = get_u32(buf.data() + buf.size() - 4);
    if (crc32(buf.data(), buf.size() - 4) != stored)
        throw ChecksumError("checkpoint CRC mismatch: " + path);

    const uint64_t hlen = get_u64(buf.data() + 12);
    if (20 + hlen + 4 > buf.size()) throw ChecksumError("checkpoint truncated: " + path);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(buf.begin() + 20, buf.begin() + 20 + (size_t)hlen);
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError("checkpoint header unreadable: " + std::string(e.what()));
    }

    Checkpoint ck;
    try {
        ck.meta.config_digest = parse_hex_u64(h.at("config_digest").get<std::string>());
        ck.meta.phase = h.at("phase").get<int>();
        ck.meta.iteration = h.at("iteration").get<long long>();
        ck.meta.seed = parse_hex_u64(h.at("seed").get<std::string>());
        ck.state.phase = h.at("state").at("phase").get<int>();
        ck.state.iteration = h.at("state").at("iteration").get<long long>();

        size_t off = 20 + (size_t)hlen;
        auto take = [&](const std::vector<int>& shape) {
            Tensor<float> t(shape);
            if (off + 4 * (size_t)t.numel() > buf.size() - 4)
                throw ChecksumError("checkpoint truncated: " + path);
            for (int64_t i = 0; i < t.numel(); ++i, off += 4)
                t[i] = std::bit_cast<float>(get_u32(buf.data() + off));
            return t;
        };
        for (const auto& c : h.at("cells")) {
            const std::string name = c.at("name").get<std::string>();
            ck.cells.emplace(name, take(c.at("shape").get<std::vector<int>>()));
        }
        for (const auto& a : h.at("adam")) {
            AdamGroup ag;
            ag.t = a.at("t").get<long long>();
            for (const auto& n : a.at("cells")) {
                const std::string name = n.get<std::string>();
                auto it = ck.cells.find(name);
                if (it == ck.cells.end())
                    throw ChecksumError("checkpoint optimizer cell unknown: " + name);
                ag.m.emplace(name, take(it->second.shape));
                ag.v.emplace(name, take(it->second.shape));
            }
            ck.state.adam.emplace(a.at("group").get<std::string>(), std::move(ag));
        }
        if (off != buf.size() - 4) throw ChecksumError("checkpoint trailing bytes: " + path);
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError("checkpoint header malformed: " + std::string(e.what()));
    }
    return ck;
}

void apply_checkpoint(const Checkpoint& ck, ParamStore<float>& params) {
    const auto names = params.canonical_names();
    if (names.size() != ck.cells.size())
        throw ConfigError("checkpoint does not match model: cell count differs");
    for (const auto& name : names) {
        auto it = ck.cells.find(name);
        if (it == ck.cells.end())
            throw ConfigError("checkpoint does not match model: missing cell " + name);
        Tensor<float>& dst = params.cell(name);
        if (it->second.shape != dst.shape)
            throw ConfigError("checkpoint does not match model: shape differs for " + name);
        dst.data = it->second.data;
    }
}

}  // namespace lsps
