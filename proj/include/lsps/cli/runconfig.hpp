#pragma once

#include <cstdint>
#include <string>

#include "lsps/eval/eval.hpp"
#include "lsps/models/arch.hpp"
#include "lsps/synthgen/synthgen.hpp"
#include "lsps/trainer/trainer.hpp"

namespace lsps {

// One JSON document drives every subcommand. schema_version is required and
// unknown keys are rejected at every level.
struct RunConfig {
    int schema_version = 1;
    uint64_t seed = 1;

    ArchConfig arch;

    struct DataCfg {
        int n_synthetic = 4000;
        int n_real = 4000;
        int n_test = 512;
        double label_fraction_m = 0;
        double cube_size_mm = 300;
        uint64_t seed = 0;  // 0 → top-level seed
        DomainStyle synthetic_style = DomainStyle::synthetic_default();
        DomainStyle real_style = DomainStyle::real_default();
    } data;

    TrainConfig train;
    EvalConfig eval;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);

    // Canonical serialization of the reproducibility-relevant sections
    // (schema_version, seed, arch, data, train); basis of the config digest.
    std::string canonical() const;
    uint64_t digest() const { return config_digest(canonical()); }

    void validate() const;
    uint64_t data_seed() const { return data.seed ? data.seed : seed; }
};

}  // namespace lsps
