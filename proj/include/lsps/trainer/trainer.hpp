#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lsps/losses/losses.hpp"
#include "lsps/models/bundle.hpp"
#include "lsps/synthgen/synthgen.hpp"

namespace lsps {

struct TrainConfig {
    LossWeights weights;
    double learning_rate = 0.0001;
    double adam_beta1 = 0.5, adam_beta2 = 0.999, adam_epsilon = 1e-8;
    long long phase1_iterations = 20000;  // paper scale: 200000
    long long phase2_iterations = 40000;  // paper scale: 500000
    long long phase3_iterations = 5000;   // paper scale: 50000
    int batch_p1 = 128;
    int batch_p2 = 16;  // per domain
    int batch_p3 = 32;
    // Percent of real labels visible. Negative = use the archive's stored
    // mask; otherwise a label_view(m) drawn from the archive seed.
    double label_fraction_m = -1.0;
    uint64_t seed = 1;
    int log_every = 50;
    bool augment = false;  // optional train-time augmentation (off by default)

    void validate() const;
    long long phase_iterations(int phase) const;
    int batch_size(int phase) const;
};

struct AdamGroup {
    long long t = 0;
    std::map<std::string, Tensor<float>> m, v;
};

// One Adam step over the graph's trainable parameters, writing back into the
// store. Throws NumericError if any gradient is non-finite (nothing updated).
void adam_update(AdamGroup& ag, Graph<float>& g, ParamStore<float>& ps, double lr, double beta1,
                 double beta2, double eps);

struct TrainState {
    int phase = 1;
    long long iteration = 0;  // completed iterations within the phase
    std::map<std::string, AdamGroup> adam;  // "main" or "d"/"g"
};

struct ProgressRow {
    int phase = 0;
    long long iteration = 0;
    double wall_s = 0;
    std::vector<std::pair<std::string, double>> terms;  // includes "total"
};
using ProgressFn = std::function<void(const ProgressRow&)>;

// Appends rows as CSV: phase,iteration,wall_s,term,value.
class ProgressCsv {
  public:
    explicit ProgressCsv(const std::string& path);
    void operator()(const ProgressRow& row);

  private:
    std::string path_;
};

struct TrainStats {
    long long d_steps = 0, g_steps = 0;
    long long map_r_evals = 0, pos_r_evals = 0;
    int visible_labels = 0;
};

class Trainer {
  public:
    Trainer(Bundle<float>& bundle, const DatasetArchive& archive, TrainConfig cfg);

    void set_progress(ProgressFn fn) { progress_ = std::move(fn); }
    // Where to write the last-finite checkpoint if training diverges.
    void set_divergence_checkpoint(const std::string& path, uint64_t config_digest);

    TrainState& state() { return state_; }
    const TrainStats& stats() const { return stats_; }
    const std::vector<uint8_t>& label_mask() const { return mask_; }

    // Runs `phase` from state().iteration to the configured count (or for at
    // most `max_iters` more iterations when non-negative). The state must be
    // at this phase or fresh from an earlier one.
    void run_phase(int phase, long long max_iters = -1);

  private:
    Bundle<float>& bundle_;
    const DatasetArchive& archive_;
    TrainConfig cfg_;
    TrainState state_;
    TrainStats stats_;
    ProgressFn progress_;
    std::string diverge_path_;
    uint64_t diverge_digest_ = 0;
    std::vector<uint8_t> mask_;
    Tensor<float> labeled_x_, labeled_y_;  // mask-selected pairs, fetched once
    std::map<std::string, int> counts_;    // noise-tag audit
    std::chrono::steady_clock::time_point start_;

    double wall_() const;
    Batch<float> make_batch(const char* s_tag, const char* r_tag, const char* rl_tag,
                            long long it, uint64_t sub, int bs, bool want_labeled);
    void adam_step(const std::string& group, Graph<float>& g);
    void phase1_iter(long long it);
    void phase2_iter(long long it);
    void phase3_iter(long long it);
    void log_row(int phase, long long it, double wall,
                 std::vector<std::pair<std::string, double>> terms);
    [[noreturn]] void diverge(int phase, long long it, const std::string& why);
};

// Convenience wrappers matching the phase contracts.
void train_phase1(Bundle<float>& b, const DatasetArchive& a, const TrainConfig& c, ProgressFn s);
void train_phase2(Bundle<float>& b, const DatasetArchive& a, const TrainConfig& c, ProgressFn s);
void train_phase3(Bundle<float>& b, const DatasetArchive& a, const TrainConfig& c, ProgressFn s);

// ---- checkpoints ----

struct CheckpointMeta {
    uint64_t config_digest = 0;
    int phase = 1;
    long long iteration = 0;
    uint64_t seed = 0;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::map<std::string, Tensor<float>> cells;
    TrainState state;
};

void save_checkpoint(const ParamStore<float>& params, const TrainState& state,
                     const CheckpointMeta& meta, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// Copies checkpoint cells into the store; names and shapes must match exactly.
void apply_checkpoint(const Checkpoint& ck, ParamStore<float>& params);

// FNV-1a over a canonical config string; stored in checkpoints and verified
// on load by callers that know their config.
uint64_t config_digest(const std::string& canonical_json);

}  // namespace lsps
