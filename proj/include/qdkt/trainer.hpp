#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qdkt/dataset.hpp"
#include "qdkt/graph.hpp"
#include "qdkt/model.hpp"

namespace qdkt {

struct TrainConfig {
    int K = 128;
    int H = 128;
    double lambda = 0.0;
    double dropout_p = 0.2;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 5.0; // global norm; <= 0 disables
    int epochs = 25;
    int batch_size = 32;
    int max_len = 200; // longer sequences are chunked into fresh-state windows
    uint64_t seed = 0;
};

struct AdamState {
    ParamSet m, v;
    int64_t step = 0;
    AdamState() = default;
    AdamState(int K, int H, int N) : m(K, H, N), v(K, H, N) {}
};

// Standard Adam with bias correction; the gradient is globally norm-clipped
// before it enters the moment estimates. Throws on non-finite gradients.
void adam_step(ParamSet& params, const ParamSet& grad, AdamState& state, const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;      // 1-based
    double total = 0.0; // data + lambda * penalty, mean per window
    double data = 0.0;
    double penalty = 0.0; // lambda-scaled, so total = data + penalty
};

struct TrainResult {
    ParamSet params;
    std::vector<EpochLog> log;
    int64_t optimizer_steps = 0;
};

// Trains on the given learners' sequences. wxv_init, when provided, seeds
// the embedding matrix (pretrained path); otherwise standard-normal entries.
// L is required when cfg.lambda > 0. Bit-reproducible for a fixed seed at
// any thread count.
TrainResult train(const Dataset& ds, const std::vector<int>& train_learners,
                  const TrainConfig& cfg, const Laplacian* L = nullptr,
                  const Eigen::MatrixXd* wxv_init = nullptr, int threads = 1);

inline TrainResult train(const Dataset& ds, const FoldSplit& fold, const TrainConfig& cfg,
                         const Laplacian* L = nullptr, const Eigen::MatrixXd* wxv_init = nullptr,
                         int threads = 1) {
    return train(ds, fold.train_learners, cfg, L, wxv_init, threads);
}

// Splits one sequence into consecutive max_len windows, each restarting from
// zero state; windows with fewer than two events carry no prediction target
// and are dropped. Shared by training and evaluation.
std::vector<LearnerSequence> chunk_sequence(const LearnerSequence& seq, int max_len);

void write_loss_log(const std::vector<EpochLog>& log, const std::string& path);

// Self-describing binary checkpoint; round-trips bitwise.
void save_checkpoint(const std::string& path, const ParamSet& params, const TrainConfig& cfg);
struct Checkpoint {
    ParamSet params;
    TrainConfig cfg;
};
Checkpoint load_checkpoint(const std::string& path);

} // namespace qdkt
