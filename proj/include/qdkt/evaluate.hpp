#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qdkt/dataset.hpp"
#include "qdkt/graph.hpp"
#include "qdkt/model.hpp"
#include "qdkt/skipgram.hpp"
#include "qdkt/trainer.hpp"

namespace qdkt {

enum class Variant {
    kDktSkill,     // skill-level baseline on joint-skill indices
    kQdktBase,     // question-level, random init, no regularizer
    kQdktReg,      // + Laplacian regularizer
    kQdktFasttext, // + pretrained embeddings instead
    kQdktFull,     // regularizer and pretrained embeddings
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct FoldReport {
    std::string variant;
    int k = 0;
    uint64_t seed = 0;
    std::vector<double> fold_auc;
    double mean = 0.0;
    double stddev = 0.0; // sample std across folds (k-1 denominator)
    std::string config_fingerprint;
};

// Walks each learner's windows and emits one (score, label) pair per
// predictable step: scores[t] estimates event t+1 of the window.
// score_fn(window) must return T-1 scores for a length-T window.
template <class ScoreFn>
void emit_prediction_pairs(const Dataset& ds, const std::vector<int>& learners, int max_len,
                           ScoreFn&& score_fn, std::vector<double>& scores,
                           std::vector<int>& labels) {
    for (int l : learners) {
        if (l < 0 || l >= ds.num_learners())
            throw std::out_of_range("emit_prediction_pairs: learner index out of range");
        for (const LearnerSequence& w : chunk_sequence(ds.sequences[l], max_len)) {
            const std::vector<double> s = score_fn(w);
            const int T = static_cast<int>(w.events.size());
            if (static_cast<int>(s.size()) != T - 1)
                throw std::invalid_argument("emit_prediction_pairs: scorer returned wrong count");
            for (int t = 0; t + 1 < T; ++t) {
                scores.push_back(s[t]);
                labels.push_back(w.events[t + 1].assessment);
            }
        }
    }
}

// Model predictions pooled over all test learners and timesteps (micro).
void evaluate_fold(const ParamSet& params, const Dataset& ds,
                   const std::vector<int>& test_learners, int max_len,
                   std::vector<double>& scores, std::vector<int>& labels);

struct CrossValidateOptions {
    int k = 5;
    double train_frac = 0.7;
    uint64_t seed = 0;
    Variant variant = Variant::kQdktBase;
    SkipgramConfig pretrain; // used by the fasttext variants; dim is forced to cfg.K
    int threads = 1;
};

// Per fold: split, optional pretraining on the fold's training learners,
// training, evaluation; one pooled AUC per fold, aggregated mean +- sample
// std. Folds own independent seed streams hash(seed, fold) and may run in
// parallel.
FoldReport cross_validate(const Dataset& ds, const TrainConfig& cfg,
                          const CrossValidateOptions& opts);

std::string fold_report_json(const FoldReport& report, const TrainConfig& cfg);
void write_fold_report(const FoldReport& report, const TrainConfig& cfg, const std::string& path);

// Fingerprint of the semantic experiment settings (FNV-1a over a canonical
// rendering); execution details such as thread count are excluded.
std::string config_fingerprint(const TrainConfig& cfg, Variant variant, int k, double train_frac);

} // namespace qdkt
