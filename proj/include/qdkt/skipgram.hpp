#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "qdkt/corpus.hpp"
#include "qdkt/dataset.hpp"

namespace qdkt {

// Trained subword vectors: one column per unit, where the units are the
// question parts, the assessment characters, and the whole tokens seen in
// the training corpus.
struct EmbeddingTable {
    int dim = 0;
    std::vector<std::string> units;
    std::unordered_map<std::string, int> index;
    Eigen::MatrixXd vectors; // dim x units.size()

    int find(const std::string& unit) const {
        auto it = index.find(unit);
        return it == index.end() ? -1 : it->second;
    }
    int intern(const std::string& unit);
};

struct SkipgramConfig {
    int dim = 64;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double lr = 0.05; // linearly decayed
    uint64_t seed = 0;
};

// Training internals exposed for diagnostics and tests.
struct SkipgramDiagnostics {
    std::vector<double> epoch_mean_loss;
    std::vector<std::string> tokens;  // whole-token vocabulary, corpus order
    Eigen::MatrixXd context_vectors;  // dim x tokens.size()
};

// Skip-gram with negative sampling over whole tokens, where a center token
// is represented by the sum of its three subword vectors; this shared
// structure is what links the two assessments of one question. Negatives
// are drawn from the unigram distribution raised to 0.75. Single-threaded
// and bit-reproducible for a fixed seed.
EmbeddingTable train_skipgram(const Corpus& corpus, const SkipgramConfig& cfg,
                              SkipgramDiagnostics* diag = nullptr);

// W_xv column for interaction (q, a) is the sum of the subword vectors
// {f(q), a, f(q)+a}; units never observed in the corpus contribute zero,
// except a missing question part, which is an error.
Eigen::MatrixXd build_wxv(const EmbeddingTable& table, const Dataset& ds, int K);

// As build_wxv, but questions absent from the table fall back to seeded
// standard-normal columns instead of failing; used by cross-validation
// where the table is trained on the fold's training split only.
Eigen::MatrixXd build_wxv_with_fallback(const EmbeddingTable& table, const Dataset& ds, int K,
                                        uint64_t seed);

// i.i.d. standard normal entries.
Eigen::MatrixXd random_init(int rows, int cols, uint64_t seed);

// Text format: "count dim" header, then one "unit v1 ... vK" line per unit
// at 17 significant digits (lossless for IEEE doubles).
void write_embedding_table(const EmbeddingTable& table, const std::string& path);
EmbeddingTable read_embedding_table(const std::string& path);

} // namespace qdkt
