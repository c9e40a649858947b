#include "qdkt/skipgram.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qdkt/rng.hpp"

namespace qdkt {

int EmbeddingTable::intern(const std::string& unit) {
    auto it = index.find(unit);
    if (it != index.end()) return it->second;
    int idx = static_cast<int>(units.size());
    units.push_back(unit);
    index.emplace(unit, idx);
    return idx;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Vocab {
    std::vector<std::string> tokens;
    std::vector<int64_t> counts;
    std::unordered_map<std::string, int> index;

    int intern(const std::string& tok) {
        auto it = index.find(tok);
        if (it != index.end()) {
            ++counts[it->second];
            return it->second;
        }
        int idx = static_cast<int>(tokens.size());
        tokens.push_back(tok);
        counts.push_back(1);
        index.emplace(tok, idx);
        return idx;
    }
};

} // namespace

EmbeddingTable train_skipgram(const Corpus& corpus, const SkipgramConfig& cfg,
                              SkipgramDiagnostics* diag) {
    if (cfg.dim < 2) throw std::invalid_argument("train_skipgram: dim must be >= 2");
    if (cfg.window < 1 || cfg.negatives < 0 || cfg.epochs < 0)
        throw std::invalid_argument("train_skipgram: bad window/negatives/epochs");

    // Token vocabulary and per-token subword ids, in corpus order.
    Vocab vocab;
    std::vector<std::vector<int>> sentences;
    sentences.reserve(corpus.sentences.size());
    int64_t total_positions = 0;
    for (const auto& sent : corpus.sentences) {
        std::vector<int> ids;
        ids.reserve(sent.size());
        for (const auto& tok : sent) ids.push_back(vocab.intern(tok));
        total_positions += static_cast<int64_t>(ids.size());
        sentences.push_back(std::move(ids));
    }
    if (total_positions == 0) throw std::invalid_argument("train_skipgram: empty corpus");

    const int V = static_cast<int>(vocab.tokens.size());
    EmbeddingTable table;
    table.dim = cfg.dim;
    std::vector<std::array<int, 3>> subword_ids(V);
    for (int w = 0; w < V; ++w) {
        const Subwords sw = extract_subwords(vocab.tokens[w]);
        subword_ids[w] = {table.intern(sw.question), table.intern(sw.assessment),
                          table.intern(sw.whole)};
    }
    const int U = static_cast<int>(table.units.size());

    Rng rng(cfg.seed);
    table.vectors.resize(cfg.dim, U);
    for (int u = 0; u < U; ++u)
        for (int d = 0; d < cfg.dim; ++d)
            table.vectors(d, u) = rng.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim);
    Eigen::MatrixXd context = Eigen::MatrixXd::Zero(cfg.dim, V);

    // Cumulative unigram^0.75 distribution; negatives sampled by binary search.
    std::vector<double> cumulative(V);
    double mass = 0.0;
    for (int w = 0; w < V; ++w) {
        mass += std::pow(static_cast<double>(vocab.counts[w]), 0.75);
        cumulative[w] = mass;
    }
    auto sample_negative = [&]() {
        const double x = rng.uniform() * mass;
        return static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(), x) -
                                cumulative.begin());
    };

    const int64_t total_budget = std::max<int64_t>(1, total_positions * std::max(cfg.epochs, 1));
    int64_t processed = 0;
    Eigen::VectorXd h(cfg.dim), dh(cfg.dim);
    if (diag) diag->epoch_mean_loss.assign(cfg.epochs, 0.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int64_t epoch_pairs = 0;
        for (const auto& sent : sentences) {
            const int slen = static_cast<int>(sent.size());
            for (int pos = 0; pos < slen; ++pos) {
                const double lr =
                    cfg.lr * std::max(1e-4, 1.0 - static_cast<double>(processed) / total_budget);
                ++processed;
                const int center = sent[pos];
                const auto& sw = subword_ids[center];
                h = table.vectors.col(sw[0]) + table.vectors.col(sw[1]) +
                    table.vectors.col(sw[2]);

                const int win = 1 + static_cast<int>(rng.uniform_int(cfg.window));
                for (int off = -win; off <= win; ++off) {
                    const int cpos = pos + off;
                    if (off == 0 || cpos < 0 || cpos >= slen) continue;
                    const int target = sent[cpos];
                    dh.setZero();
                    for (int k = 0; k <= cfg.negatives; ++k) {
                        int ctx;
                        double label;
                        if (k == 0) {
                            ctx = target;
                            label = 1.0;
                        } else {
                            ctx = sample_negative();
                            if (ctx == target) continue;
                            label = 0.0;
                        }
                        const double score = sigmoid(context.col(ctx).dot(h));
                        if (diag)
                            epoch_loss -= std::log(std::max(
                                1e-300, label == 1.0 ? score : 1.0 - score));
                        const double g = lr * (label - score);
                        dh += g * context.col(ctx);
                        context.col(ctx) += g * h;
                    }
                    // The center is a sum of its subwords, so each receives dh.
                    table.vectors.col(sw[0]) += dh;
                    table.vectors.col(sw[1]) += dh;
                    table.vectors.col(sw[2]) += dh;
                    ++epoch_pairs;
                }
            }
        }
        if (diag)
            diag->epoch_mean_loss[epoch] = epoch_pairs ? epoch_loss / epoch_pairs : 0.0;
    }

    if (diag) {
        diag->tokens = vocab.tokens;
        diag->context_vectors = std::move(context);
    }
    return table;
}

namespace {

Eigen::VectorXd wxv_column(const EmbeddingTable& table, int q, int a, int K) {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(K);
    const int qi = table.find(question_token(q));
    if (qi < 0) return col; // caller decides
    col = table.vectors.col(qi);
    const int ai = table.find(std::string(1, static_cast<char>('0' + a)));
    if (ai >= 0) col += table.vectors.col(ai);
    const int wi = table.find(interaction_token(q, a));
    if (wi >= 0) col += table.vectors.col(wi);
    return col;
}

} // namespace

Eigen::MatrixXd build_wxv(const EmbeddingTable& table, const Dataset& ds, int K) {
    if (table.dim != K)
        throw std::invalid_argument("build_wxv: table dim " + std::to_string(table.dim) +
                                    " != K " + std::to_string(K));
    const int N = ds.num_questions();
    Eigen::MatrixXd W(K, 2 * N);
    for (int q = 0; q < N; ++q) {
        if (table.find(question_token(q)) < 0)
            throw std::runtime_error("build_wxv: question \"" + ds.question_ids[q] +
                                     "\" (token " + question_token(q) + ") missing from table");
        for (int a = 0; a < 2; ++a)
            W.col(encode_interaction(q, a, N)) = wxv_column(table, q, a, K);
    }
    return W;
}

Eigen::MatrixXd build_wxv_with_fallback(const EmbeddingTable& table, const Dataset& ds, int K,
                                        uint64_t seed) {
    if (table.dim != K)
        throw std::invalid_argument("build_wxv_with_fallback: table dim mismatch");
    const int N = ds.num_questions();
    Eigen::MatrixXd W(K, 2 * N);
    for (int q = 0; q < N; ++q) {
        const bool covered = table.find(question_token(q)) >= 0;
        for (int a = 0; a < 2; ++a) {
            const int code = encode_interaction(q, a, N);
            if (covered) {
                W.col(code) = wxv_column(table, q, a, K);
            } else {
                Rng rng(mix_seed({seed, static_cast<uint64_t>(code)}));
                for (int d = 0; d < K; ++d) W(d, code) = rng.normal();
            }
        }
    }
    return W;
}

Eigen::MatrixXd random_init(int rows, int cols, uint64_t seed) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("random_init: non-positive shape");
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    // Column-major fill order so the result matches storage layout.
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

void write_embedding_table(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_embedding_table: cannot open " + path);
    out << table.units.size() << ' ' << table.dim << '\n';
    char buf[32];
    for (size_t u = 0; u < table.units.size(); ++u) {
        out << table.units[u];
        for (int d = 0; d < table.dim; ++d) {
            std::snprintf(buf, sizeof buf, " %.17g", table.vectors(d, static_cast<int>(u)));
            out << buf;
        }
        out << '\n';
    }
}

EmbeddingTable read_embedding_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_embedding_table: cannot open " + path);
    size_t count = 0;
    int dim = 0;
    if (!(in >> count >> dim) || dim <= 0)
        throw std::runtime_error("read_embedding_table: bad header in " + path);
    EmbeddingTable table;
    table.dim = dim;
    table.vectors.resize(dim, static_cast<int>(count));
    std::string unit;
    for (size_t u = 0; u < count; ++u) {
        if (!(in >> unit)) throw std::runtime_error("read_embedding_table: truncated file");
        const int idx = table.intern(unit);
        for (int d = 0; d < dim; ++d)
            if (!(in >> table.vectors(d, idx)))
                throw std::runtime_error("read_embedding_table: truncated vector for " + unit);
    }
    return table;
}

} // namespace qdkt
