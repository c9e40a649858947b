#include "qdkt/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qdkt/parallel.hpp"
#include "qdkt/skipgram.hpp"

namespace qdkt {

void adam_step(ParamSet& params, const ParamSet& grad, AdamState& state, const TrainConfig& cfg) {
    double sq_norm = 0.0;
    bool finite = true;
    grad.for_each_tensor([&](const double* d, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::isfinite(d[i])) finite = false;
            sq_norm += d[i] * d[i];
        }
    });
    if (!finite) throw std::runtime_error("adam_step: non-finite gradient");
    const double norm = std::sqrt(sq_norm);
    const double scale =
        (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    // Walk the six tensors of all four sets in lockstep.
    struct Span {
        double* p;
        Eigen::Index n;
    };
    std::vector<Span> ps, ms, vs;
    std::vector<std::pair<const double*, Eigen::Index>> gs;
    params.for_each_tensor([&](double* d, Eigen::Index n) { ps.push_back({d, n}); });
    state.m.for_each_tensor([&](double* d, Eigen::Index n) { ms.push_back({d, n}); });
    state.v.for_each_tensor([&](double* d, Eigen::Index n) { vs.push_back({d, n}); });
    grad.for_each_tensor([&](const double* d, Eigen::Index n) { gs.push_back({d, n}); });

    for (size_t k = 0; k < ps.size(); ++k) {
        if (ps[k].n != gs[k].second)
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        double* p = ps[k].p;
        double* m = ms[k].p;
        double* v = vs[k].p;
        const double* g = gs[k].first;
        for (Eigen::Index i = 0; i < ps[k].n; ++i) {
            const double gi = g[i] * scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

std::vector<LearnerSequence> chunk_sequence(const LearnerSequence& seq, int max_len) {
    if (max_len < 2) throw std::invalid_argument("chunk_sequence: max_len must be >= 2");
    std::vector<LearnerSequence> out;
    const int T = static_cast<int>(seq.events.size());
    for (int begin = 0; begin < T; begin += max_len) {
        const int len = std::min(max_len, T - begin);
        if (len < 2) break;
        LearnerSequence w{seq.learner_id, {seq.events.begin() + begin,
                                           seq.events.begin() + begin + len}};
        out.push_back(std::move(w));
    }
    return out;
}

namespace {

struct GroupAccum {
    ParamSet grad;
    double data_sum = 0.0;
    double penalty_sum = 0.0; // raw quadratic-form mean per window, unscaled
    int windows = 0;
};

void add_into(ParamSet& dst, const ParamSet& src) {
    std::vector<std::pair<const double*, Eigen::Index>> spans;
    src.for_each_tensor([&](const double* d, Eigen::Index n) { spans.push_back({d, n}); });
    size_t k = 0;
    dst.for_each_tensor([&](double* d, Eigen::Index n) {
        const auto [s, sn] = spans[k++];
        if (sn != n) throw std::invalid_argument("add_into: shape mismatch");
        for (Eigen::Index i = 0; i < n; ++i) d[i] += s[i];
    });
}

} // namespace

TrainResult train(const Dataset& ds, const std::vector<int>& train_learners,
                  const TrainConfig& cfg, const Laplacian* L, const Eigen::MatrixXd* wxv_init,
                  int threads) {
    const int N = ds.num_questions();
    if (cfg.lambda < 0.0) throw std::invalid_argument("train: lambda must be >= 0");
    if (cfg.lambda > 0.0 && (!L || L->n != N))
        throw std::invalid_argument("train: lambda > 0 needs a Laplacian of dimension N");
    if (train_learners.empty()) throw std::invalid_argument("train: no training learners");

    ParamSet params = init_params(cfg.K, cfg.H, N, cfg.seed);
    if (wxv_init) {
        if (wxv_init->rows() != cfg.K || wxv_init->cols() != 2 * N)
            throw std::invalid_argument("train: init matrix must be K x 2N");
        params.W_xv = *wxv_init;
    } else {
        params.W_xv = random_init(cfg.K, 2 * N, mix_seed({cfg.seed, 0x777876ULL})); // "wxv"
    }

    std::vector<LearnerSequence> windows;
    for (int l : train_learners) {
        if (l < 0 || l >= ds.num_learners())
            throw std::out_of_range("train: learner index out of range");
        for (auto& w : chunk_sequence(ds.sequences[l], cfg.max_len))
            windows.push_back(std::move(w));
    }
    if (windows.empty())
        throw std::runtime_error("train: no sequence with at least two interactions");

    const Laplacian* pen = cfg.lambda > 0.0 ? L : nullptr;
    AdamState adam(cfg.K, cfg.H, N);
    TrainResult result;
    result.log.reserve(cfg.epochs);

    // Fixed-size work groups keep the gradient reduction tree independent of
    // the thread count, so training is bit-reproducible at any --threads.
    constexpr int kGroupWindows = 4;

    std::vector<int> order(windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed({cfg.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        double epoch_data = 0.0, epoch_penalty = 0.0;
        int64_t epoch_windows = 0;

        for (size_t batch_begin = 0; batch_begin < order.size();
             batch_begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t batch_end =
                std::min(order.size(), batch_begin + static_cast<size_t>(cfg.batch_size));
            const size_t batch_n = batch_end - batch_begin;
            const size_t n_groups = (batch_n + kGroupWindows - 1) / kGroupWindows;

            std::vector<GroupAccum> groups(n_groups);
            parallel_for(n_groups, threads, [&](size_t gi) {
                GroupAccum& acc = groups[gi];
                acc.grad = ParamSet(cfg.K, cfg.H, N);
                const size_t lo = batch_begin + gi * kGroupWindows;
                const size_t hi = std::min(batch_end, lo + kGroupWindows);
                for (size_t pos = lo; pos < hi; ++pos) {
                    const LearnerSequence& w = windows[order[pos]];
                    Rng drop_rng(mix_seed({cfg.seed, 0x64726f70ULL, static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(pos)}));
                    ForwardTrace trace = forward(params, w, Mode::kTrain, cfg.dropout_p, &drop_rng);
                    const LossValue lv = loss(trace, w, cfg.lambda, pen);
                    const ParamSet g = backward(params, trace, w, cfg.lambda, pen);
                    add_into(acc.grad, g);
                    acc.data_sum += lv.data;
                    acc.penalty_sum += lv.penalty;
                    acc.windows += 1;
                }
            });

            // Combine groups in index order, then take the batch mean.
            ParamSet batch_grad(cfg.K, cfg.H, N);
            double batch_data = 0.0, batch_penalty = 0.0;
            for (const GroupAccum& acc : groups) {
                add_into(batch_grad, acc.grad);
                batch_data += acc.data_sum;
                batch_penalty += acc.penalty_sum;
            }
            const double inv_batch = 1.0 / static_cast<double>(batch_n);
            batch_grad.for_each_tensor([&](double* d, Eigen::Index n) {
                for (Eigen::Index i = 0; i < n; ++i) d[i] *= inv_batch;
            });

            adam_step(params, batch_grad, adam, cfg);
            ++result.optimizer_steps;
            epoch_data += batch_data;
            epoch_penalty += batch_penalty;
            epoch_windows += static_cast<int64_t>(batch_n);
        }

        EpochLog el;
        el.epoch = epoch + 1;
        el.data = epoch_data / static_cast<double>(epoch_windows);
        el.penalty = cfg.lambda * (epoch_penalty / static_cast<double>(epoch_windows));
        el.total = el.data + el.penalty;
        result.log.push_back(el);
    }

    result.params = std::move(params);
    return result;
}

void write_loss_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_loss_log: cannot open " + path);
    char buf[128];
    for (const EpochLog& el : log) {
        std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g\n", el.epoch, el.total, el.data,
                      el.penalty);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'Q', 'D', 'K', 'T', 'C', 'K', '0', '1'};
}

void save_checkpoint(const std::string& path, const ParamSet& params, const TrainConfig& cfg) {
    nlohmann::json header;
    header["K"] = params.K;
    header["H"] = params.H;
    header["N"] = params.N;
    header["config"] = {
        {"K", cfg.K},          {"H", cfg.H},
        {"lambda", cfg.lambda}, {"dropout_p", cfg.dropout_p},
        {"lr", cfg.lr},        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},  {"eps", cfg.eps},
        {"grad_clip", cfg.grad_clip}, {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size}, {"max_len", cfg.max_len},
        {"seed", cfg.seed},
    };
    const std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof kMagic);
    const uint64_t hlen = head.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    params.for_each_tensor([&](const double* d, Eigen::Index n) {
        out.write(reinterpret_cast<const char*>(d),
                  static_cast<std::streamsize>(n * static_cast<Eigen::Index>(sizeof(double))));
    });
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    std::string head(hlen, '\0');
    in.read(head.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);

    const nlohmann::json header = nlohmann::json::parse(head);
    Checkpoint ck;
    const auto& jc = header.at("config");
    ck.cfg.K = jc.at("K");
    ck.cfg.H = jc.at("H");
    ck.cfg.lambda = jc.at("lambda");
    ck.cfg.dropout_p = jc.at("dropout_p");
    ck.cfg.lr = jc.at("lr");
    ck.cfg.beta1 = jc.at("beta1");
    ck.cfg.beta2 = jc.at("beta2");
    ck.cfg.eps = jc.at("eps");
    ck.cfg.grad_clip = jc.at("grad_clip");
    ck.cfg.epochs = jc.at("epochs");
    ck.cfg.batch_size = jc.at("batch_size");
    ck.cfg.max_len = jc.at("max_len");
    ck.cfg.seed = jc.at("seed");

    ck.params = ParamSet(header.at("K"), header.at("H"), header.at("N"));
    ck.params.for_each_tensor([&](double* d, Eigen::Index n) {
        in.read(reinterpret_cast<char*>(d),
                static_cast<std::streamsize>(n * static_cast<Eigen::Index>(sizeof(double))));
    });
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensors in " + path);
    return ck;
}

} // namespace qdkt
