#include "qdkt/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qdkt/metrics.hpp"
#include "qdkt/parallel.hpp"

namespace qdkt {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kDktSkill: return "dkt-skill";
        case Variant::kQdktBase: return "qdkt-base";
        case Variant::kQdktReg: return "qdkt-reg";
        case Variant::kQdktFasttext: return "qdkt-fasttext";
        case Variant::kQdktFull: return "qdkt-full";
    }
    throw std::logic_error("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "dkt-skill") return Variant::kDktSkill;
    if (name == "qdkt-base") return Variant::kQdktBase;
    if (name == "qdkt-reg") return Variant::kQdktReg;
    if (name == "qdkt-fasttext") return Variant::kQdktFasttext;
    if (name == "qdkt-full") return Variant::kQdktFull;
    throw std::invalid_argument("unknown variant \"" + name + "\"");
}

void evaluate_fold(const ParamSet& params, const Dataset& ds,
                   const std::vector<int>& test_learners, int max_len,
                   std::vector<double>& scores, std::vector<int>& labels) {
    emit_prediction_pairs(
        ds, test_learners, max_len,
        [&](const LearnerSequence& w) {
            const ForwardTrace trace = forward(params, w, Mode::kEval);
            const int T = trace.T();
            std::vector<double> s(static_cast<size_t>(T - 1));
            for (int t = 0; t + 1 < T; ++t) s[t] = trace.Y(w.events[t + 1].question, t);
            return s;
        },
        scores, labels);
}

namespace {

uint64_t fnv1a(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string canonical_config_text(const TrainConfig& cfg, Variant variant, int k,
                                  double train_frac) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "variant=%s k=%d train_frac=%.17g K=%d H=%d lambda=%.17g dropout=%.17g "
                  "lr=%.17g beta1=%.17g beta2=%.17g eps=%.17g clip=%.17g epochs=%d batch=%d "
                  "max_len=%d seed=%llu",
                  variant_name(variant), k, train_frac, cfg.K, cfg.H, cfg.lambda, cfg.dropout_p,
                  cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.grad_clip, cfg.epochs,
                  cfg.batch_size, cfg.max_len, static_cast<unsigned long long>(cfg.seed));
    return buf;
}

} // namespace

std::string config_fingerprint(const TrainConfig& cfg, Variant variant, int k,
                               double train_frac) {
    char out[24];
    std::snprintf(out, sizeof out, "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a(canonical_config_text(cfg, variant, k, train_frac))));
    return out;
}

FoldReport cross_validate(const Dataset& ds, const TrainConfig& cfg,
                          const CrossValidateOptions& opts) {
    const Variant variant = opts.variant;
    const bool needs_graph = variant == Variant::kQdktReg || variant == Variant::kQdktFull;
    const bool needs_pretrain =
        variant == Variant::kQdktFasttext || variant == Variant::kQdktFull;

    Dataset skill_data;
    const Dataset* dp = &ds;
    if (variant == Variant::kDktSkill) {
        skill_data = to_skill_level(ds);
        dp = &skill_data;
    }

    if (needs_graph && dp->num_skills() == 0)
        throw std::invalid_argument("cross_validate: variant needs skill labels for the graph");

    Laplacian L;
    if (needs_graph)
        L = laplacian(build_skill_graph(dp->question_skills, dp->num_questions()));

    TrainConfig fold_cfg = cfg;
    if (variant == Variant::kDktSkill || variant == Variant::kQdktBase ||
        variant == Variant::kQdktFasttext)
        fold_cfg.lambda = 0.0;
    if (fold_cfg.lambda == 0.0 && needs_graph)
        throw std::invalid_argument("cross_validate: regularized variant needs lambda > 0");

    const std::vector<FoldSplit> folds = split_folds(*dp, opts.k, opts.train_frac, opts.seed);
    const Corpus corpus = needs_pretrain ? encode_corpus(*dp) : Corpus{};

    std::vector<double> fold_auc(folds.size(), 0.0);
    const int fold_threads = std::max(1, opts.threads / static_cast<int>(folds.size()));
    parallel_for(folds.size(), opts.threads, [&](size_t f) {
        const FoldSplit& fold = folds[f];
        const uint64_t fold_seed = mix_seed({opts.seed, static_cast<uint64_t>(f)});
        TrainConfig tc = fold_cfg;
        tc.seed = fold_seed;

        Eigen::MatrixXd wxv;
        const Eigen::MatrixXd* init = nullptr;
        if (needs_pretrain) {
            // Pretrain on the fold's training learners only; questions that
            // never appear there fall back to random columns.
            Corpus train_corpus;
            train_corpus.sentences.reserve(fold.train_learners.size());
            for (int l : fold.train_learners)
                train_corpus.sentences.push_back(corpus.sentences[l]);
            SkipgramConfig sg = opts.pretrain;
            sg.dim = tc.K;
            sg.seed = mix_seed({fold_seed, 0x7367ULL}); // "sg"
            const EmbeddingTable table = train_skipgram(train_corpus, sg);
            wxv = build_wxv_with_fallback(table, *dp, tc.K, mix_seed({fold_seed, 0x7762ULL}));
            init = &wxv;
        }

        const TrainResult tr =
            train(*dp, fold.train_learners, tc, needs_graph ? &L : nullptr, init, fold_threads);
        std::vector<double> scores;
        std::vector<int> labels;
        evaluate_fold(tr.params, *dp, fold.test_learners, tc.max_len, scores, labels);
        fold_auc[f] = auc(scores, labels);
    });

    FoldReport report;
    report.variant = variant_name(variant);
    report.k = opts.k;
    report.seed = opts.seed;
    report.fold_auc = fold_auc;
    double mean = 0.0;
    for (double a : fold_auc) mean += a;
    mean /= static_cast<double>(fold_auc.size());
    double var = 0.0;
    for (double a : fold_auc) var += (a - mean) * (a - mean);
    report.mean = mean;
    report.stddev = fold_auc.size() > 1
                        ? std::sqrt(var / static_cast<double>(fold_auc.size() - 1))
                        : 0.0;
    report.config_fingerprint = config_fingerprint(cfg, variant, opts.k, opts.train_frac);
    return report;
}

std::string fold_report_json(const FoldReport& report, const TrainConfig& cfg) {
    nlohmann::json j;
    j["variant"] = report.variant;
    j["k"] = report.k;
    j["seed"] = report.seed;
    j["per_fold_auc"] = report.fold_auc;
    j["mean_auc"] = report.mean;
    j["std_auc"] = report.stddev;
    j["config_fingerprint"] = report.config_fingerprint;
    j["config"] = {
        {"K", cfg.K},
        {"H", cfg.H},
        {"lambda", cfg.lambda},
        {"dropout_p", cfg.dropout_p},
        {"lr", cfg.lr},
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"eps", cfg.eps},
        {"grad_clip", cfg.grad_clip},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"max_len", cfg.max_len},
    };
    return j.dump(2) + "\n";
}

void write_fold_report(const FoldReport& report, const TrainConfig& cfg,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_fold_report: cannot open " + path);
    out << fold_report_json(report, cfg);
}

} // namespace qdkt
