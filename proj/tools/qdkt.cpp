// qdkt command line: ingest, synth, pretrain, train, eval, project.
//
// Every subcommand accepts --config FILE with flat key=value lines ('#'
// comments); command-line flags override file values. All randomness is
// seeded, and repeated runs with the same configuration and seed write
// bit-identical output files at any --threads setting.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qdkt/evaluate.hpp"
#include "qdkt/graph.hpp"
#include "qdkt/metrics.hpp"
#include "qdkt/parallel.hpp"
#include "qdkt/skipgram.hpp"
#include "qdkt/trainer.hpp"

namespace fs = std::filesystem;
using namespace qdkt;

namespace {

struct CommonOpts {
    std::string out_dir;
    uint64_t seed = 0;
    int threads = default_threads();
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    // Parsed by expand_config_args before CLI11 sees the command line; the
    // option is registered here so it shows up in --help.
    cmd->add_option("--config", "flat key=value config file; flags override file values");
    cmd->add_option("--out", c.out_dir, "output directory (default runs/<timestamp>-<seed>)");
    cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
    cmd->add_option("--threads", c.threads, "worker threads")->capture_default_str();
}

std::string config_trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Rewrites the argument list so that "--config FILE" becomes the file's
// key=value pairs, appended as --key=value for every key the command line
// does not already set. Flags therefore always win over the file.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> files;
    std::set<std::string> used;
    std::vector<std::string> kept;
    for (size_t i = 0; i < args.size(); ++i) {
        const std::string& tok = args[i];
        if (tok == "--config") {
            if (i + 1 >= args.size())
                throw CLI::ValidationError("--config", "expected a file path");
            files.push_back(args[++i]);
            continue;
        }
        if (tok.rfind("--config=", 0) == 0) {
            files.push_back(tok.substr(9));
            continue;
        }
        if (tok.rfind("--", 0) == 0 && tok.size() > 2)
            used.insert(tok.substr(2, tok.find('=') - 2));
        kept.push_back(tok);
    }
    for (const std::string& file : files) {
        std::ifstream in(file);
        if (!in) throw CLI::ValidationError("--config", "cannot read \"" + file + "\"");
        std::string line;
        while (std::getline(in, line)) {
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            line = config_trim(line);
            if (line.empty()) continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw CLI::ValidationError("--config", "bad line \"" + line + "\" in " + file);
            const std::string key = config_trim(line.substr(0, eq));
            const std::string value = config_trim(line.substr(eq + 1));
            if (key.empty())
                throw CLI::ValidationError("--config", "bad line \"" + line + "\" in " + file);
            if (used.insert(key).second) kept.push_back("--" + key + "=" + value);
        }
    }
    return kept;
}

fs::path resolve_out_dir(const CommonOpts& c) {
    fs::path dir;
    if (!c.out_dir.empty()) {
        dir = c.out_dir;
    } else {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[64];
        std::tm tm{};
        localtime_r(&now, &tm);
        std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
        dir = fs::path("runs") / (std::string(stamp) + "-seed" + std::to_string(c.seed));
    }
    fs::create_directories(dir);
    return dir;
}

// Echoed provenance: semantic experiment settings only. Execution details
// (threads, paths) are omitted so identical experiments produce identical
// files.
void echo_config(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(dir / "config_used.txt");
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct ModelOpts {
    TrainConfig cfg;
    std::string variant = "qdkt-base";
    std::string embeddings_file;
    std::string graph_file;
};

void add_model_options(CLI::App* cmd, ModelOpts& m) {
    cmd->add_option("--variant", m.variant,
                    "dkt-skill | qdkt-base | qdkt-reg | qdkt-fasttext | qdkt-full")
        ->capture_default_str();
    cmd->add_option("--embed-dim", m.cfg.K, "embedding size K")->capture_default_str();
    cmd->add_option("--hidden", m.cfg.H, "hidden size H")->capture_default_str();
    cmd->add_option("--lambda", m.cfg.lambda, "smoothness penalty weight")->capture_default_str();
    cmd->add_option("--dropout", m.cfg.dropout_p, "dropout on h_t")->capture_default_str();
    cmd->add_option("--lr", m.cfg.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--grad-clip", m.cfg.grad_clip, "global gradient norm clip (0 disables)")
        ->capture_default_str();
    cmd->add_option("--epochs", m.cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", m.cfg.batch_size, "sequences per optimizer step")
        ->capture_default_str();
    cmd->add_option("--max-len", m.cfg.max_len, "window length for long sequences")
        ->capture_default_str();
    cmd->add_option("--embeddings", m.embeddings_file,
                    "pretrained embedding table (fasttext/full variants)");
    cmd->add_option("--graph", m.graph_file,
                    "edge list 'i j w' overriding the skill graph (reg/full variants)");
}

std::vector<std::pair<std::string, std::string>> model_config_kv(const ModelOpts& m,
                                                                 uint64_t seed) {
    return {
        {"variant", m.variant},
        {"embed_dim", std::to_string(m.cfg.K)},
        {"hidden", std::to_string(m.cfg.H)},
        {"lambda", fmt(m.cfg.lambda)},
        {"dropout", fmt(m.cfg.dropout_p)},
        {"lr", fmt(m.cfg.lr)},
        {"grad_clip", fmt(m.cfg.grad_clip)},
        {"epochs", std::to_string(m.cfg.epochs)},
        {"batch", std::to_string(m.cfg.batch_size)},
        {"max_len", std::to_string(m.cfg.max_len)},
        {"seed", std::to_string(seed)},
    };
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty() || !fs::exists(path))
        throw CLI::ValidationError(what, "file not found: \"" + path + "\"");
}

Dataset load_dump_checked(const std::string& dir) {
    if (dir.empty() || !fs::exists(fs::path(dir) / "interactions.txt"))
        throw CLI::ValidationError("--data", "dataset dump not found in \"" + dir + "\"");
    return read_dataset_dump(dir);
}

// The graph and Laplacian for regularized variants: the dataset's skill map
// unless an explicit edge list is supplied.
Laplacian make_laplacian(const Dataset& ds, const std::string& graph_file) {
    if (!graph_file.empty()) {
        require_file(graph_file, "--graph");
        return laplacian(read_edge_list(graph_file, ds.num_questions()));
    }
    if (ds.num_skills() == 0)
        throw CLI::ValidationError(
            "--graph", "dataset has no skill labels and no edge list was supplied");
    return laplacian(build_skill_graph(ds.question_skills, ds.num_questions()));
}

// ---------------------------------------------------------------------------

int cmd_ingest(const CommonOpts& common, const std::string& csv, const CsvSchema& schema,
               const PreprocessOptions& prep) {
    require_file(csv, "--csv");
    const fs::path out = resolve_out_dir(common);
    Dataset ds = ingest_csv(csv, schema);
    const int64_t before = ds.total_interactions();
    ds = preprocess(ds, prep);
    if (prep.dedup)
        std::cout << "duplicates removed: " << (before - ds.total_interactions()) << "\n";
    write_dataset_dump(ds, out.string());
    echo_config(out, {{"command", "ingest"},
                      {"dedup", prep.dedup ? "1" : "0"},
                      {"drop_unskilled", prep.drop_unskilled ? "1" : "0"},
                      {"min_seq_len", std::to_string(prep.min_seq_len)}});
    std::cout << "learners: " << ds.num_learners() << "\nquestions: " << ds.num_questions()
              << "\nskills: " << ds.num_skills() << "\ninteractions: " << ds.total_interactions()
              << "\nwrote " << out.string() << "\n";
    return 0;
}

int cmd_synth(const CommonOpts& common, const SynthConfig& scfg) {
    const fs::path out = resolve_out_dir(common);
    const Dataset ds = synth_generate(scfg);
    write_dataset_dump(ds, out.string());
    echo_config(out, {{"command", "synth"},
                      {"learners", std::to_string(scfg.num_learners)},
                      {"questions", std::to_string(scfg.num_questions)},
                      {"skills", std::to_string(scfg.num_skills)},
                      {"obs", std::to_string(scfg.obs_per_learner)},
                      {"difficulty_spread", fmt(scfg.difficulty_spread)},
                      {"mastery_model",
                       scfg.mastery_model == MasteryModel::kStatic ? "static" : "incremental"},
                      {"seed", std::to_string(scfg.seed)}});
    std::cout << "wrote " << out.string() << " (" << ds.total_interactions()
              << " interactions)\n";
    return 0;
}

int cmd_pretrain(const CommonOpts& common, const std::string& data, SkipgramConfig sg) {
    const Dataset ds = load_dump_checked(data);
    const fs::path out = resolve_out_dir(common);
    sg.seed = common.seed;
    const Corpus corpus = encode_corpus(ds);
    const EmbeddingTable table = train_skipgram(corpus, sg);
    write_embedding_table(table, (out / "embeddings.txt").string());
    echo_config(out, {{"command", "pretrain"},
                      {"dim", std::to_string(sg.dim)},
                      {"window", std::to_string(sg.window)},
                      {"negatives", std::to_string(sg.negatives)},
                      {"epochs", std::to_string(sg.epochs)},
                      {"lr", fmt(sg.lr)},
                      {"seed", std::to_string(sg.seed)}});
    std::cout << "wrote " << (out / "embeddings.txt").string() << " (" << table.units.size()
              << " units)\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data, ModelOpts m,
              double train_frac) {
    const Variant variant = variant_from_name(m.variant);
    Dataset ds = load_dump_checked(data);
    if (variant == Variant::kDktSkill) ds = to_skill_level(ds);

    const bool needs_graph = variant == Variant::kQdktReg || variant == Variant::kQdktFull;
    const bool needs_embed = variant == Variant::kQdktFasttext || variant == Variant::kQdktFull;
    if (!needs_graph) m.cfg.lambda = 0.0;
    if (needs_graph && m.cfg.lambda <= 0.0)
        throw CLI::ValidationError("--lambda", "regularized variants need lambda > 0");
    if (needs_embed && m.embeddings_file.empty())
        throw CLI::ValidationError("--embeddings",
                                   "variant " + m.variant + " needs an embedding table");

    Laplacian L;
    if (needs_graph) L = make_laplacian(ds, m.graph_file);

    Eigen::MatrixXd wxv;
    if (needs_embed) {
        require_file(m.embeddings_file, "--embeddings");
        const EmbeddingTable table = read_embedding_table(m.embeddings_file);
        if (table.dim != m.cfg.K)
            throw CLI::ValidationError("--embeddings",
                                       "table dimension " + std::to_string(table.dim) +
                                           " does not match --embed-dim " +
                                           std::to_string(m.cfg.K));
        wxv = build_wxv(table, ds, m.cfg.K);
    }

    std::vector<int> learners;
    if (train_frac < 1.0) {
        const FoldSplit split = split_folds(ds, 2, train_frac, common.seed)[0];
        learners = split.train_learners;
    } else {
        for (int l = 0; l < ds.num_learners(); ++l) learners.push_back(l);
    }

    m.cfg.seed = common.seed;
    const fs::path out = resolve_out_dir(common);
    const TrainResult r = train(ds, learners, m.cfg, needs_graph ? &L : nullptr,
                                needs_embed ? &wxv : nullptr, common.threads);
    save_checkpoint((out / "checkpoint.bin").string(), r.params, m.cfg);
    write_loss_log(r.log, (out / "loss_log.txt").string());
    echo_config(out, model_config_kv(m, common.seed));
    if (!r.log.empty()) std::cout << "final epoch loss: " << r.log.back().total << "\n";
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& data, ModelOpts m, int k,
             double train_frac, SkipgramConfig sg, const std::string& lambda_sweep) {
    const Dataset ds = load_dump_checked(data);
    const Variant variant = variant_from_name(m.variant);
    const fs::path out = resolve_out_dir(common);

    CrossValidateOptions opts;
    opts.k = k;
    opts.train_frac = train_frac;
    opts.seed = common.seed;
    opts.variant = variant;
    opts.pretrain = sg;
    opts.threads = common.threads;
    m.cfg.seed = common.seed;

    std::vector<double> lambdas{m.cfg.lambda};
    const bool needs_graph = variant == Variant::kQdktReg || variant == Variant::kQdktFull;
    if (!lambda_sweep.empty() && needs_graph) {
        lambdas.clear();
        std::stringstream ss(lambda_sweep);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty()) lambdas.push_back(std::stod(part));
        if (lambdas.empty()) throw CLI::ValidationError("--lambda-sweep", "no values parsed");
    }

    FoldReport best;
    TrainConfig best_cfg;
    bool have_best = false;
    for (double lam : lambdas) {
        TrainConfig cfg = m.cfg;
        cfg.lambda = lam;
        if (needs_graph && lam <= 0.0)
            throw CLI::ValidationError("--lambda", "regularized variants need lambda > 0");
        const FoldReport rep = cross_validate(ds, cfg, opts);
        std::cout << rep.variant << " lambda=" << lam << " auc " << rep.mean << " +- "
                  << rep.stddev << "\n";
        if (!have_best || rep.mean > best.mean) {
            best = rep;
            best_cfg = cfg;
            have_best = true;
        }
    }
    write_fold_report(best, best_cfg, (out / "report.json").string());
    auto kv = model_config_kv(m, common.seed);
    kv.emplace_back("k", std::to_string(k));
    kv.emplace_back("train_frac", fmt(train_frac));
    echo_config(out, kv);
    std::cout << "wrote " << (out / "report.json").string() << "\n";
    return 0;
}

int cmd_project(const CommonOpts& common, const std::string& checkpoint,
                const std::string& data, int components) {
    require_file(checkpoint, "--checkpoint");
    const Dataset ds = load_dump_checked(data);
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.params.N != ds.num_questions())
        throw CLI::ValidationError("--data", "checkpoint N=" + std::to_string(ck.params.N) +
                                                 " does not match dataset questions " +
                                                 std::to_string(ds.num_questions()));

    const PcaResult pca = pca_project(ck.params.W_xv, components);
    if (pca.degenerate)
        std::cerr << "warning: all embedding columns are identical; projection is zero\n";
    const SeparationScore sep = separation_score(pca.projected, pca.labels);

    const fs::path out = resolve_out_dir(common);
    std::ofstream csv(out / "pca.csv");
    csv << "col_index,question_index,assessment";
    for (int r = 0; r < components; ++r) csv << ",pc" << (r + 1);
    csv << "\n";
    const int N = ds.num_questions();
    char buf[32];
    for (int c = 0; c < 2 * N; ++c) {
        csv << c << ',' << (c % N) << ',' << (c >= N ? 1 : 0);
        for (int r = 0; r < components; ++r) {
            std::snprintf(buf, sizeof buf, ",%.17g", pca.projected(c, r));
            csv << buf;
        }
        csv << "\n";
    }
    echo_config(out, {{"command", "project"}, {"components", std::to_string(components)}});

    std::cout << "separation_score: " << sep.value << (sep.capped ? " (capped)" : "") << "\n";
    std::cout << "explained_variance_ratio:";
    for (int r = 0; r < components; ++r) std::cout << ' ' << pca.explained_ratio[r];
    std::cout << "\nwrote " << (out / "pca.csv").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qdkt: question-level knowledge tracing"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "read an interaction CSV into a dataset dump");
    CommonOpts ingest_common;
    add_common(ingest, ingest_common);
    std::string csv_path;
    CsvSchema schema;
    PreprocessOptions prep;
    ingest->add_option("--csv", csv_path, "input CSV path")->required();
    ingest->add_option("--col-learner", schema.learner_col)->capture_default_str();
    ingest->add_option("--col-question", schema.question_col)->capture_default_str();
    ingest->add_option("--col-skill", schema.skill_col, "empty string disables skills")
        ->capture_default_str();
    ingest->add_option("--col-order", schema.order_col)->capture_default_str();
    ingest->add_option("--col-assessment", schema.assessment_col)->capture_default_str();
    ingest->add_option("--skill-delim", schema.skill_delim, "multi-skill cell delimiter")
        ->capture_default_str();
    ingest->add_flag("--dedup", prep.dedup, "drop exact duplicate records");
    ingest->add_flag("--drop-unskilled", prep.drop_unskilled,
                     "drop interactions on questions without skills");
    ingest->add_option("--min-seq-len", prep.min_seq_len, "drop shorter learners")
        ->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    CommonOpts synth_common;
    add_common(synth, synth_common);
    SynthConfig scfg;
    std::string mastery = "incremental";
    synth->add_option("--learners", scfg.num_learners)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--questions", scfg.num_questions)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--skills", scfg.num_skills)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--obs", scfg.obs_per_learner, "observations per learner")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--difficulty-spread", scfg.difficulty_spread)
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    synth->add_option("--mastery-model", mastery, "static | incremental")
        ->check(CLI::IsMember({"static", "incremental"}))
        ->capture_default_str();

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "train subword skip-gram embeddings");
    CommonOpts pre_common;
    add_common(pretrain, pre_common);
    std::string pre_data;
    SkipgramConfig sg;
    pretrain->add_option("--data", pre_data, "dataset dump directory")->required();
    pretrain->add_option("--dim", sg.dim)->capture_default_str();
    pretrain->add_option("--window", sg.window)->capture_default_str();
    pretrain->add_option("--negatives", sg.negatives)->capture_default_str();
    pretrain->add_option("--epochs", sg.epochs)->capture_default_str();
    pretrain->add_option("--lr", sg.lr)->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
    CommonOpts train_common;
    add_common(train_cmd, train_common);
    std::string train_data;
    ModelOpts train_model;
    double train_frac_train = 1.0;
    train_cmd->add_option("--data", train_data, "dataset dump directory")->required();
    add_model_options(train_cmd, train_model);
    train_cmd->add_option("--train-frac", train_frac_train,
                          "train on this seeded fraction of learners (1 = all)")
        ->capture_default_str();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "cross-validated AUC report");
    CommonOpts eval_common;
    add_common(eval_cmd, eval_common);
    std::string eval_data, lambda_sweep;
    ModelOpts eval_model;
    int k = 5;
    double train_frac = 0.7;
    SkipgramConfig eval_sg;
    eval_cmd->add_option("--data", eval_data, "dataset dump directory")->required();
    add_model_options(eval_cmd, eval_model);
    eval_cmd->add_option("--k", k, "number of folds")->capture_default_str();
    eval_cmd->add_option("--train-frac", train_frac)->capture_default_str();
    eval_cmd->add_option("--sg-window", eval_sg.window)->capture_default_str();
    eval_cmd->add_option("--sg-negatives", eval_sg.negatives)->capture_default_str();
    eval_cmd->add_option("--sg-epochs", eval_sg.epochs)->capture_default_str();
    eval_cmd->add_option("--sg-lr", eval_sg.lr)->capture_default_str();
    eval_cmd->add_option("--lambda-sweep", lambda_sweep,
                         "comma-separated lambdas; best mean AUC is reported");

    // project
    auto* project = app.add_subcommand("project", "PCA of embedding columns to CSV");
    CommonOpts proj_common;
    add_common(project, proj_common);
    std::string ckpt_path, proj_data;
    int components = 3;
    project->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    project->add_option("--data", proj_data, "dataset dump directory")->required();
    project->add_option("--components", components)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end()); // CLI11 consumes from the back
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(ingest_common, csv_path, schema, prep);
        if (*synth) {
            scfg.seed = synth_common.seed;
            scfg.mastery_model =
                mastery == "static" ? MasteryModel::kStatic : MasteryModel::kIncremental;
            return cmd_synth(synth_common, scfg);
        }
        if (*pretrain) return cmd_pretrain(pre_common, pre_data, sg);
        if (*train_cmd)
            return cmd_train(train_common, train_data, train_model, train_frac_train);
        if (*eval_cmd)
            return cmd_eval(eval_common, eval_data, eval_model, k, train_frac, eval_sg,
                            lambda_sweep);
        if (*project) return cmd_project(proj_common, ckpt_path, proj_data, components);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const schema_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const row_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
