#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qdkt {

struct Interaction {
    int question = 0;       // index into the question vocabulary
    int assessment = 0;     // 0 incorrect, 1 correct
    int64_t order_key = 0;  // timestamp or sequence position; total order per learner
};

struct LearnerSequence {
    std::string learner_id;
    std::vector<Interaction> events; // chronological
};

// Immutable after construction; vocabularies are built over the full dataset
// before any fold split so test sequences never carry out-of-vocabulary
// question indices.
struct Dataset {
    std::vector<LearnerSequence> sequences;
    std::vector<std::string> question_ids;          // index -> id
    std::vector<std::string> skill_ids;             // index -> id
    std::vector<std::vector<int>> question_skills;  // question index -> sorted skill indices

    int num_questions() const { return static_cast<int>(question_ids.size()); }
    int num_skills() const { return static_cast<int>(skill_ids.size()); }
    int num_learners() const { return static_cast<int>(sequences.size()); }
    int64_t total_interactions() const;
};

struct FoldSplit {
    int fold_index = 0;
    std::vector<int> train_learners;
    std::vector<int> test_learners;
};

struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct row_error : std::runtime_error {
    size_t line;
    row_error(size_t line_, const std::string& what_)
        : std::runtime_error("line " + std::to_string(line_) + ": " + what_), line(line_) {}
};

struct CsvSchema {
    std::string learner_col = "user_id";
    std::string question_col = "problem_id";
    std::string skill_col = "skill_id"; // empty -> dataset has no skill column
    std::string order_col = "order_id";
    std::string assessment_col = "correct";
    char skill_delim = ';';
};

// Reads a UTF-8 CSV with header. Records are sorted by (learner_id,
// order_key); question and skill vocabularies are assigned by first
// appearance in that sorted order.
Dataset ingest_csv(const std::string& path, const CsvSchema& schema);

struct PreprocessOptions {
    bool dedup = false;          // drop exact duplicates (learner, question, order, assessment)
    bool drop_unskilled = false; // drop interactions whose question carries no skill
    int min_seq_len = 0;         // drop learners with fewer interactions
};

// Applies dedup, then the unskilled filter, then the length filter; rebuilds
// vocabularies from the surviving records. With no option enabled the input
// is returned unchanged. Idempotent. Throws if nothing survives.
Dataset preprocess(const Dataset& ds, const PreprocessOptions& opts);

// k independent seeded shuffles of the learner indices, each partitioned
// train/test at train_frac. Splits are by learner: a learner's whole
// sequence lands on one side.
std::vector<FoldSplit> split_folds(const Dataset& ds, int k, double train_frac, uint64_t seed);

// (q, a) -> q + a*N, a bijection [0,N) x {0,1} -> [0,2N).
int encode_interaction(int question, int assessment, int num_questions);
std::pair<int, int> decode_interaction(int code, int num_questions);

enum class MasteryModel {
    kStatic,      // per-learner per-skill mastery fixed over time
    kIncremental, // mastery grows with each attempt on the skill
};

struct SynthConfig {
    int num_learners = 100;
    int num_questions = 50;
    int num_skills = 5;
    int obs_per_learner = 20;
    double difficulty_spread = 1.0; // std of per-question difficulty offsets
    MasteryModel mastery_model = MasteryModel::kIncremental;
    uint64_t seed = 0;
};

// Latent truth behind a synthetic dataset, for tests that check the
// generator against its own parameters.
struct SynthTruth {
    std::vector<double> difficulty;  // per question
    std::vector<int> question_skill; // per question
};

// Logistic response model: P(correct) = sigmoid(mastery - difficulty).
// Question usage is balanced so per-question observation counts differ by at
// most one. Deterministic for a fixed seed.
Dataset synth_generate(const SynthConfig& cfg, SynthTruth* truth = nullptr);

// Joint-skill collapse for the skill-level baseline: "questions" of the
// returned dataset are distinct skill sets, so the same model code runs at
// skill level. Questions without skills map to a reserved "_none_" bucket.
Dataset to_skill_level(const Dataset& ds);

// Canonical dump: interactions.txt with "learner_index question_index
// assessment" lines plus questions.vocab / skills.vocab.
void write_dataset_dump(const Dataset& ds, const std::string& dir);
Dataset read_dataset_dump(const std::string& dir);

} // namespace qdkt
