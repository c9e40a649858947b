#include "qdkt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "qdkt/rng.hpp"

namespace qdkt {

int64_t Dataset::total_interactions() const {
    int64_t n = 0;
    for (const auto& s : sequences) n += static_cast<int64_t>(s.events.size());
    return n;
}

int encode_interaction(int question, int assessment, int num_questions) {
    if (question < 0 || question >= num_questions)
        throw std::out_of_range("encode_interaction: question " + std::to_string(question) +
                                " outside [0," + std::to_string(num_questions) + ")");
    if (assessment != 0 && assessment != 1)
        throw std::invalid_argument("encode_interaction: assessment must be 0 or 1");
    return question + assessment * num_questions;
}

std::pair<int, int> decode_interaction(int code, int num_questions) {
    if (code < 0 || code >= 2 * num_questions)
        throw std::out_of_range("decode_interaction: code " + std::to_string(code) +
                                " outside [0," + std::to_string(2 * num_questions) + ")");
    return {code % num_questions, code / num_questions};
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

// One CSV record, quotes per RFC 4180 (doubled quote escapes a quote).
// Returns false on end of stream. Handles CRLF line endings.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, size_t& line_no) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line_no;
                field.push_back(static_cast<char>(c));
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++line_no;
            break;
        } else if (c != '\r') {
            field.push_back(static_cast<char>(c));
        }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

struct RawRecord {
    std::string learner;
    std::string question;
    std::vector<std::string> skills;
    int64_t order_key = 0;
    int assessment = 0;
    size_t file_order = 0;
};

// Vocabulary assignment by first appearance; shared by ingest / rebuild.
struct VocabBuilder {
    std::vector<std::string> ids;
    std::unordered_map<std::string, int> index;

    int intern(const std::string& id) {
        auto it = index.find(id);
        if (it != index.end()) return it->second;
        int idx = static_cast<int>(ids.size());
        ids.push_back(id);
        index.emplace(id, idx);
        return idx;
    }
};

Dataset build_dataset(std::vector<RawRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
        if (a.learner != b.learner) return a.learner < b.learner;
        if (a.order_key != b.order_key) return a.order_key < b.order_key;
        return a.file_order < b.file_order;
    });

    Dataset ds;
    VocabBuilder questions, skills;
    std::vector<std::set<int>> qskills;
    for (const RawRecord& r : records) {
        if (ds.sequences.empty() || ds.sequences.back().learner_id != r.learner)
            ds.sequences.push_back({r.learner, {}});
        int q = questions.intern(r.question);
        if (q == static_cast<int>(qskills.size())) qskills.emplace_back();
        for (const std::string& s : r.skills) qskills[q].insert(skills.intern(s));
        ds.sequences.back().events.push_back({q, r.assessment, r.order_key});
    }
    ds.question_ids = std::move(questions.ids);
    ds.skill_ids = std::move(skills.ids);
    ds.question_skills.reserve(qskills.size());
    for (auto& s : qskills) ds.question_skills.emplace_back(s.begin(), s.end());
    return ds;
}

} // namespace

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);

    size_t line_no = 1;
    std::vector<std::string> header;
    if (!read_csv_record(in, header, line_no))
        throw schema_error("ingest_csv: empty file " + path);

    auto column = [&](const std::string& name, bool required) -> int {
        if (name.empty()) return -1;
        for (size_t i = 0; i < header.size(); ++i)
            if (trimmed(header[i]) == name) return static_cast<int>(i);
        if (required) throw schema_error("ingest_csv: missing column \"" + name + "\"");
        return -1;
    };
    const int c_learner = column(schema.learner_col, true);
    const int c_question = column(schema.question_col, true);
    const int c_order = column(schema.order_col, true);
    const int c_assessment = column(schema.assessment_col, true);
    const int c_skill = column(schema.skill_col, false);
    if (!schema.skill_col.empty() && c_skill < 0)
        throw schema_error("ingest_csv: missing column \"" + schema.skill_col + "\"");

    std::vector<RawRecord> records;
    std::vector<std::string> fields;
    size_t file_order = 0;
    while (true) {
        const size_t record_line = line_no;
        if (!read_csv_record(in, fields, line_no)) break;
        if (fields.size() == 1 && trimmed(fields[0]).empty()) continue;
        const size_t needed = static_cast<size_t>(
            std::max({c_learner, c_question, c_order, c_assessment, c_skill})) + 1;
        if (fields.size() < needed)
            throw row_error(record_line, "expected at least " + std::to_string(needed) +
                                             " fields, got " + std::to_string(fields.size()));

        RawRecord r;
        r.file_order = file_order++;
        r.learner = trimmed(fields[c_learner]);
        r.question = trimmed(fields[c_question]);
        if (r.learner.empty()) throw row_error(record_line, "empty learner id");
        if (r.question.empty()) throw row_error(record_line, "empty question id");

        const std::string order_s = trimmed(fields[c_order]);
        try {
            size_t pos = 0;
            r.order_key = std::stoll(order_s, &pos);
            if (pos != order_s.size()) throw std::invalid_argument("");
        } catch (...) {
            throw row_error(record_line, "unparseable order key \"" + order_s + "\"");
        }

        const std::string a = trimmed(fields[c_assessment]);
        if (a == "0")
            r.assessment = 0;
        else if (a == "1")
            r.assessment = 1;
        else
            throw row_error(record_line, "assessment \"" + a + "\" is not 0 or 1");

        if (c_skill >= 0) {
            std::stringstream cell(fields[c_skill]);
            std::string part;
            while (std::getline(cell, part, schema.skill_delim)) {
                part = trimmed(part);
                if (!part.empty()) r.skills.push_back(part);
            }
        }
        records.push_back(std::move(r));
    }
    return build_dataset(records);
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

// Re-derive vocabularies from the surviving events, keeping first-appearance
// order. Returns a dataset whose indices are dense again.
Dataset reindex(const Dataset& old, std::vector<LearnerSequence>&& kept) {
    Dataset ds;
    VocabBuilder questions, skills;
    std::vector<std::vector<int>> qskills;
    ds.sequences = std::move(kept);
    for (auto& seq : ds.sequences) {
        for (auto& ev : seq.events) {
            const int oldq = ev.question;
            int q = questions.intern(old.question_ids[oldq]);
            if (q == static_cast<int>(qskills.size())) {
                qskills.emplace_back();
                for (int olds : old.question_skills[oldq])
                    qskills[q].push_back(skills.intern(old.skill_ids[olds]));
                std::sort(qskills[q].begin(), qskills[q].end());
            }
            ev.question = q;
        }
    }
    ds.question_ids = std::move(questions.ids);
    ds.skill_ids = std::move(skills.ids);
    ds.question_skills = std::move(qskills);
    return ds;
}

} // namespace

Dataset preprocess(const Dataset& ds, const PreprocessOptions& opts) {
    if (!opts.dedup && !opts.drop_unskilled && opts.min_seq_len <= 1) return ds;

    std::vector<LearnerSequence> kept;
    for (const auto& seq : ds.sequences) {
        LearnerSequence out{seq.learner_id, {}};
        std::set<std::tuple<int64_t, int, int>> seen;
        for (const auto& ev : seq.events) {
            if (opts.dedup && !seen.insert({ev.order_key, ev.question, ev.assessment}).second)
                continue;
            if (opts.drop_unskilled && ds.question_skills[ev.question].empty()) continue;
            out.events.push_back(ev);
        }
        if (static_cast<int>(out.events.size()) >= std::max(opts.min_seq_len, 1))
            kept.push_back(std::move(out));
    }
    if (kept.empty()) throw std::runtime_error("preprocess: no interactions survive the filters");
    return reindex(ds, std::move(kept));
}

// ---------------------------------------------------------------------------
// Fold splits

std::vector<FoldSplit> split_folds(const Dataset& ds, int k, double train_frac, uint64_t seed) {
    const int n = ds.num_learners();
    if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("split_folds: train_frac must be in (0,1)");
    if (n < k)
        throw std::invalid_argument("split_folds: " + std::to_string(n) + " learners < k=" +
                                    std::to_string(k));

    int n_train = static_cast<int>(std::llround(train_frac * n));
    n_train = std::clamp(n_train, 1, n - 1);

    std::vector<FoldSplit> folds;
    folds.reserve(k);
    for (int f = 0; f < k; ++f) {
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        Rng rng(mix_seed({seed, static_cast<uint64_t>(f)}));
        rng.shuffle(perm);
        FoldSplit fold;
        fold.fold_index = f;
        fold.train_learners.assign(perm.begin(), perm.begin() + n_train);
        fold.test_learners.assign(perm.begin() + n_train, perm.end());
        folds.push_back(std::move(fold));
    }
    return folds;
}

// ---------------------------------------------------------------------------
// Synthetic data

Dataset synth_generate(const SynthConfig& cfg, SynthTruth* truth) {
    if (cfg.num_learners <= 0 || cfg.num_questions <= 0 || cfg.num_skills <= 0 ||
        cfg.obs_per_learner <= 0)
        throw std::invalid_argument("synth_generate: all counts must be positive");

    const int L = cfg.num_learners, Q = cfg.num_questions, S = cfg.num_skills;
    const int64_t total = static_cast<int64_t>(L) * cfg.obs_per_learner;
    Rng rng(cfg.seed);

    // Difficulty has a per-skill base plus a within-skill offset, so
    // difficulty_spread directly controls how heterogeneous same-skill
    // questions are; at zero they are interchangeable for a fixed learner
    // state.
    std::vector<double> skill_difficulty(S);
    for (int s = 0; s < S; ++s) skill_difficulty[s] = rng.normal();
    std::vector<int> q_skill(Q);
    std::vector<double> difficulty(Q);
    for (int q = 0; q < Q; ++q) {
        q_skill[q] = q % S;
        difficulty[q] = skill_difficulty[q_skill[q]] + cfg.difficulty_spread * rng.normal();
    }

    // Mastery mixes a general ability with a skill-specific component.
    constexpr double kAbilityWeight = 0.8;
    constexpr double kSkillWeight = 0.6;
    std::vector<double> ability(L);
    for (int l = 0; l < L; ++l) ability[l] = rng.normal();
    std::vector<std::vector<double>> mastery(L, std::vector<double>(S));
    for (int l = 0; l < L; ++l)
        for (int s = 0; s < S; ++s)
            mastery[l][s] = kAbilityWeight * ability[l] + kSkillWeight * rng.normal();

    // Balanced usage pool: per-question counts differ by at most one.
    std::vector<int> pool;
    pool.reserve(total);
    const int64_t base = total / Q;
    const int64_t extra = total % Q;
    for (int q = 0; q < Q; ++q)
        for (int64_t c = 0; c < base + (q < extra ? 1 : 0); ++c) pool.push_back(q);
    rng.shuffle(pool);

    constexpr double kLearnRate = 0.15;
    Dataset ds;
    ds.sequences.reserve(L);
    int64_t cursor = 0;
    char idbuf[32];
    for (int l = 0; l < L; ++l) {
        std::snprintf(idbuf, sizeof idbuf, "L%06d", l);
        LearnerSequence seq{idbuf, {}};
        seq.events.reserve(cfg.obs_per_learner);
        for (int t = 0; t < cfg.obs_per_learner; ++t) {
            const int q = pool[cursor++];
            const int s = q_skill[q];
            const double p = 1.0 / (1.0 + std::exp(-(mastery[l][s] - difficulty[q])));
            const int a = rng.bernoulli(p) ? 1 : 0;
            if (cfg.mastery_model == MasteryModel::kIncremental) mastery[l][s] += kLearnRate;
            seq.events.push_back({q, a, t});
        }
        ds.sequences.push_back(std::move(seq));
    }

    ds.question_ids.resize(Q);
    ds.question_skills.resize(Q);
    for (int q = 0; q < Q; ++q) {
        std::snprintf(idbuf, sizeof idbuf, "Q%06d", q);
        ds.question_ids[q] = idbuf;
        ds.question_skills[q] = {q_skill[q]};
    }
    ds.skill_ids.resize(S);
    for (int s = 0; s < S; ++s) {
        std::snprintf(idbuf, sizeof idbuf, "S%04d", s);
        ds.skill_ids[s] = idbuf;
    }

    if (truth) {
        truth->difficulty = std::move(difficulty);
        truth->question_skill = std::move(q_skill);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Skill-level collapse

Dataset to_skill_level(const Dataset& ds) {
    // Joint-skill name per question, e.g. "S0001+S0003"; stable because skill
    // indices inside question_skills are sorted.
    std::vector<std::string> joint_name(ds.question_skills.size());
    for (size_t q = 0; q < ds.question_skills.size(); ++q) {
        const auto& sk = ds.question_skills[q];
        if (sk.empty()) {
            joint_name[q] = "_none_";
        } else {
            std::string name;
            for (size_t i = 0; i < sk.size(); ++i) {
                if (i) name += '+';
                name += ds.skill_ids[sk[i]];
            }
            joint_name[q] = std::move(name);
        }
    }

    Dataset out;
    VocabBuilder joints, skills;
    std::vector<std::vector<int>> qskills;
    out.sequences.reserve(ds.sequences.size());
    for (const auto& seq : ds.sequences) {
        LearnerSequence ns{seq.learner_id, {}};
        ns.events.reserve(seq.events.size());
        for (const auto& ev : seq.events) {
            int j = joints.intern(joint_name[ev.question]);
            if (j == static_cast<int>(qskills.size())) {
                qskills.emplace_back();
                for (int olds : ds.question_skills[ev.question])
                    qskills[j].push_back(skills.intern(ds.skill_ids[olds]));
                std::sort(qskills[j].begin(), qskills[j].end());
            }
            ns.events.push_back({j, ev.assessment, ev.order_key});
        }
        out.sequences.push_back(std::move(ns));
    }
    out.question_ids = std::move(joints.ids);
    out.skill_ids = std::move(skills.ids);
    out.question_skills = std::move(qskills);
    return out;
}

// ---------------------------------------------------------------------------
// Canonical dump

void write_dataset_dump(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream inter(fs::path(dir) / "interactions.txt");
    if (!inter) throw std::runtime_error("write_dataset_dump: cannot write to " + dir);
    for (size_t l = 0; l < ds.sequences.size(); ++l)
        for (const auto& ev : ds.sequences[l].events)
            inter << l << ' ' << ev.question << ' ' << ev.assessment << '\n';

    std::ofstream qv(fs::path(dir) / "questions.vocab");
    for (int q = 0; q < ds.num_questions(); ++q) {
        qv << ds.question_ids[q] << '\t';
        const auto& sk = ds.question_skills[q];
        for (size_t i = 0; i < sk.size(); ++i) {
            if (i) qv << ';';
            qv << sk[i];
        }
        qv << '\n';
    }

    std::ofstream sv(fs::path(dir) / "skills.vocab");
    for (const auto& id : ds.skill_ids) sv << id << '\n';
}

Dataset read_dataset_dump(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset ds;

    {
        std::ifstream sv(fs::path(dir) / "skills.vocab");
        if (!sv) throw std::runtime_error("read_dataset_dump: missing skills.vocab in " + dir);
        std::string line;
        while (std::getline(sv, line))
            if (!line.empty()) ds.skill_ids.push_back(line);
    }
    {
        std::ifstream qv(fs::path(dir) / "questions.vocab");
        if (!qv) throw std::runtime_error("read_dataset_dump: missing questions.vocab in " + dir);
        std::string line;
        size_t line_no = 0;
        while (std::getline(qv, line)) {
            ++line_no;
            if (line.empty()) continue;
            const size_t tab = line.find('\t');
            ds.question_ids.push_back(tab == std::string::npos ? line : line.substr(0, tab));
            std::vector<int> sk;
            if (tab != std::string::npos) {
                std::stringstream cell(line.substr(tab + 1));
                std::string part;
                while (std::getline(cell, part, ';')) {
                    if (part.empty()) continue;
                    const int s = std::stoi(part);
                    if (s < 0 || s >= static_cast<int>(ds.skill_ids.size()))
                        throw row_error(line_no, "skill index " + part + " out of range");
                    sk.push_back(s);
                }
            }
            std::sort(sk.begin(), sk.end());
            ds.question_skills.push_back(std::move(sk));
        }
    }
    {
        std::ifstream inter(fs::path(dir) / "interactions.txt");
        if (!inter)
            throw std::runtime_error("read_dataset_dump: missing interactions.txt in " + dir);
        std::map<int, LearnerSequence> by_learner;
        int64_t l = 0;
        int q = 0, a = 0;
        size_t line_no = 0;
        while (inter >> l >> q >> a) {
            ++line_no;
            if (q < 0 || q >= ds.num_questions())
                throw row_error(line_no, "question index out of range");
            if (a != 0 && a != 1) throw row_error(line_no, "assessment must be 0 or 1");
            auto& seq = by_learner[static_cast<int>(l)];
            seq.events.push_back({q, a, static_cast<int64_t>(seq.events.size())});
        }
        for (auto& [idx, seq] : by_learner) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "L%06d", idx);
            seq.learner_id = idbuf;
            ds.sequences.push_back(std::move(seq));
        }
    }
    return ds;
}

} // namespace qdkt
