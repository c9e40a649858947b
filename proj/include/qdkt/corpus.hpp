#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qdkt/dataset.hpp"

namespace qdkt {

// Interaction sequences rendered as a token corpus: one sentence per
// learner, one token per interaction, chronological order.
struct Corpus {
    std::vector<std::vector<std::string>> sentences;
};

// Question indices cannot be single characters at realistic vocabulary
// sizes, so tokens are "q<index>" plus a '|' separator and the assessment
// character: (5, 1) -> "q5|1". The three-part n-gram structure of the
// single-character scheme is preserved by extract_subwords.
std::string question_token(int question);
std::string interaction_token(int question, int assessment);

// Inverse of interaction_token; throws std::invalid_argument on malformed input.
std::pair<int, int> decode_token(const std::string& token);

// The three subword units of a token: {question part, assessment character,
// whole token}.
struct Subwords {
    std::string question;
    std::string assessment;
    std::string whole;
};
Subwords extract_subwords(const std::string& token);

Corpus encode_corpus(const Dataset& ds);

} // namespace qdkt
