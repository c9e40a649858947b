#include "qdkt/corpus.hpp"

#include <stdexcept>

namespace qdkt {

std::string question_token(int question) {
    if (question < 0) throw std::invalid_argument("question_token: negative index");
    return "q" + std::to_string(question);
}

std::string interaction_token(int question, int assessment) {
    if (assessment != 0 && assessment != 1)
        throw std::invalid_argument("interaction_token: assessment must be 0 or 1");
    return question_token(question) + '|' + static_cast<char>('0' + assessment);
}

std::pair<int, int> decode_token(const std::string& token) {
    const size_t sep = token.rfind('|');
    if (sep == std::string::npos || sep + 2 != token.size() || token[0] != 'q' || sep < 2)
        throw std::invalid_argument("decode_token: malformed token \"" + token + "\"");
    const char a = token[sep + 1];
    if (a != '0' && a != '1')
        throw std::invalid_argument("decode_token: bad assessment in \"" + token + "\"");
    int q = 0;
    for (size_t i = 1; i < sep; ++i) {
        if (token[i] < '0' || token[i] > '9')
            throw std::invalid_argument("decode_token: bad question index in \"" + token + "\"");
        q = q * 10 + (token[i] - '0');
    }
    return {q, a - '0'};
}

Subwords extract_subwords(const std::string& token) {
    decode_token(token); // validates
    const size_t sep = token.rfind('|');
    return {token.substr(0, sep), std::string(1, token[sep + 1]), token};
}

Corpus encode_corpus(const Dataset& ds) {
    Corpus corpus;
    corpus.sentences.reserve(ds.sequences.size());
    for (const auto& seq : ds.sequences) {
        std::vector<std::string> sentence;
        sentence.reserve(seq.events.size());
        for (const auto& ev : seq.events)
            sentence.push_back(interaction_token(ev.question, ev.assessment));
        corpus.sentences.push_back(std::move(sentence));
    }
    return corpus;
}

} // namespace qdkt
