#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "qdkt/corpus.hpp"

using namespace qdkt;

TEST_CASE("encode_corpus renders interactions as tokens") {
    Dataset ds;
    ds.question_ids = {"a", "b", "c", "d", "e", "f"};
    ds.question_skills.assign(6, {});
    ds.sequences.push_back({"u1", {{5, 1, 0}, {2, 0, 1}}});
    ds.sequences.push_back({"u2", {}});

    const Corpus corpus = encode_corpus(ds);
    REQUIRE(corpus.sentences.size() == 2);
    REQUIRE(corpus.sentences[0].size() == 2);
    CHECK(corpus.sentences[0][0] == "q5|1");
    CHECK(corpus.sentences[0][1] == "q2|0");
    CHECK(corpus.sentences[1].empty());
}

TEST_CASE("token round trip") {
    for (int q : {0, 1, 7, 42, 123456})
        for (int a : {0, 1}) {
            const auto [dq, da] = decode_token(interaction_token(q, a));
            CHECK(dq == q);
            CHECK(da == a);
        }
    CHECK_THROWS(decode_token("nonsense"));
    CHECK_THROWS(decode_token("q12"));
    CHECK_THROWS(decode_token("q12|2"));
    CHECK_THROWS(decode_token("12|1"));
}

TEST_CASE("extract_subwords yields exactly the three units") {
    const Subwords sw = extract_subwords("q7|0");
    CHECK(sw.question == "q7");
    CHECK(sw.assessment == "0");
    CHECK(sw.whole == "q7|0");
    const std::set<std::string> units{sw.question, sw.assessment, sw.whole};
    CHECK(units.size() == 3);

    CHECK_THROWS(extract_subwords("q7"));
    CHECK_THROWS(extract_subwords(""));
}

TEST_CASE("subword sharing across tokens") {
    auto units = [](const std::string& t) {
        const Subwords sw = extract_subwords(t);
        return std::set<std::string>{sw.question, sw.assessment, sw.whole};
    };
    // Same question, both assessments: exactly the question part is shared.
    {
        const auto a = units("q3|0"), b = units("q3|1");
        std::set<std::string> inter;
        for (const auto& u : a)
            if (b.count(u)) inter.insert(u);
        CHECK(inter == std::set<std::string>{"q3"});
    }
    // Different questions, same assessment: exactly the assessment character.
    {
        const auto a = units("q3|0"), b = units("q4|0");
        std::set<std::string> inter;
        for (const auto& u : a)
            if (b.count(u)) inter.insert(u);
        CHECK(inter == std::set<std::string>{"0"});
    }
}
