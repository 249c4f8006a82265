#include <doctest.h>

#include <random>

#include "amber/filter.hpp"
#include "test_helpers.hpp"

using namespace amber;

namespace {

Query q(const std::string& text) { return {"q1", text}; }

Chunk chunk(const std::string& text) { return {"c1", "Title", text, 1, 1.0, 1}; }

}  // namespace

TEST_CASE("chunk_filter parses the mandated JSON verdict") {
    MockGateway useful({test::reply(R"({"NLI result":"useful"})")}, MockMode::sequential);
    CHECK(chunk_filter(q("who?"), chunk("text"), test::prompts(), useful, "m").value ==
          FilterVerdict::Value::useful);

    MockGateway useless({test::reply(R"({"NLI result":"useless"})")}, MockMode::sequential);
    CHECK(chunk_filter(q("who?"), chunk("text"), test::prompts(), useless, "m").value ==
          FilterVerdict::Value::useless);

    MockGateway prose({test::reply("Sure! It is useful.")}, MockMode::sequential);
    CHECK_THROWS_AS(chunk_filter(q("who?"), chunk("text"), test::prompts(), prose, "m"),
                    FilterParseError);
}

TEST_CASE("chunk_filter repairs a JSON span wrapped in prose") {
    MockGateway mock({test::reply("Here you go: {\"NLI result\":\"useless\"} done")},
                     MockMode::sequential);
    CHECK(chunk_filter(q("who?"), chunk("text"), test::prompts(), mock, "m").value ==
          FilterVerdict::Value::useless);
}

TEST_CASE("sentence_filter validates substrings and preserves chunk order") {
    MockGateway mock({test::reply("A. C.")}, MockMode::sequential);
    auto passage = sentence_filter(q("who?"), chunk("A. B. C."), test::prompts(), mock, "m");
    CHECK(passage.sentences == std::vector<std::string>{"A.", "C."});

    MockGateway hallucinated({test::reply("A. Z.")}, MockMode::sequential);
    std::vector<std::string> warnings;
    passage = sentence_filter(q("who?"), chunk("A. B. C."), test::prompts(), hallucinated,
                              "m", &warnings);
    CHECK(passage.sentences == std::vector<std::string>{"A."});
    CHECK(warnings.size() == 1);

    MockGateway identity({test::reply("A. B. C.")}, MockMode::sequential);
    passage = sentence_filter(q("who?"), chunk("A. B. C."), test::prompts(), identity, "m");
    CHECK(passage.sentences == std::vector<std::string>{"A.", "B.", "C."});
}

TEST_CASE("sentence_filter reorders replies by first occurrence") {
    MockGateway mock({test::reply("C. A.")}, MockMode::sequential);
    auto passage = sentence_filter(q("who?"), chunk("A. B. C."), test::prompts(), mock, "m");
    CHECK(passage.sentences == std::vector<std::string>{"A.", "C."});
}

TEST_CASE("filter_chunks drops useless chunks and keeps rank order") {
    std::vector<Chunk> chunks = {{"d1", "T1", "First chunk.", 1, 3.0, 1},
                                 {"d2", "T2", "Second chunk.", 2, 2.0, 1},
                                 {"d3", "T3", "Third chunk.", 3, 1.0, 1}};
    MockGateway mock({test::reply(R"({"NLI result":"useful"})"),
                      test::reply("First chunk."),
                      test::reply(R"({"NLI result":"useless"})"),
                      test::reply(R"({"NLI result":"useful"})"),
                      test::reply("Third chunk.")},
                     MockMode::sequential);
    auto result = filter_chunks(q("who?"), chunks, test::prompts(), mock, "m");
    REQUIRE(result.passages.size() == 2);
    CHECK(result.passages[0].source.doc_id == "d1");
    CHECK(result.passages[1].source.doc_id == "d3");
    REQUIRE(result.records.size() == 3);
    CHECK(result.records[1].verdict == "useless");
}

TEST_CASE("filter_chunks returns empty when everything is useless") {
    std::vector<Chunk> chunks = {{"d1", "T", "A.", 1, 1.0, 1}, {"d2", "T", "B.", 2, 0.5, 1}};
    MockGateway mock({test::reply(R"({"NLI result":"useless"})"),
                      test::reply(R"({"NLI result":"useless"})")},
                     MockMode::sequential);
    auto result = filter_chunks(q("who?"), chunks, test::prompts(), mock, "m");
    CHECK(result.passages.empty());
}

TEST_CASE("filter_chunks fails open on unparseable verdicts") {
    std::vector<Chunk> chunks = {{"d1", "T", "Alpha. Beta.", 1, 1.0, 1}};
    MockGateway mock({test::reply("not json at all")}, MockMode::sequential);
    auto result = filter_chunks(q("who?"), chunks, test::prompts(), mock, "m");
    REQUIRE(result.passages.size() == 1);
    CHECK(result.passages[0].sentences == std::vector<std::string>{"Alpha.", "Beta."});
    CHECK(result.records[0].verdict == "parse_failed");
    CHECK(result.records[0].retained_whole);
}

TEST_CASE("useful chunk with empty extraction is retained whole") {
    std::vector<Chunk> chunks = {{"d1", "T", "Alpha. Beta.", 1, 1.0, 1}};
    MockGateway mock({test::reply(R"({"NLI result":"useful"})"), test::reply("Zeta.")},
                     MockMode::sequential);
    auto result = filter_chunks(q("who?"), chunks, test::prompts(), mock, "m");
    REQUIRE(result.passages.size() == 1);
    CHECK(result.passages[0].sentences == std::vector<std::string>{"Alpha.", "Beta."});
    CHECK(result.records[0].retained_whole);
}

TEST_CASE("strinc_label normalized containment") {
    CHECK(strinc_label("The Eiffel Tower is in Paris.", "Paris") == 1);
    CHECK(strinc_label("The tower is tall.", "Paris") == 0);
    CHECK(strinc_label("PARIS, France", "paris") == 1);
    CHECK(strinc_label("New York City", "York City") == 1);
    CHECK(strinc_label("New York City", "City York") == 0);
}

TEST_CASE("strinc_label matches a brute-force oracle on random inputs") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> vocab(0, 5);
    std::uniform_int_distribution<int> sent_len(1, 10);
    std::uniform_int_distribution<int> gold_len(1, 3);

    auto make = [&](int len) {
        std::string out;
        for (int i = 0; i < len; ++i) out += "W" + std::to_string(vocab(rng)) + ", ";
        return out;
    };
    auto normalize = [](const std::string& s) {
        std::vector<std::string> tokens;
        std::string cur;
        for (char c : s) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            } else if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) tokens.push_back(cur);
        return tokens;
    };

    for (int round = 0; round < 300; ++round) {
        std::string sentence = make(sent_len(rng));
        std::string gold = make(gold_len(rng));
        auto s = normalize(sentence);
        auto g = normalize(gold);
        int expected = 0;
        for (size_t i = 0; !g.empty() && i + g.size() <= s.size(); ++i) {
            if (std::equal(g.begin(), g.end(), s.begin() + i)) {
                expected = 1;
                break;
            }
        }
        CHECK(strinc_label(sentence, gold) == expected);
    }
}

TEST_CASE("cxmi_score is the logprob difference") {
    Query query = q("who?");
    // first entry: with sentence; second: without
    MockGateway mock({test::scored({-1.0}), test::scored({-3.0})}, MockMode::sequential);
    CHECK(cxmi_score(query, "s", "gold", "", mock, "m") == doctest::Approx(2.0));

    MockGateway equal({test::scored({-2.0}), test::scored({-2.0})}, MockMode::sequential);
    CHECK(cxmi_score(query, "s", "gold", "", equal, "m") == doctest::Approx(0.0));

    MockGateway harmful({test::scored({-4.0}), test::scored({-3.0})}, MockMode::sequential);
    CHECK(cxmi_score(query, "s", "gold", "", harmful, "m") == doctest::Approx(-1.0));
}

TEST_CASE("build_training_set with strinc keeps answer-bearing sentences") {
    FiltergenItem item;
    item.query = q("Where is the Eiffel Tower?");
    item.chunks = {chunk("The Eiffel Tower is in Paris. It is made of iron.")};
    item.gold_answer = "Paris";

    MockGateway mock({test::reply(R"({"NLI result":"useful"})")}, MockMode::sequential);
    FiltergenSummary summary;
    auto examples = build_training_set({item}, FilterMeasure::strinc, 0.0, test::prompts(),
                                       mock, "m", &summary);
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].kind == "chunk_nli");
    CHECK(examples[0].label == "useful");
    CHECK(examples[1].kind == "sentence_filter");
    CHECK(examples[1].target == "The Eiffel Tower is in Paris.");
    CHECK(examples[1].sentences[0].strinc == 1);
    CHECK(examples[1].sentences[1].strinc == 0);
    CHECK(summary.emitted == 2);
}

TEST_CASE("build_training_set with cxmi thresholds per sentence") {
    FiltergenItem item;
    item.query = q("who?");
    item.chunks = {chunk("First fact. Second fact.")};
    item.gold_answer = "gold";

    // NLI verdict, then (with, without) scores per sentence: +0.9 and +0.1
    MockGateway mock({test::reply(R"({"NLI result":"useless"})"),
                      test::scored({-1.1}), test::scored({-2.0}),
                      test::scored({-1.9}), test::scored({-2.0})},
                     MockMode::sequential);
    auto examples = build_training_set({item}, FilterMeasure::cxmi, 0.5, test::prompts(),
                                       mock, "m");
    REQUIRE(examples.size() == 2);
    CHECK(examples[1].target == "First fact.");
    CHECK(*examples[1].sentences[0].cxmi == doctest::Approx(0.9));
    CHECK(*examples[1].sentences[1].cxmi == doctest::Approx(0.1));
}

TEST_CASE("build_training_set flags low-signal examples") {
    FiltergenItem item;
    item.query = q("who?");
    item.chunks = {chunk("Nothing relevant here.")};
    item.gold_answer = "Paris";
    MockGateway mock({test::reply(R"({"NLI result":"useless"})")}, MockMode::sequential);
    auto examples =
        build_training_set({item}, FilterMeasure::strinc, 0.0, test::prompts(), mock, "m");
    REQUIRE(examples.size() == 2);
    CHECK(examples[1].target.empty());
    CHECK(examples[1].low_signal);
}
