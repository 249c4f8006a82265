#include <doctest.h>

#include "amber/loop.hpp"
#include "test_helpers.hpp"

using namespace amber;

namespace {

Query q() { return {"q1", "Who founded X?"}; }

Bm25Index small_index() {
    std::vector<Passage> passages = {
        {"a#0", "Alpha", "X was founded by Y."},
        {"b#0", "Beta", "Y lived in Paris."},
    };
    return Bm25Index::build(passages);
}

LoopConfig config(int max_iter = 3) {
    LoopConfig c;
    c.max_iter = max_iter;
    c.top_k = 5;
    c.model = "m";
    return c;
}

const std::string kUseful = R"({"NLI result":"useful"})";
const std::string kUseless = R"({"NLI result":"useless"})";
const std::string kSufficient = R"({"sufficient": true})";
const std::string kInsufficient = R"({"sufficient": false})";

}  // namespace

TEST_CASE("init_memory builds a version-0 note") {
    MockGateway mock({test::reply("Note v0")}, MockMode::sequential);
    auto note = init_memory(q(), {}, test::prompts(), mock, "m");
    CHECK(note.text == "Note v0");
    CHECK(note.version == 0);
    CHECK(note.origin == NoteOrigin::initialized);

    MockGateway empty({test::reply("   ")}, MockMode::sequential);
    CHECK_THROWS_AS(init_memory(q(), {}, test::prompts(), empty, "m"), InitFailed);
}

TEST_CASE("judge_sufficiency maps strict JSON and falls back conservatively") {
    MockGateway yes({test::reply(kSufficient)}, MockMode::sequential);
    CHECK(judge_sufficiency(q(), {"n", 0, NoteOrigin::initialized}, test::prompts(), yes, "m")
              .sufficient);

    MockGateway no({test::reply(kInsufficient)}, MockMode::sequential);
    auto result =
        judge_sufficiency(q(), {"n", 0, NoteOrigin::initialized}, test::prompts(), no, "m");
    CHECK_FALSE(result.sufficient);
    CHECK_FALSE(result.parse_failed);

    MockGateway garbage({test::reply("hmm, maybe?")}, MockMode::sequential);
    result = judge_sufficiency(q(), {"n", 0, NoteOrigin::initialized}, test::prompts(),
                               garbage, "m");
    CHECK_FALSE(result.sufficient);
    CHECK(result.parse_failed);
}

TEST_CASE("rewrite_query extracts after the last marker and rejects duplicates") {
    QueryLog log(q().text);
    MemoryNote note{"n", 0, NoteOrigin::initialized};

    MockGateway ok({test::reply("thinking...\n### New Question: Who founded X Corp?")},
                   MockMode::sequential);
    CHECK(rewrite_query(q(), note, log, test::prompts(), ok, "m") == "Who founded X Corp?");

    MockGateway multi(
        {test::reply("### New Question: first try\nmore text\n### New Question second try")},
        MockMode::sequential);
    CHECK(rewrite_query(q(), note, log, test::prompts(), multi, "m") == "second try");

    MockGateway duplicate({test::reply("### New Question: who founded x?")},
                          MockMode::sequential);
    CHECK_THROWS_AS(rewrite_query(q(), note, log, test::prompts(), duplicate, "m"),
                    DuplicateQuery);

    MockGateway unmarked({test::reply("I cannot think of one.")}, MockMode::sequential);
    CHECK_THROWS_AS(rewrite_query(q(), note, log, test::prompts(), unmarked, "m"),
                    RewriteParseError);
}

TEST_CASE("query log dedups on normalized form") {
    QueryLog log("Who founded X?");
    CHECK_FALSE(log.append("  who   FOUNDED x?  "));
    CHECK(log.append("Where is X?"));
    CHECK(log.entries().size() == 2);
    CHECK(log.rendered() == "1. Who founded X?\n2. Where is X?");
}

TEST_CASE("generate_answer trims and rejects empty completions") {
    MemoryNote note{"the note body", 0, NoteOrigin::initialized};
    MockEntry entry = test::reply("  Paris \n");
    entry.contains = "the note body";  // final prompt carries the note verbatim
    MockGateway mock({entry}, MockMode::sequential);
    CHECK(generate_answer(q(), note, test::prompts(), mock, "m").text == "Paris");

    MockGateway empty({test::reply(" \n ")}, MockMode::sequential);
    CHECK_THROWS_AS(generate_answer(q(), note, test::prompts(), empty, "m"), AnswerFailed);
}

TEST_CASE("run_question stops at the first sufficiency signal") {
    auto index = small_index();
    MockGateway mock({test::reply_for("chunk_filter", kUseful),
                      test::reply_for("sentence_filter", "X was founded by Y."),
                      test::reply_for("memory_init", "Note v0"),
                      test::reply_for("sufficiency_judge", kSufficient),
                      test::reply_for("final_answer", "Y")},
                     MockMode::sequential);
    auto result = run_question(q(), index, config(), test::prompts(), mock);
    CHECK(result.stopped_because == StopReason::sufficient);
    CHECK(result.iterations.size() == 1);
    CHECK(result.answer.text == "Y");
    CHECK(result.final_note.version == 0);
    CHECK(result.llm_calls == 5);
    CHECK(mock.entries_left() == 0);  // no rewrite was ever issued
}

TEST_CASE("run_question runs exactly max_iter iterations when never sufficient") {
    auto index = small_index();
    MockGateway mock(
        {
            // t=1
            test::reply_for("chunk_filter", kUseful),
            test::reply_for("sentence_filter", "X was founded by Y."),
            test::reply_for("memory_init", "Note v0"),
            test::reply_for("sufficiency_judge", kInsufficient),
            // t=2
            test::reply_for("query_rewrite", "### New Question: Paris residence"),
            test::reply_for("chunk_filter", kUseful),
            test::reply_for("sentence_filter", "Y lived in Paris."),
            test::reply_for("reviewer", "review 1"),
            test::reply_for("challenger", "suggestions 1"),
            test::reply_for("refiner", "Note v1"),
            test::reply_for("note_compare", R"({"status": "True"})"),
            test::reply_for("sufficiency_judge", kInsufficient),
            // t=3 (rewrite retrieves nothing)
            test::reply_for("query_rewrite", "### New Question: zebra habitats"),
            test::reply_for("reviewer", "review 2"),
            test::reply_for("challenger", "suggestions 2"),
            test::reply_for("refiner", "Note v2"),
            test::reply_for("note_compare", R"({"status": "True"})"),
            test::reply_for("sufficiency_judge", kInsufficient),
            // answer
            test::reply_for("final_answer", "Y"),
        },
        MockMode::sequential);

    auto result = run_question(q(), index, config(), test::prompts(), mock);
    CHECK(result.stopped_because == StopReason::max_iter);
    REQUIRE(result.iterations.size() == 3);
    CHECK(result.final_note.text == "Note v2");
    CHECK(result.final_note.version == 2);
    CHECK(result.iterations[1].issued_query == "Paris residence");
    CHECK(result.iterations[2].retrieved.empty());
    CHECK(result.llm_calls == 19);
    CHECK(mock.entries_left() == 0);
}

TEST_CASE("run_question stops on non-improvement and keeps the best note") {
    auto index = small_index();
    MockGateway mock(
        {
            test::reply_for("chunk_filter", kUseful),
            test::reply_for("sentence_filter", "X was founded by Y."),
            test::reply_for("memory_init", "Note v0"),
            test::reply_for("sufficiency_judge", kInsufficient),
            test::reply_for("query_rewrite", "### New Question: Paris residence"),
            test::reply_for("chunk_filter", kUseful),
            test::reply_for("sentence_filter", "Y lived in Paris."),
            test::reply_for("reviewer", "r"),
            test::reply_for("challenger", "c"),
            test::reply_for("refiner", "worse note"),
            test::reply_for("note_compare", R"({"status": "False"})"),
            test::reply_for("final_answer", "Y"),
        },
        MockMode::sequential);
    auto result = run_question(q(), index, config(), test::prompts(), mock);
    CHECK(result.stopped_because == StopReason::no_improvement);
    CHECK(result.iterations.size() == 2);
    CHECK(result.final_note.text == "Note v0");
    CHECK(result.final_note.version == 0);
    CHECK(result.iterations[1].compare_result == false);
    CHECK(mock.entries_left() == 0);
}

TEST_CASE("run_question answers from the best note after a rewrite failure") {
    auto index = small_index();
    MockGateway mock(
        {
            test::reply_for("chunk_filter", kUseful),
            test::reply_for("sentence_filter", "X was founded by Y."),
            test::reply_for("memory_init", "Note v0"),
            test::reply_for("sufficiency_judge", kInsufficient),
            test::reply_for("query_rewrite", "I cannot think of a new question."),
            test::reply_for("final_answer", "Y"),
        },
        MockMode::sequential);
    auto result = run_question(q(), index, config(), test::prompts(), mock);
    CHECK(result.stopped_because == StopReason::rewrite_failed);
    CHECK(result.iterations.size() == 1);
    CHECK(result.answer.text == "Y");
}

TEST_CASE("run_question proceeds when every chunk is filtered out") {
    auto index = small_index();
    MockGateway mock(
        {
            test::reply_for("chunk_filter", kUseless),
            test::reply_for("memory_init", "Thin note"),
            test::reply_for("sufficiency_judge", kSufficient),
            test::reply_for("final_answer", "unknown"),
        },
        MockMode::sequential);
    auto result = run_question(q(), index, config(), test::prompts(), mock);
    CHECK(result.stopped_because == StopReason::sufficient);
    CHECK(result.answer.text == "unknown");
    CHECK(result.iterations[0].passage_ids.empty());
}

TEST_CASE("replay with an identical script is byte-deterministic") {
    auto index = small_index();
    auto run_once = [&] {
        MockGateway mock({test::reply_for("chunk_filter", kUseful),
                          test::reply_for("sentence_filter", "X was founded by Y."),
                          test::reply_for("memory_init", "Note v0"),
                          test::reply_for("sufficiency_judge", kSufficient),
                          test::reply_for("final_answer", "Y")},
                         MockMode::sequential);
        return run_result_to_json(run_question(q(), index, config(), test::prompts(), mock));
    };
    CHECK(run_once() == run_once());
}
