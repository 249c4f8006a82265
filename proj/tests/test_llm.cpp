#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <memory>

#include "amber/llm.hpp"
#include "test_helpers.hpp"

using namespace amber;

namespace {

LlmRequest simple_request(const std::string& content, const std::string& tag = "") {
    LlmRequest request;
    request.model = "m";
    request.messages = {{"user", content}};
    request.tag = tag;
    return request;
}

}  // namespace

TEST_CASE("mock sequential playback and exhaustion") {
    MockGateway mock({test::reply("hello")}, MockMode::sequential);
    CHECK(mock.complete(simple_request("hi")).text == "hello");
    CHECK_THROWS_AS(mock.complete(simple_request("again")), MockExhausted);
}

TEST_CASE("mock sequential matchers catch pipeline drift") {
    MockGateway mock({test::reply_for("reviewer", "r")}, MockMode::sequential);
    CHECK_THROWS_AS(mock.complete(simple_request("x", "challenger")), MockUnmatched);
}

TEST_CASE("mock matched mode selects by tag and substring") {
    MockEntry a = test::reply_for("final_answer", "Paris");
    MockEntry b = test::reply_for("memory_init", "a note");
    b.contains = "Eiffel";
    MockGateway mock({a, b}, MockMode::matched);
    CHECK(mock.complete(simple_request("Where is the Eiffel Tower?", "memory_init")).text ==
          "a note");
    CHECK(mock.complete(simple_request("q", "final_answer")).text == "Paris");
    CHECK_THROWS_AS(mock.complete(simple_request("q", "reviewer")), MockUnmatched);
}

TEST_CASE("score_continuation sums scripted logprobs") {
    MockGateway mock({test::scored({-1.0, -0.5})}, MockMode::sequential);
    CHECK(mock.score_continuation("prefix", "gold", "m") == doctest::Approx(-1.5));
    CHECK(mock.score_continuation("prefix", "", "m") == 0.0);  // no entry consumed
}

TEST_CASE("score_continuation without scripted logprobs is unsupported") {
    MockGateway mock({test::reply("text only")}, MockMode::sequential);
    CHECK_THROWS_AS(mock.score_continuation("p", "c", "m"), UnsupportedError);
}

TEST_CASE("cache_key is deterministic and field-sensitive") {
    LlmRequest a = simple_request("hello");
    LlmRequest b = simple_request("hello");
    CHECK(cache_key(a) == cache_key(b));
    CHECK(cache_key(a).size() == 64);

    b.temperature = 0.5;
    CHECK(cache_key(a) != cache_key(b));

    LlmRequest two_messages = simple_request("hello");
    two_messages.messages.push_back({"assistant", "x"});
    LlmRequest reordered = two_messages;
    std::swap(reordered.messages[0], reordered.messages[1]);
    CHECK(cache_key(two_messages) != cache_key(reordered));

    // tag is metadata, not identity
    LlmRequest tagged = simple_request("hello");
    tagged.tag = "reviewer";
    CHECK(cache_key(tagged) == cache_key(a));
}

TEST_CASE("cache serves repeats without touching the backend") {
    auto dir = std::filesystem::temp_directory_path() / "amber_cache_test";
    std::filesystem::remove_all(dir);
    auto mock = std::make_shared<MockGateway>(
        std::vector<MockEntry>{test::reply("hello")}, MockMode::sequential);
    CachedGateway cached(mock, dir.string());

    CHECK(cached.complete(simple_request("hi")).text == "hello");
    CHECK(cached.backend_calls() == 1);
    // second identical call: served from cache, mock untouched
    CHECK(cached.complete(simple_request("hi")).text == "hello");
    CHECK(cached.backend_calls() == 1);
    CHECK(mock->entries_left() == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cached scores round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "amber_cache_scores";
    std::filesystem::remove_all(dir);
    auto mock = std::make_shared<MockGateway>(
        std::vector<MockEntry>{test::scored({-2.0, -1.0})}, MockMode::sequential);
    CachedGateway cached(mock, dir.string());
    CHECK(cached.score_continuation("p", "c", "m") == doctest::Approx(-3.0));
    CHECK(cached.score_continuation("p", "c", "m") == doctest::Approx(-3.0));
    CHECK(cached.backend_calls() == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("mock script file parsing") {
    auto path = std::filesystem::temp_directory_path() / "amber_mock_script.jsonl";
    {
        std::ofstream out(path);
        out << R"({"mode":"matched"})" << "\n";
        out << R"({"template":"final_answer","text":"Paris"})" << "\n";
        out << R"({"template":"score_continuation","logprobs":[-1.0,-0.5]})" << "\n";
    }
    auto mock = MockGateway::from_file(path.string());
    CHECK(mock.complete(simple_request("q", "final_answer")).text == "Paris");
    CHECK(mock.score_continuation("p", "c", "m") == doctest::Approx(-1.5));
    std::filesystem::remove(path);
}

TEST_CASE("response JSON round-trip") {
    LlmResponse response;
    response.text = "body";
    response.prompt_tokens = 3;
    response.completion_tokens = 2;
    response.token_logprobs = std::vector<TokenLogprob>{{"a", -0.1}, {"b", -0.2}};
    LlmResponse back = response_from_json(response_to_json(response));
    CHECK(back.text == "body");
    CHECK(back.prompt_tokens == 3);
    REQUIRE(back.token_logprobs.has_value());
    CHECK((*back.token_logprobs)[1].logprob == doctest::Approx(-0.2));
}
