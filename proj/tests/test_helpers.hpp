#pragma once

#include <string>
#include <vector>

#include "amber/llm.hpp"
#include "amber/prompt.hpp"

namespace amber::test {

inline const PromptSet& prompts() {
    static PromptSet set = PromptSet::load(std::string(AMBER_SOURCE_DIR) + "/prompts");
    return set;
}

inline MockEntry reply(const std::string& text) {
    MockEntry entry;
    entry.response.text = text;
    return entry;
}

inline MockEntry reply_for(const std::string& tag, const std::string& text) {
    MockEntry entry;
    entry.template_tag = tag;
    entry.response.text = text;
    return entry;
}

inline MockEntry scored(const std::vector<double>& logprobs) {
    MockEntry entry;
    std::vector<TokenLogprob> lps;
    for (double lp : logprobs) lps.push_back({"", lp});
    entry.response.token_logprobs = std::move(lps);
    return entry;
}

}  // namespace amber::test
