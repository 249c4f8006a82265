#pragma once

#include <string>
#include <vector>

#include "amber/llm.hpp"
#include "amber/prompt.hpp"
#include "amber/types.hpp"

namespace amber {

/// One Reviewer -> Challenger -> Refiner pass. call_count tracks how many of
/// the three calls completed before a failure aborted the update.
struct AgentTranscript {
    std::string review_info;
    std::string suggestions;
    std::string refined_note;
    int call_count = 0;
    bool noop_refinement = false;  // refiner replied whitespace-only
};

struct MemoryUpdate {
    MemoryNote candidate;
    AgentTranscript transcript;
};

std::string review(const Query& query, const std::vector<FilteredPassage>& refs,
                   const MemoryNote& note, const PromptSet& prompts, LlmGateway& gateway,
                   const std::string& model);

std::string challenge(const Query& query, const std::vector<FilteredPassage>& refs,
                      const MemoryNote& note, const std::string& review_info,
                      const PromptSet& prompts, LlmGateway& gateway,
                      const std::string& model);

std::string refine(const Query& query, const std::vector<FilteredPassage>& refs,
                   const MemoryNote& note, const std::string& review_info,
                   const std::string& suggestions, const PromptSet& prompts,
                   LlmGateway& gateway, const std::string& model);

/// Runs the three agents in order and returns the candidate note (version
/// bumped, origin refined) plus the full transcript. The first failing agent
/// call aborts; the caller keeps its prior note.
MemoryUpdate update_memory(const Query& query, const std::vector<FilteredPassage>& refs,
                           const MemoryNote& note, const PromptSet& prompts,
                           LlmGateway& gateway, const std::string& model);

struct CompareResult {
    bool new_is_better = false;
    bool parse_failed = false;  // conservative False was substituted
    std::string raw;
};

/// Strict JSON {"status": "True"/"False"} comparison of the best note against
/// a candidate. Unparseable output keeps the best note (False) and flags it.
CompareResult compare_notes(const Query& query, const MemoryNote& best_note,
                            const MemoryNote& new_note, const PromptSet& prompts,
                            LlmGateway& gateway, const std::string& model);

}  // namespace amber
