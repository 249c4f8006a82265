#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "amber/agents.hpp"
#include "amber/filter.hpp"
#include "amber/llm.hpp"
#include "amber/prompt.hpp"
#include "amber/retriever.hpp"
#include "amber/types.hpp"

namespace amber {

struct LoopConfig {
    int max_iter = 3;
    int top_k = 5;
    bool stop_on_no_improvement = true;
    std::string model = "default";
};

/// Queries issued so far, starting with the original. Entries are unique
/// after lowercasing and whitespace collapsing.
class QueryLog {
  public:
    explicit QueryLog(const std::string& original);

    /// False when the candidate duplicates an existing entry (normalized).
    bool append(const std::string& query);
    const std::vector<std::string>& entries() const { return entries_; }

    /// Numbered list for the {query_log} placeholder.
    std::string rendered() const;

  private:
    std::vector<std::string> entries_;
    std::vector<std::string> normalized_;
};

struct RetrievedRef {
    std::string doc_id;
    double score;
};

struct IterationTrace {
    int step = 0;
    std::string issued_query;
    std::vector<RetrievedRef> retrieved;
    std::vector<ChunkFilterRecord> verdicts;
    std::vector<std::string> passage_ids;  // chunks surviving the filter
    std::optional<AgentTranscript> transcript;
    std::optional<bool> compare_result;
    std::optional<bool> sufficiency;
    bool sufficiency_parse_failed = false;
    int note_before = 0;
    int note_after = 0;
};

enum class StopReason { sufficient, no_improvement, max_iter, rewrite_failed };
std::string to_string(StopReason reason);

struct RunResult {
    Query query;
    MemoryNote final_note;
    Answer answer;
    std::vector<IterationTrace> iterations;
    long llm_calls = 0;
    StopReason stopped_because = StopReason::max_iter;
};

struct InitFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AnswerFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RewriteParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DuplicateQuery : std::runtime_error {
    using std::runtime_error::runtime_error;
};

MemoryNote init_memory(const Query& query, const std::vector<FilteredPassage>& passages,
                       const PromptSet& prompts, LlmGateway& gateway,
                       const std::string& model);

struct SufficiencyResult {
    bool sufficient = false;
    bool parse_failed = false;
};

SufficiencyResult judge_sufficiency(const Query& query, const MemoryNote& note,
                                    const PromptSet& prompts, LlmGateway& gateway,
                                    const std::string& model);

/// Extracts the rewrite after the last "### New Question" marker line and
/// rejects duplicates against the query log.
std::string rewrite_query(const Query& query, const MemoryNote& note, const QueryLog& log,
                          const PromptSet& prompts, LlmGateway& gateway,
                          const std::string& model);

Answer generate_answer(const Query& query, const MemoryNote& final_note,
                       const PromptSet& prompts, LlmGateway& gateway,
                       const std::string& model);

/// The full adaptive loop for one question:
/// retrieve -> filter -> init/update memory -> compare -> sufficiency ->
/// rewrite, capped at max_iter, then answer from the best note only.
RunResult run_question(const Query& query, const Bm25Index& index, const LoopConfig& config,
                       const PromptSet& prompts, LlmGateway& gateway);

/// Canonical JSON serialization of a RunResult (no timestamps; byte-stable
/// for replay-determinism checks). Includes "trace_version": 1.
std::string run_result_to_json(const RunResult& result, bool pretty = false);

}  // namespace amber
