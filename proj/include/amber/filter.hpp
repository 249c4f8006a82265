#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "amber/llm.hpp"
#include "amber/prompt.hpp"
#include "amber/types.hpp"

namespace amber {

struct FilterVerdict {
    enum class Value { useful, useless };
    Value value;
    std::string raw;  // the model's reply, kept for tracing
};

struct FilterParseError : std::runtime_error {
    explicit FilterParseError(const std::string& raw)
        : std::runtime_error("unparseable filter verdict: " + raw) {}
};

/// Per-chunk record of what the filter decided, for the run trace.
struct ChunkFilterRecord {
    std::string doc_id;
    std::string verdict;  // useful | useless | parse_failed
    bool retained_whole = false;
    std::vector<std::string> warnings;
};

struct FilterResult {
    std::vector<FilteredPassage> passages;
    std::vector<ChunkFilterRecord> records;
};

/// Chunk-level NLI verdict. Strict parse of the mandated JSON reply, with one
/// repair pass (first {...} span) before failing.
FilterVerdict chunk_filter(const Query& query, const Chunk& chunk, const PromptSet& prompts,
                           LlmGateway& gateway, const std::string& model);

/// Sentence-level extraction. Every returned sentence is validated as a
/// whitespace-normalized substring of the chunk; hallucinated lines are
/// dropped with a warning. Ordered by first occurrence in the chunk.
FilteredPassage sentence_filter(const Query& query, const Chunk& chunk,
                                const PromptSet& prompts, LlmGateway& gateway,
                                const std::string& model,
                                std::vector<std::string>* warnings = nullptr);

/// Two-level filtering over a ranked retrieval result. Useless chunks are
/// discarded; a useful chunk with an empty validated extraction is retained
/// whole; a chunk whose verdict fails to parse is retained whole (fail-open).
/// Output preserves retrieval rank order.
FilterResult filter_chunks(const Query& query, const std::vector<Chunk>& chunks,
                           const PromptSet& prompts, LlmGateway& gateway,
                           const std::string& model);

/// 1 iff the normalized gold answer occurs as a contiguous token subsequence
/// of the normalized sentence. Normalization: lowercase, punctuation
/// stripped, whitespace collapsed.
int strinc_label(const std::string& sentence, const std::string& gold_answer);

/// Logprob gain (nats) of the gold answer when `sentence` is appended to the
/// base context. Positive means the sentence helps.
double cxmi_score(const Query& query, const std::string& sentence,
                  const std::string& gold_answer, const std::string& base_context,
                  LlmGateway& gateway, const std::string& model);

enum class FilterMeasure { strinc, cxmi };

struct SentenceMeta {
    std::string text;
    int strinc = 0;
    std::optional<double> cxmi;
};

struct TrainingExample {
    std::string kind;  // chunk_nli | sentence_filter
    std::string query;
    std::string input_context;
    std::string label;   // chunk_nli: useful/useless
    std::string target;  // sentence_filter: t_output
    std::string explanation;  // labeler's raw reply, chunk_nli only
    std::vector<SentenceMeta> sentences;
    bool low_signal = false;  // sentence_filter with empty t_output
};

struct FiltergenItem {
    Query query;
    std::vector<Chunk> chunks;
    std::string gold_answer;
};

struct FiltergenSummary {
    int emitted = 0;
    int skipped = 0;
    int useful = 0;
    int useless = 0;
};

/// Appendix-style training-data generation: one NLI example per chunk
/// (label delegated to the gateway) and one sentence-filter example whose
/// target keeps exactly the sentences passing the active measure.
std::vector<TrainingExample> build_training_set(const std::vector<FiltergenItem>& items,
                                                FilterMeasure measure, double threshold,
                                                const PromptSet& prompts, LlmGateway& gateway,
                                                const std::string& model,
                                                FiltergenSummary* summary = nullptr);

std::string training_example_to_json(const TrainingExample& example);

}  // namespace amber
