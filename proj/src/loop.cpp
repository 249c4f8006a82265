#include "amber/loop.hpp"

#include <cctype>
#include <sstream>

#include <json.hpp>

namespace amber {

using nlohmann::json;

namespace {

LlmRequest loop_request(const std::string& model, const std::string& prompt,
                        const std::string& tag) {
    LlmRequest request;
    request.model = model;
    request.messages = {{"user", prompt}};
    request.tag = tag;
    return request;
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string normalize_query(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

}  // namespace

QueryLog::QueryLog(const std::string& original) {
    entries_.push_back(original);
    normalized_.push_back(normalize_query(original));
}

bool QueryLog::append(const std::string& query) {
    std::string norm = normalize_query(query);
    for (const auto& existing : normalized_) {
        if (existing == norm) return false;
    }
    entries_.push_back(query);
    normalized_.push_back(std::move(norm));
    return true;
}

std::string QueryLog::rendered() const {
    std::string out;
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (i > 0) out += '\n';
        out += std::to_string(i + 1) + ". " + entries_[i];
    }
    return out;
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::sufficient: return "sufficient";
        case StopReason::no_improvement: return "no_improvement";
        case StopReason::max_iter: return "max_iter";
        case StopReason::rewrite_failed: return "rewrite_failed";
    }
    return "unknown";
}

MemoryNote init_memory(const Query& query, const std::vector<FilteredPassage>& passages,
                       const PromptSet& prompts, LlmGateway& gateway,
                       const std::string& model) {
    std::string prompt = prompts.get(TemplateName::memory_init)
                             .render({{"query", query.text}, {"refs", join_refs(passages)}});
    LlmResponse reply = gateway.complete(loop_request(model, prompt, "memory_init"));
    std::string text = trim(reply.text);
    if (text.empty()) throw InitFailed("memory initialization returned an empty note");
    return {text, 0, NoteOrigin::initialized};
}

SufficiencyResult judge_sufficiency(const Query& query, const MemoryNote& note,
                                    const PromptSet& prompts, LlmGateway& gateway,
                                    const std::string& model) {
    std::string prompt = prompts.get(TemplateName::sufficiency_judge)
                             .render({{"query", query.text}, {"note", note.text}});
    LlmResponse reply = gateway.complete(loop_request(model, prompt, "sufficiency_judge"));

    auto parse = [](const std::string& text) -> std::optional<bool> {
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::exception&) {
            return std::nullopt;
        }
        if (!obj.is_object() || !obj.contains("sufficient") ||
            !obj["sufficient"].is_boolean()) {
            return std::nullopt;
        }
        return obj["sufficient"].get<bool>();
    };

    if (auto value = parse(reply.text)) return {*value, false};
    auto start = reply.text.find('{');
    auto end = reply.text.rfind('}');
    if (start != std::string::npos && end != std::string::npos && end > start) {
        if (auto value = parse(reply.text.substr(start, end - start + 1))) {
            return {*value, false};
        }
    }
    // parse failure keeps collecting
    return {false, true};
}

std::string rewrite_query(const Query& query, const MemoryNote& note, const QueryLog& log,
                          const PromptSet& prompts, LlmGateway& gateway,
                          const std::string& model) {
    std::string prompt = prompts.get(TemplateName::query_rewrite)
                             .render({{"query", query.text},
                                      {"note", note.text},
                                      {"query_log", log.rendered()}});
    LlmResponse reply = gateway.complete(loop_request(model, prompt, "query_rewrite"));

    static const std::string kMarker = "### New Question";
    size_t marker = std::string::npos;
    size_t line_start = 0;
    const std::string& text = reply.text;
    while (line_start <= text.size()) {
        size_t line_end = text.find('\n', line_start);
        if (line_end == std::string::npos) line_end = text.size();
        size_t content = line_start;
        while (content < line_end && std::isspace(static_cast<unsigned char>(text[content])))
            ++content;
        if (text.compare(content, kMarker.size(), kMarker) == 0) marker = content;
        if (line_end == text.size()) break;
        line_start = line_end + 1;
    }
    if (marker == std::string::npos) {
        throw RewriteParseError("no '### New Question' marker in rewrite reply");
    }
    std::string rest = text.substr(marker + kMarker.size());
    size_t pos = 0;
    while (pos < rest.size() && (rest[pos] == ':' || rest[pos] == ' ')) ++pos;
    std::string rewritten = trim(rest.substr(pos));
    if (rewritten.empty()) {
        throw RewriteParseError("empty rewrite after '### New Question' marker");
    }
    std::string norm = normalize_query(rewritten);
    for (const auto& existing : log.entries()) {
        if (normalize_query(existing) == norm) {
            throw DuplicateQuery("rewrite duplicates an issued query: " + rewritten);
        }
    }
    return rewritten;
}

Answer generate_answer(const Query& query, const MemoryNote& final_note,
                       const PromptSet& prompts, LlmGateway& gateway,
                       const std::string& model) {
    std::string prompt = prompts.get(TemplateName::final_answer)
                             .render({{"note", final_note.text}, {"query", query.text}});
    LlmResponse reply = gateway.complete(loop_request(model, prompt, "final_answer"));
    std::string text = trim(reply.text);
    if (text.empty()) throw AnswerFailed("answer generation returned an empty completion");
    return {text};
}

RunResult run_question(const Query& query, const Bm25Index& index, const LoopConfig& config,
                       const PromptSet& prompts, LlmGateway& gateway) {
    CountingGateway counted(gateway);
    RunResult result;
    result.query = query;

    QueryLog log(query.text);

    auto retrieve_and_filter = [&](const std::string& issued, int step,
                                   IterationTrace& trace) {
        trace.step = step;
        trace.issued_query = issued;
        std::vector<Chunk> chunks = index.search(issued, config.top_k);
        for (auto& chunk : chunks) {
            chunk.step = step;
            trace.retrieved.push_back({chunk.doc_id, chunk.score});
        }
        // sentence filtering follows the query that drove the retrieval
        FilterResult filtered =
            filter_chunks({query.id, issued}, chunks, prompts, counted, config.model);
        trace.verdicts = filtered.records;
        for (const auto& p : filtered.passages) trace.passage_ids.push_back(p.source.doc_id);
        return filtered.passages;
    };

    // t = 1: retrieve on the original query, initialize the note
    IterationTrace first;
    std::vector<FilteredPassage> passages = retrieve_and_filter(query.text, 1, first);
    MemoryNote best = init_memory(query, passages, prompts, counted, config.model);
    first.note_before = best.version;
    first.note_after = best.version;
    SufficiencyResult judgment = judge_sufficiency(query, best, prompts, counted, config.model);
    first.sufficiency = judgment.sufficient;
    first.sufficiency_parse_failed = judgment.parse_failed;
    result.iterations.push_back(std::move(first));

    bool stopped = false;
    if (judgment.sufficient) {
        result.stopped_because = StopReason::sufficient;
        stopped = true;
    }

    int t = 1;
    while (!stopped && t < config.max_iter) {
        IterationTrace trace;
        std::string issued;
        try {
            issued = rewrite_query(query, best, log, prompts, counted, config.model);
        } catch (const RewriteParseError&) {
            result.stopped_because = StopReason::rewrite_failed;
            break;
        } catch (const DuplicateQuery&) {
            result.stopped_because = StopReason::rewrite_failed;
            break;
        }
        log.append(issued);

        ++t;
        std::vector<FilteredPassage> refs = retrieve_and_filter(issued, t, trace);
        trace.note_before = best.version;

        MemoryUpdate update = update_memory(query, refs, best, prompts, counted, config.model);
        trace.transcript = update.transcript;
        CompareResult comparison =
            compare_notes(query, best, update.candidate, prompts, counted, config.model);
        trace.compare_result = comparison.new_is_better;
        if (comparison.new_is_better) {
            best = update.candidate;
        } else if (config.stop_on_no_improvement) {
            trace.note_after = best.version;
            result.iterations.push_back(std::move(trace));
            result.stopped_because = StopReason::no_improvement;
            stopped = true;
            break;
        }
        trace.note_after = best.version;

        judgment = judge_sufficiency(query, best, prompts, counted, config.model);
        trace.sufficiency = judgment.sufficient;
        trace.sufficiency_parse_failed = judgment.parse_failed;
        result.iterations.push_back(std::move(trace));
        if (judgment.sufficient) {
            result.stopped_because = StopReason::sufficient;
            stopped = true;
        }
    }
    if (!stopped && result.stopped_because != StopReason::rewrite_failed) {
        result.stopped_because = StopReason::max_iter;
    }

    result.final_note = best;
    result.answer = generate_answer(query, best, prompts, counted, config.model);
    result.llm_calls = counted.count();
    return result;
}

std::string run_result_to_json(const RunResult& result, bool pretty) {
    json iterations = json::array();
    for (const auto& it : result.iterations) {
        json retrieved = json::array();
        for (const auto& r : it.retrieved) {
            retrieved.push_back({{"doc_id", r.doc_id}, {"score", r.score}});
        }
        json verdicts = json::array();
        for (const auto& v : it.verdicts) {
            verdicts.push_back({{"doc_id", v.doc_id},
                                {"verdict", v.verdict},
                                {"retained_whole", v.retained_whole},
                                {"warnings", v.warnings}});
        }
        json entry = {
            {"step", it.step},
            {"issued_query", it.issued_query},
            {"retrieved", retrieved},
            {"verdicts", verdicts},
            {"passages", it.passage_ids},
            {"note_before", it.note_before},
            {"note_after", it.note_after},
        };
        if (it.transcript) {
            entry["transcript"] = {{"review_info", it.transcript->review_info},
                                   {"suggestions", it.transcript->suggestions},
                                   {"refined_note", it.transcript->refined_note},
                                   {"call_count", it.transcript->call_count}};
        }
        if (it.compare_result) entry["compare_result"] = *it.compare_result;
        if (it.sufficiency) entry["sufficiency"] = *it.sufficiency;
        if (it.sufficiency_parse_failed) entry["sufficiency_parse_failed"] = true;
        iterations.push_back(std::move(entry));
    }
    json obj = {
        {"trace_version", 1},
        {"id", result.query.id},
        {"question", result.query.text},
        {"final_note",
         {{"text", result.final_note.text}, {"version", result.final_note.version}}},
        {"answer", result.answer.text},
        {"iterations", iterations},
        {"llm_calls", result.llm_calls},
        {"stopped_because", to_string(result.stopped_because)},
    };
    return pretty ? obj.dump(2) : obj.dump();
}

}  // namespace amber
