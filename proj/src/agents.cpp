#include "amber/agents.hpp"

#include <cctype>
#include <optional>

#include <json.hpp>

namespace amber {

using nlohmann::json;

namespace {

LlmRequest agent_request(const std::string& model, const std::string& prompt,
                         const std::string& tag) {
    LlmRequest request;
    request.model = model;
    request.messages = {{"user", prompt}};
    request.tag = tag;
    return request;
}

bool all_whitespace(const std::string& s) {
    for (char c : s) {
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

std::optional<std::string> first_json_span(const std::string& text) {
    auto start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    for (size_t i = start; i < text.size(); ++i) {
        if (text[i] == '{') ++depth;
        if (text[i] == '}' && --depth == 0) return text.substr(start, i - start + 1);
    }
    return std::nullopt;
}

std::optional<bool> parse_status(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (!obj.is_object() || !obj.contains("status") || !obj["status"].is_string()) {
        return std::nullopt;
    }
    std::string value = obj["status"];
    for (char& c : value) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (value == "true") return true;
    if (value == "false") return false;
    return std::nullopt;
}

}  // namespace

std::string review(const Query& query, const std::vector<FilteredPassage>& refs,
                   const MemoryNote& note, const PromptSet& prompts, LlmGateway& gateway,
                   const std::string& model) {
    std::string prompt = prompts.get(TemplateName::reviewer)
                             .render({{"query", query.text},
                                      {"refs", join_refs(refs)},
                                      {"note", note.text}});
    return gateway.complete(agent_request(model, prompt, "reviewer")).text;
}

std::string challenge(const Query& query, const std::vector<FilteredPassage>& refs,
                      const MemoryNote& note, const std::string& review_info,
                      const PromptSet& prompts, LlmGateway& gateway,
                      const std::string& model) {
    std::string prompt = prompts.get(TemplateName::challenger)
                             .render({{"query", query.text},
                                      {"refs", join_refs(refs)},
                                      {"note", note.text},
                                      {"review_info", review_info}});
    return gateway.complete(agent_request(model, prompt, "challenger")).text;
}

std::string refine(const Query& query, const std::vector<FilteredPassage>& refs,
                   const MemoryNote& note, const std::string& review_info,
                   const std::string& suggestions, const PromptSet& prompts,
                   LlmGateway& gateway, const std::string& model) {
    std::string prompt = prompts.get(TemplateName::refiner)
                             .render({{"query", query.text},
                                      {"refs", join_refs(refs)},
                                      {"note", note.text},
                                      {"review_info", review_info},
                                      {"suggestions", suggestions}});
    return gateway.complete(agent_request(model, prompt, "refiner")).text;
}

MemoryUpdate update_memory(const Query& query, const std::vector<FilteredPassage>& refs,
                           const MemoryNote& note, const PromptSet& prompts,
                           LlmGateway& gateway, const std::string& model) {
    MemoryUpdate update;
    update.transcript.review_info = review(query, refs, note, prompts, gateway, model);
    update.transcript.call_count = 1;
    update.transcript.suggestions = challenge(query, refs, note, update.transcript.review_info,
                                              prompts, gateway, model);
    update.transcript.call_count = 2;
    update.transcript.refined_note =
        refine(query, refs, note, update.transcript.review_info,
               update.transcript.suggestions, prompts, gateway, model);
    update.transcript.call_count = 3;

    if (all_whitespace(update.transcript.refined_note)) {
        update.transcript.refined_note = note.text;
        update.transcript.noop_refinement = true;
    }
    update.candidate.text = update.transcript.refined_note;
    update.candidate.version = note.version + 1;
    update.candidate.origin = NoteOrigin::refined;
    return update;
}

CompareResult compare_notes(const Query& query, const MemoryNote& best_note,
                            const MemoryNote& new_note, const PromptSet& prompts,
                            LlmGateway& gateway, const std::string& model) {
    std::string prompt = prompts.get(TemplateName::note_compare)
                             .render({{"query", query.text},
                                      {"best_note", best_note.text},
                                      {"new_note", new_note.text}});
    LlmResponse reply = gateway.complete(agent_request(model, prompt, "note_compare"));

    CompareResult result;
    result.raw = reply.text;
    if (auto status = parse_status(reply.text)) {
        result.new_is_better = *status;
        return result;
    }
    if (auto span = first_json_span(reply.text)) {
        if (auto status = parse_status(*span)) {
            result.new_is_better = *status;
            return result;
        }
    }
    // conservative: keep the best note and let the run continue
    result.new_is_better = false;
    result.parse_failed = true;
    return result;
}

}  // namespace amber
