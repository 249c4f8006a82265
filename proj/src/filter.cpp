#include "amber/filter.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

namespace amber {

using nlohmann::json;

namespace {

LlmRequest make_request(const std::string& model, const std::string& prompt,
                        const std::string& tag) {
    LlmRequest request;
    request.model = model;
    request.messages = {{"user", prompt}};
    request.tag = tag;
    return request;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Extracts the first balanced {...} span, the single repair pass allowed for
// replies that wrap the mandated JSON in prose.
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

std::optional<FilterVerdict::Value> parse_verdict_json(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (!obj.is_object() || !obj.contains("NLI result") || !obj["NLI result"].is_string()) {
        return std::nullopt;
    }
    std::string value = lower(obj["NLI result"]);
    if (value == "useful") return FilterVerdict::Value::useful;
    if (value == "useless") return FilterVerdict::Value::useless;
    return std::nullopt;
}

// Normalizes for substring validation: collapse all whitespace runs to one
// space so line wrapping in model replies does not break the verbatim check.
std::string collapse_ws(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out += c;
        }
    }
    return out;
}

std::vector<std::string> normalize_tokens(const std::string& s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace

FilterVerdict chunk_filter(const Query& query, const Chunk& chunk, const PromptSet& prompts,
                           LlmGateway& gateway, const std::string& model) {
    std::string prompt = prompts.get(TemplateName::chunk_filter)
                             .render({{"External_Knowledge", chunk.text},
                                      {"Question", query.text}});
    LlmResponse reply = gateway.complete(make_request(model, prompt, "chunk_filter"));

    if (auto value = parse_verdict_json(reply.text)) return {*value, reply.text};
    if (auto span = first_json_span(reply.text)) {
        if (auto value = parse_verdict_json(*span)) return {*value, reply.text};
    }
    throw FilterParseError(reply.text);
}

FilteredPassage sentence_filter(const Query& query, const Chunk& chunk,
                                const PromptSet& prompts, LlmGateway& gateway,
                                const std::string& model,
                                std::vector<std::string>* warnings) {
    std::string prompt = prompts.get(TemplateName::sentence_filter)
                             .render({{"query", query.text}, {"context", chunk.text}});
    LlmResponse reply = gateway.complete(make_request(model, prompt, "sentence_filter"));

    std::string chunk_norm = collapse_ws(chunk.text);
    // (normalized candidate, position of first occurrence in the chunk)
    std::vector<std::pair<size_t, std::string>> kept;
    for (const auto& candidate : split_sentences(reply.text)) {
        std::string norm = collapse_ws(candidate);
        if (norm.empty()) continue;
        size_t pos = chunk_norm.find(norm);
        if (pos == std::string::npos) {
            if (warnings) warnings->push_back("dropped non-substring sentence: " + candidate);
            continue;
        }
        bool duplicate = false;
        for (const auto& [p, s] : kept) {
            if (s == norm && p == pos) duplicate = true;
        }
        if (!duplicate) kept.emplace_back(pos, std::move(norm));
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    FilteredPassage passage;
    passage.source = chunk;
    for (auto& [_, sentence] : kept) passage.sentences.push_back(std::move(sentence));
    return passage;
}

FilterResult filter_chunks(const Query& query, const std::vector<Chunk>& chunks,
                           const PromptSet& prompts, LlmGateway& gateway,
                           const std::string& model) {
    FilterResult result;
    for (const auto& chunk : chunks) {
        ChunkFilterRecord record;
        record.doc_id = chunk.doc_id;

        bool keep = true;
        bool whole = false;
        try {
            FilterVerdict verdict = chunk_filter(query, chunk, prompts, gateway, model);
            if (verdict.value == FilterVerdict::Value::useless) {
                record.verdict = "useless";
                keep = false;
            } else {
                record.verdict = "useful";
            }
        } catch (const FilterParseError& e) {
            // fail-open: unparseable verdict keeps the chunk whole
            record.verdict = "parse_failed";
            record.warnings.push_back(e.what());
            whole = true;
        }

        if (keep) {
            FilteredPassage passage;
            if (whole) {
                passage.source = chunk;
            } else {
                passage = sentence_filter(query, chunk, prompts, gateway, model,
                                          &record.warnings);
            }
            if (passage.sentences.empty()) {
                // judged useful at chunk level; keep all of it rather than lose it
                passage.sentences = split_sentences(chunk.text);
                if (passage.sentences.empty()) passage.sentences.push_back(chunk.text);
                record.retained_whole = true;
            }
            result.passages.push_back(std::move(passage));
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

int strinc_label(const std::string& sentence, const std::string& gold_answer) {
    auto sent = normalize_tokens(sentence);
    auto gold = normalize_tokens(gold_answer);
    if (gold.empty() || sent.size() < gold.size()) return 0;
    for (size_t i = 0; i + gold.size() <= sent.size(); ++i) {
        if (std::equal(gold.begin(), gold.end(), sent.begin() + i)) return 1;
    }
    return 0;
}

namespace {

std::string cxmi_prompt(const Query& query, const std::string& context) {
    std::string prompt;
    if (!context.empty()) prompt += "Context: " + context + "\n";
    prompt += "Question: " + query.text + "\nAnswer: ";
    return prompt;
}

}  // namespace

double cxmi_score(const Query& query, const std::string& sentence,
                  const std::string& gold_answer, const std::string& base_context,
                  LlmGateway& gateway, const std::string& model) {
    std::string with = base_context.empty() ? sentence : base_context + " " + sentence;
    double lp_with = gateway.score_continuation(cxmi_prompt(query, with), gold_answer, model);
    double lp_without =
        gateway.score_continuation(cxmi_prompt(query, base_context), gold_answer, model);
    return lp_with - lp_without;
}

std::vector<TrainingExample> build_training_set(const std::vector<FiltergenItem>& items,
                                                FilterMeasure measure, double threshold,
                                                const PromptSet& prompts, LlmGateway& gateway,
                                                const std::string& model,
                                                FiltergenSummary* summary) {
    std::vector<TrainingExample> out;
    FiltergenSummary local;
    for (const auto& item : items) {
        for (const auto& chunk : item.chunks) {
            try {
                TrainingExample nli;
                nli.kind = "chunk_nli";
                nli.query = item.query.text;
                nli.input_context = chunk.text;
                FilterVerdict verdict =
                    chunk_filter(item.query, chunk, prompts, gateway, model);
                nli.label =
                    verdict.value == FilterVerdict::Value::useful ? "useful" : "useless";
                nli.explanation = verdict.raw;
                (nli.label == "useful" ? local.useful : local.useless)++;
                out.push_back(std::move(nli));
                ++local.emitted;
            } catch (const std::exception&) {
                ++local.skipped;
            }

            try {
                TrainingExample sf;
                sf.kind = "sentence_filter";
                sf.query = item.query.text;
                sf.input_context = chunk.text;
                for (const auto& sentence : split_sentences(chunk.text)) {
                    SentenceMeta meta;
                    meta.text = sentence;
                    meta.strinc = strinc_label(sentence, item.gold_answer);
                    bool pass;
                    if (measure == FilterMeasure::strinc) {
                        pass = meta.strinc == 1;
                    } else {
                        meta.cxmi = cxmi_score(item.query, sentence, item.gold_answer, "",
                                               gateway, model);
                        pass = *meta.cxmi >= threshold;
                    }
                    if (pass) {
                        if (!sf.target.empty()) sf.target += ' ';
                        sf.target += sentence;
                    }
                    sf.sentences.push_back(std::move(meta));
                }
                sf.low_signal = sf.target.empty();
                out.push_back(std::move(sf));
                ++local.emitted;
            } catch (const std::exception&) {
                ++local.skipped;
            }
        }
    }
    if (summary) *summary = local;
    return out;
}

std::string training_example_to_json(const TrainingExample& example) {
    json meta = json::object();
    if (example.kind == "chunk_nli") {
        meta["explanation"] = example.explanation;
    } else {
        json sentences = json::array();
        for (const auto& s : example.sentences) {
            json entry = {{"text", s.text}, {"strinc", s.strinc}};
            if (s.cxmi) entry["cxmi"] = *s.cxmi;
            sentences.push_back(entry);
        }
        meta["sentences"] = sentences;
        meta["low_signal"] = example.low_signal;
    }
    json obj = {
        {"kind", example.kind},
        {"query", example.query},
        {"input", example.input_context},
        {"meta", meta},
    };
    if (example.kind == "chunk_nli") {
        obj["label"] = example.label;
    } else {
        obj["target"] = example.target;
    }
    return obj.dump();
}

}  // namespace amber
