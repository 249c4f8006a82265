#include "amber/prompt.hpp"

#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace amber {

namespace {

constexpr std::array<const char*, 10> kTemplateNames = {
    "memory_init", "query_rewrite", "chunk_filter",      "sentence_filter",
    "reviewer",    "challenger",    "refiner",           "note_compare",
    "sufficiency_judge", "final_answer",
};

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

std::string to_string(TemplateName name) {
    return kTemplateNames[static_cast<size_t>(name)];
}

TemplateName template_name_from_string(const std::string& s) {
    for (size_t i = 0; i < kTemplateNames.size(); ++i) {
        if (s == kTemplateNames[i]) return static_cast<TemplateName>(i);
    }
    throw TemplateSyntaxError("unknown template name: " + s);
}

PromptTemplate::PromptTemplate(TemplateName name, const std::string& body) : name_(name) {
    std::string literal;
    size_t i = 0;
    while (i < body.size()) {
        char c = body[i];
        if (c == '{') {
            if (i + 1 < body.size() && body[i + 1] == '{') {
                literal += '{';
                i += 2;
                continue;
            }
            size_t j = i + 1;
            while (j < body.size() && is_name_char(body[j])) ++j;
            if (j == i + 1 || j >= body.size() || body[j] != '}') {
                throw TemplateSyntaxError("malformed placeholder in template " +
                                          to_string(name));
            }
            if (!literal.empty()) {
                segments_.push_back({false, literal});
                literal.clear();
            }
            segments_.push_back({true, body.substr(i + 1, j - i - 1)});
            i = j + 1;
        } else if (c == '}') {
            if (i + 1 < body.size() && body[i + 1] == '}') {
                literal += '}';
                i += 2;
                continue;
            }
            throw TemplateSyntaxError("unescaped '}' in template " + to_string(name));
        } else {
            literal += c;
            ++i;
        }
    }
    if (!literal.empty()) segments_.push_back({false, literal});
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
    std::set<std::string> used;
    std::string out;
    for (const auto& seg : segments_) {
        if (seg.is_placeholder) {
            auto it = bindings.find(seg.value);
            if (it == bindings.end()) throw MissingBinding(seg.value);
            out += it->second;
            used.insert(seg.value);
        } else {
            out += seg.value;
        }
    }
    for (const auto& [key, _] : bindings) {
        if (!used.count(key)) throw UnknownPlaceholder(key);
    }
    return out;
}

std::string PromptTemplate::raw() const {
    std::string out;
    for (const auto& seg : segments_) {
        if (seg.is_placeholder) {
            out += '{';
            out += seg.value;
            out += '}';
        } else {
            out += seg.value;
        }
    }
    return out;
}

std::vector<std::string> PromptTemplate::placeholders() const {
    std::vector<std::string> names;
    for (const auto& seg : segments_) {
        if (seg.is_placeholder) names.push_back(seg.value);
    }
    return names;
}

PromptSet PromptSet::load(const std::string& dir) {
    PromptSet set;
    for (const char* name : kTemplateNames) {
        std::filesystem::path path = std::filesystem::path(dir) / name;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw TemplateSyntaxError("cannot open template file: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        set.templates_.emplace_back(template_name_from_string(name), buf.str());
    }
    return set;
}

const PromptTemplate& PromptSet::get(TemplateName name) const {
    return templates_[static_cast<size_t>(name)];
}

std::string render_prompt(const PromptTemplate& tpl,
                          const std::map<std::string, std::string>& bindings) {
    return tpl.render(bindings);
}

std::string join_refs(const std::vector<FilteredPassage>& passages) {
    if (passages.empty()) return "(no references)";
    std::string out;
    for (size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += "[" + std::to_string(i + 1) + "] " + passages[i].source.title + "\n";
        const auto& sents = passages[i].sentences;
        for (size_t s = 0; s < sents.size(); ++s) {
            if (s > 0) out += ' ';
            out += sents[s];
        }
    }
    return out;
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    size_t start = 0;
    auto flush = [&](size_t end) {
        // trim surrounding whitespace of the slice [start, end)
        size_t a = start, b = end;
        while (a < b && std::isspace(static_cast<unsigned char>(text[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
        if (b > a) sentences.push_back(text.substr(a, b - a));
        start = end;
    };
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        size_t j = i + 1;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i + 1 && j < text.size()) continue;  // terminator not followed by whitespace
        if (j >= text.size() || std::isupper(static_cast<unsigned char>(text[j]))) {
            flush(i + 1);
        }
    }
    flush(text.size());
    return sentences;
}

}  // namespace amber
