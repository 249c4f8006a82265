#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "amber/types.hpp"

namespace amber {

enum class TemplateName {
    memory_init,
    query_rewrite,
    chunk_filter,
    sentence_filter,
    reviewer,
    challenger,
    refiner,
    note_compare,
    sufficiency_judge,
    final_answer,
};

std::string to_string(TemplateName name);
TemplateName template_name_from_string(const std::string& s);

struct MissingBinding : std::runtime_error {
    explicit MissingBinding(const std::string& name)
        : std::runtime_error("missing binding for placeholder {" + name + "}") {}
};

struct UnknownPlaceholder : std::runtime_error {
    explicit UnknownPlaceholder(const std::string& name)
        : std::runtime_error("binding '" + name + "' does not occur in template") {}
};

struct TemplateSyntaxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A prompt template parsed from its stored form. Placeholders use single
/// braces, {name}; literal braces in the body are stored doubled ({{, }})
/// and unescaped at parse time.
class PromptTemplate {
  public:
    PromptTemplate(TemplateName name, const std::string& body);

    TemplateName name() const { return name_; }

    /// Substitutes every placeholder. Strict: a placeholder without a binding
    /// throws MissingBinding; a binding without a placeholder throws
    /// UnknownPlaceholder.
    std::string render(const std::map<std::string, std::string>& bindings) const;

    /// The unescaped body with placeholders left intact as {name}. Used for
    /// golden-file comparison against the transcribed prompts.
    std::string raw() const;

    std::vector<std::string> placeholders() const;

  private:
    struct Segment {
        bool is_placeholder;
        std::string value;  // literal text or placeholder name
    };
    TemplateName name_;
    std::vector<Segment> segments_;
};

/// Loads all templates from a directory; file name equals the enum name.
class PromptSet {
  public:
    static PromptSet load(const std::string& dir);

    const PromptTemplate& get(TemplateName name) const;

  private:
    std::vector<PromptTemplate> templates_;
};

std::string render_prompt(const PromptTemplate& tpl,
                          const std::map<std::string, std::string>& bindings);

/// Serializes filtered passages into the {refs} placeholder: numbered blocks
/// "[i] <title>\n<sentences joined by single spaces>" separated by blank
/// lines; "(no references)" when empty.
std::string join_refs(const std::vector<FilteredPassage>& passages);

/// Splits after '.', '!' or '?' followed by whitespace and an uppercase
/// letter, or at end of text. Abbreviations are not special-cased.
std::vector<std::string> split_sentences(const std::string& text);

}  // namespace amber
