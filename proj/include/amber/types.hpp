#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace amber {

/// A user question. `text` is the natural-language query, `id` identifies it
/// within one run.
struct Query {
    std::string id;
    std::string text;
};

/// One retrieved passage. `rank` is 1-based within a single retrieval result;
/// `step` is the loop iteration at which it was retrieved.
struct Chunk {
    std::string doc_id;
    std::string title;
    std::string text;
    int rank = 1;
    double score = 0.0;
    int step = 0;
};

/// A chunk after sentence-level filtering: the surviving sentences, in their
/// original order. Every sentence is a verbatim substring of `source.text`.
struct FilteredPassage {
    Chunk source;
    std::vector<std::string> sentences;
};

enum class NoteOrigin { initialized, refined, kept };

/// The evolving condensed knowledge state. Version 0 is the initialized note;
/// each accepted refinement bumps the version by exactly one.
struct MemoryNote {
    std::string text;
    int version = 0;
    NoteOrigin origin = NoteOrigin::initialized;
};

struct Answer {
    std::string text;
};

}  // namespace amber
