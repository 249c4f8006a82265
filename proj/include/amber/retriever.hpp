#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "amber/types.hpp"

namespace amber {

struct CorpusDoc {
    std::string doc_id;
    std::string title;
    std::string text;
};

/// A fixed-size slice of a corpus document. passage_id is "<doc_id>#<ordinal>".
struct Passage {
    std::string passage_id;
    std::string title;
    std::string text;
};

struct RetrievalConfig {
    int top_k = 5;
};

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads a JSON-lines corpus file ({"id","title","text"} per line).
/// Throws CorpusError with the offending line number on malformed input or a
/// duplicate id.
std::vector<CorpusDoc> ingest_corpus(const std::string& path);

/// Greedy non-overlapping windows of `window` whitespace-delimited words; the
/// final passage may be shorter. Ordinals start at 0.
std::vector<Passage> chunk_document(const CorpusDoc& doc, int window = 100);

/// Lowercase, split on non-alphanumeric runs. No stemming, no stopwords.
std::vector<std::string> tokenize(const std::string& text);

/// Okapi BM25 over passages with Lucene-style non-negative IDF:
/// idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1).
/// Immutable after build; concurrent searches need no synchronization.
class Bm25Index {
  public:
    struct Posting {
        uint32_t ordinal;
        uint32_t tf;
    };

    static Bm25Index build(const std::vector<Passage>& passages, double k1 = 1.2,
                           double b = 0.75);

    /// Ranked by (score desc, passage_id asc); passages with score 0 are
    /// never returned. Chunks carry 1-based ranks.
    std::vector<Chunk> search(const std::string& query, int top_k) const;

    void save(const std::string& path) const;
    static Bm25Index load(const std::string& path);

    size_t passage_count() const { return passages_.size(); }
    double avgdl() const { return avgdl_; }
    double k1() const { return k1_; }
    double b() const { return b_; }

  private:
    std::vector<Passage> passages_;
    std::vector<uint32_t> doc_lengths_;
    std::map<std::string, std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
    double k1_ = 1.2;
    double b_ = 0.75;
};

}  // namespace amber
