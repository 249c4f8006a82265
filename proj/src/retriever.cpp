#include "amber/retriever.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace amber {

using nlohmann::json;

std::vector<CorpusDoc> ingest_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open corpus file: " + path);
    std::vector<CorpusDoc> docs;
    std::set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception&) {
            throw CorpusError("parse error at line " + std::to_string(line_no));
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("title") ||
            !obj.contains("text") || !obj["id"].is_string() || !obj["title"].is_string() ||
            !obj["text"].is_string()) {
            throw CorpusError("parse error at line " + std::to_string(line_no));
        }
        CorpusDoc doc{obj["id"], obj["title"], obj["text"]};
        if (doc.text.empty()) throw CorpusError("parse error at line " + std::to_string(line_no));
        if (!seen.insert(doc.doc_id).second) {
            throw CorpusError("duplicate doc id: " + doc.doc_id);
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Passage> chunk_document(const CorpusDoc& doc, int window) {
    if (window < 1) throw CorpusError("window must be >= 1");
    std::vector<std::string> words;
    std::istringstream iss(doc.text);
    std::string w;
    while (iss >> w) words.push_back(w);

    std::vector<Passage> passages;
    for (size_t start = 0, ordinal = 0; start < words.size(); start += window, ++ordinal) {
        size_t end = std::min(words.size(), start + static_cast<size_t>(window));
        std::string text;
        for (size_t i = start; i < end; ++i) {
            if (i > start) text += ' ';
            text += words[i];
        }
        passages.push_back({doc.doc_id + "#" + std::to_string(ordinal), doc.title, text});
    }
    return passages;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> terms;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            terms.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) terms.push_back(std::move(cur));
    return terms;
}

Bm25Index Bm25Index::build(const std::vector<Passage>& passages, double k1, double b) {
    if (passages.empty()) throw CorpusError("empty corpus");
    Bm25Index index;
    index.k1_ = k1;
    index.b_ = b;
    index.passages_ = passages;
    uint64_t total = 0;
    for (uint32_t ord = 0; ord < passages.size(); ++ord) {
        auto terms = tokenize(passages[ord].text);
        total += terms.size();
        index.doc_lengths_.push_back(static_cast<uint32_t>(terms.size()));
        std::map<std::string, uint32_t> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, freq] : tf) {
            index.postings_[term].push_back({ord, freq});
        }
    }
    index.avgdl_ = static_cast<double>(total) / static_cast<double>(passages.size());
    return index;
}

std::vector<Chunk> Bm25Index::search(const std::string& query, int top_k) const {
    auto terms = tokenize(query);
    // dedupe: repeated query terms score once, matching the brute-force oracle
    std::set<std::string> unique(terms.begin(), terms.end());

    const double n = static_cast<double>(passages_.size());
    std::vector<double> scores(passages_.size(), 0.0);
    for (const auto& term : unique) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        for (const auto& p : it->second) {
            const double tf = p.tf;
            const double norm = k1_ * (1.0 - b_ + b_ * doc_lengths_[p.ordinal] / avgdl_);
            scores[p.ordinal] += idf * tf * (k1_ + 1.0) / (tf + norm);
        }
    }

    std::vector<uint32_t> hits;
    for (uint32_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > 0.0) hits.push_back(i);
    }
    std::sort(hits.begin(), hits.end(), [&](uint32_t a, uint32_t b_ord) {
        if (scores[a] != scores[b_ord]) return scores[a] > scores[b_ord];
        return passages_[a].passage_id < passages_[b_ord].passage_id;
    });
    if (top_k >= 0 && hits.size() > static_cast<size_t>(top_k)) hits.resize(top_k);

    std::vector<Chunk> chunks;
    for (size_t i = 0; i < hits.size(); ++i) {
        const auto& p = passages_[hits[i]];
        chunks.push_back({p.passage_id, p.title, p.text, static_cast<int>(i + 1),
                          scores[hits[i]], 0});
    }
    return chunks;
}

namespace {

void write_u64(std::ostream& out, uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
    uint64_t len = read_u64(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    return s;
}

void write_f64(std::ostream& out, double d) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
}

double read_f64(std::istream& in) {
    uint64_t bits = read_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

// Layout: magic "ABIX", version byte 0x01, k1, b, avgdl (f64 little-endian
// bit patterns), passage count, then per passage (id, title, text, length),
// then postings count and per term (term, list length, (ordinal, tf) pairs).
void Bm25Index::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusError("cannot write index file: " + path);
    out.write("ABIX", 4);
    out.put(0x01);
    write_f64(out, k1_);
    write_f64(out, b_);
    write_f64(out, avgdl_);
    write_u64(out, passages_.size());
    for (size_t i = 0; i < passages_.size(); ++i) {
        write_str(out, passages_[i].passage_id);
        write_str(out, passages_[i].title);
        write_str(out, passages_[i].text);
        write_u64(out, doc_lengths_[i]);
    }
    write_u64(out, postings_.size());
    for (const auto& [term, list] : postings_) {
        write_str(out, term);
        write_u64(out, list.size());
        for (const auto& p : list) {
            write_u64(out, p.ordinal);
            write_u64(out, p.tf);
        }
    }
}

Bm25Index Bm25Index::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open index file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (std::string(magic, 4) != "ABIX") throw CorpusError("bad index magic");
    if (in.get() != 0x01) throw CorpusError("unsupported index version");
    Bm25Index index;
    index.k1_ = read_f64(in);
    index.b_ = read_f64(in);
    index.avgdl_ = read_f64(in);
    uint64_t n = read_u64(in);
    for (uint64_t i = 0; i < n; ++i) {
        Passage p;
        p.passage_id = read_str(in);
        p.title = read_str(in);
        p.text = read_str(in);
        index.passages_.push_back(std::move(p));
        index.doc_lengths_.push_back(static_cast<uint32_t>(read_u64(in)));
    }
    uint64_t terms = read_u64(in);
    for (uint64_t i = 0; i < terms; ++i) {
        std::string term = read_str(in);
        uint64_t len = read_u64(in);
        auto& list = index.postings_[term];
        for (uint64_t j = 0; j < len; ++j) {
            uint32_t ord = static_cast<uint32_t>(read_u64(in));
            uint32_t tf = static_cast<uint32_t>(read_u64(in));
            list.push_back({ord, tf});
        }
    }
    if (!in) throw CorpusError("truncated index file");
    return index;
}

}  // namespace amber
