#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace amber {

enum class DatasetKind { shortform, longform };

struct QaExample {
    std::string id;
    std::string question;
    std::vector<std::string> answers;                   // shortform gold strings
    std::vector<std::vector<std::string>> qa_pairs;     // longform short-answer sets
};

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PerExampleMetrics {
    std::string id;
    double acc = 0.0;
    double f1 = 0.0;
    double str_em = 0.0;
    double str_hit = 0.0;
    bool missing = false;  // no result produced for this example
};

struct MetricReport {
    DatasetKind kind = DatasetKind::shortform;
    std::vector<PerExampleMetrics> per_example;
    // aggregates are means x100
    double acc = 0.0;
    double f1 = 0.0;
    double str_em = 0.0;
    double str_hit = 0.0;
    int missing = 0;

    std::string to_json() const;
    std::string to_table() const;
};

/// SQuAD-style normalization: lowercase, strip punctuation and the articles
/// a/an/the, collapse whitespace.
std::vector<std::string> normalize_answer_tokens(const std::string& text);

/// 1 iff any normalized gold occurs as a contiguous token subsequence of the
/// normalized prediction.
int metric_acc(const std::string& prediction, const std::vector<std::string>& golds);

/// Max over golds of the multiset-token-overlap F1.
double metric_token_f1(const std::string& prediction, const std::vector<std::string>& golds);

/// Fraction of short-answer sets with at least one answer contained in the
/// prediction.
double metric_str_em(const std::string& prediction,
                     const std::vector<std::vector<std::string>>& qa_pairs);

/// 1 iff every short-answer set is covered.
int metric_str_hit(const std::string& prediction,
                   const std::vector<std::vector<std::string>>& qa_pairs);

std::vector<QaExample> load_dataset(const std::string& path, DatasetKind kind);

/// Joins predictions to gold examples by id. A missing prediction scores 0
/// and is counted. An id absent from the dataset throws.
MetricReport evaluate_run(const std::map<std::string, std::string>& answers_by_id,
                          const std::vector<QaExample>& dataset, DatasetKind kind);

}  // namespace amber
