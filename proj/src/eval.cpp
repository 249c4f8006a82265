#include "amber/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace amber {

using nlohmann::json;

std::vector<std::string> normalize_answer_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        if (cur != "a" && cur != "an" && cur != "the") tokens.push_back(cur);
        cur.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

namespace {

bool contains_subsequence(const std::vector<std::string>& haystack,
                          const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
    }
    return false;
}

}  // namespace

int metric_acc(const std::string& prediction, const std::vector<std::string>& golds) {
    auto pred = normalize_answer_tokens(prediction);
    for (const auto& gold : golds) {
        if (contains_subsequence(pred, normalize_answer_tokens(gold))) return 1;
    }
    return 0;
}

double metric_token_f1(const std::string& prediction, const std::vector<std::string>& golds) {
    auto pred = normalize_answer_tokens(prediction);
    double best = 0.0;
    for (const auto& gold_str : golds) {
        auto gold = normalize_answer_tokens(gold_str);
        if (pred.empty() && gold.empty()) {
            best = std::max(best, prediction.empty() && gold_str.empty() ? 1.0 : 0.0);
            continue;
        }
        if (pred.empty() || gold.empty()) continue;
        std::map<std::string, int> counts;
        for (const auto& t : gold) ++counts[t];
        int overlap = 0;
        for (const auto& t : pred) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++overlap;
            }
        }
        if (overlap == 0) continue;
        double p = static_cast<double>(overlap) / pred.size();
        double r = static_cast<double>(overlap) / gold.size();
        best = std::max(best, 2.0 * p * r / (p + r));
    }
    return best;
}

double metric_str_em(const std::string& prediction,
                     const std::vector<std::vector<std::string>>& qa_pairs) {
    if (qa_pairs.empty()) return 0.0;
    auto pred = normalize_answer_tokens(prediction);
    int covered = 0;
    for (const auto& answers : qa_pairs) {
        for (const auto& answer : answers) {
            if (contains_subsequence(pred, normalize_answer_tokens(answer))) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / qa_pairs.size();
}

int metric_str_hit(const std::string& prediction,
                   const std::vector<std::vector<std::string>>& qa_pairs) {
    return metric_str_em(prediction, qa_pairs) == 1.0 ? 1 : 0;
}

std::vector<QaExample> load_dataset(const std::string& path, DatasetKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset file: " + path);
    std::vector<QaExample> examples;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception&) {
            throw DatasetError("parse error at line " + std::to_string(line_no));
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("question")) {
            throw DatasetError("missing id/question at line " + std::to_string(line_no));
        }
        QaExample example;
        example.id = obj["id"];
        example.question = obj["question"];
        if (kind == DatasetKind::shortform) {
            if (!obj.contains("answers") || !obj["answers"].is_array() ||
                obj["answers"].empty()) {
                throw DatasetError("shortform example without answers at line " +
                                   std::to_string(line_no));
            }
            for (const auto& a : obj["answers"]) {
                std::string gold = a.get<std::string>();
                if (gold.empty()) {
                    throw DatasetError("empty gold string at line " + std::to_string(line_no));
                }
                example.answers.push_back(std::move(gold));
            }
        } else {
            if (!obj.contains("qa_pairs") || !obj["qa_pairs"].is_array() ||
                obj["qa_pairs"].empty()) {
                throw DatasetError("longform example without qa_pairs at line " +
                                   std::to_string(line_no));
            }
            for (const auto& pair : obj["qa_pairs"]) {
                std::vector<std::string> answers;
                for (const auto& a : pair.at("short_answers")) {
                    answers.push_back(a.get<std::string>());
                }
                if (answers.empty()) {
                    throw DatasetError("empty short_answers at line " + std::to_string(line_no));
                }
                example.qa_pairs.push_back(std::move(answers));
            }
        }
        examples.push_back(std::move(example));
    }
    return examples;
}

MetricReport evaluate_run(const std::map<std::string, std::string>& answers_by_id,
                          const std::vector<QaExample>& dataset, DatasetKind kind) {
    std::map<std::string, const QaExample*> by_id;
    for (const auto& example : dataset) by_id[example.id] = &example;
    for (const auto& [id, _] : answers_by_id) {
        if (!by_id.count(id)) throw DatasetError("result for unknown id: " + id);
    }

    MetricReport report;
    report.kind = kind;
    double acc = 0, f1 = 0, em = 0, hit = 0;
    for (const auto& example : dataset) {
        PerExampleMetrics m;
        m.id = example.id;
        auto it = answers_by_id.find(example.id);
        if (it == answers_by_id.end()) {
            m.missing = true;
            ++report.missing;
        } else if (kind == DatasetKind::shortform) {
            m.acc = metric_acc(it->second, example.answers);
            m.f1 = metric_token_f1(it->second, example.answers);
        } else {
            m.str_em = metric_str_em(it->second, example.qa_pairs);
            m.str_hit = metric_str_hit(it->second, example.qa_pairs);
        }
        acc += m.acc;
        f1 += m.f1;
        em += m.str_em;
        hit += m.str_hit;
        report.per_example.push_back(std::move(m));
    }
    const double n = dataset.empty() ? 1.0 : static_cast<double>(dataset.size());
    report.acc = 100.0 * acc / n;
    report.f1 = 100.0 * f1 / n;
    report.str_em = 100.0 * em / n;
    report.str_hit = 100.0 * hit / n;
    return report;
}

namespace {

std::string round2(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << v;
    return out.str();
}

}  // namespace

std::string MetricReport::to_json() const {
    json per = json::array();
    for (const auto& m : per_example) {
        json entry = {{"id", m.id}, {"missing", m.missing}};
        if (kind == DatasetKind::shortform) {
            entry["acc"] = m.acc;
            entry["f1"] = m.f1;
        } else {
            entry["str_em"] = m.str_em;
            entry["str_hit"] = m.str_hit;
        }
        per.push_back(std::move(entry));
    }
    json obj = {
        {"count", per_example.size()},
        {"missing", missing},
        {"per_example", per},
    };
    if (kind == DatasetKind::shortform) {
        obj["acc"] = round2(acc);
        obj["f1"] = round2(f1);
    } else {
        obj["str_em"] = round2(str_em);
        obj["str_hit"] = round2(str_hit);
    }
    return obj.dump(2);
}

std::string MetricReport::to_table() const {
    std::ostringstream out;
    if (kind == DatasetKind::shortform) {
        out << "metric    value\n";
        out << "acc       " << round2(acc) << "\n";
        out << "f1        " << round2(f1) << "\n";
    } else {
        out << "metric    value\n";
        out << "str-em    " << round2(str_em) << "\n";
        out << "str-hit   " << round2(str_hit) << "\n";
    }
    out << "examples  " << per_example.size() << "\n";
    out << "missing   " << missing << "\n";
    return out.str();
}

}  // namespace amber
