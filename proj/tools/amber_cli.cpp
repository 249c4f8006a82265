// Command-line front end: index, run, eval, filtergen, trace.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "amber/eval.hpp"
#include "amber/filter.hpp"
#include "amber/llm.hpp"
#include "amber/loop.hpp"
#include "amber/prompt.hpp"
#include "amber/retriever.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitNotFound = 3;

volatile std::sig_atomic_t g_interrupted = 0;

void handle_interrupt(int) { g_interrupted = 1; }

// Flat key=value config file; '#' starts a comment. Flags override file values.
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::map<std::string, std::string> values;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
                s.erase(s.begin());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
                s.pop_back();
            return s;
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) values[key] = value;
    }
    return values;
}

struct BackendOptions {
    std::string mock_script;
    std::string endpoint;
    std::string model = "default";
    std::string cache_dir;
};

void add_backend_flags(CLI::App* cmd, BackendOptions& options) {
    cmd->add_option("--mock", options.mock_script, "mock script (JSON-lines)");
    cmd->add_option("--endpoint", options.endpoint,
                    "chat-completions endpoint URL (key from AMBER_LLM_API_KEY)");
    cmd->add_option("--model", options.model, "model name sent to the backend");
    cmd->add_option("--cache-dir", options.cache_dir,
                    "response cache directory (default from AMBER_CACHE_DIR)");
}

std::shared_ptr<amber::LlmGateway> make_gateway(const BackendOptions& options) {
    std::shared_ptr<amber::LlmGateway> gateway;
    if (!options.mock_script.empty() && !options.endpoint.empty()) {
        throw std::runtime_error("configure exactly one backend (--mock or --endpoint)");
    }
    if (!options.mock_script.empty()) {
        gateway = std::make_shared<amber::MockGateway>(
            amber::MockGateway::from_file(options.mock_script));
    } else if (!options.endpoint.empty()) {
        amber::HttpConfig config;
        config.endpoint = options.endpoint;
        if (const char* key = std::getenv("AMBER_LLM_API_KEY")) config.api_key = key;
        gateway = std::make_shared<amber::HttpGateway>(config);
    } else {
        throw std::runtime_error("no backend configured (--mock or --endpoint)");
    }
    std::string cache_dir = options.cache_dir;
    if (cache_dir.empty()) {
        if (const char* env = std::getenv("AMBER_CACHE_DIR")) cache_dir = env;
    }
    if (!cache_dir.empty()) {
        gateway = std::make_shared<amber::CachedGateway>(gateway, cache_dir);
    }
    return gateway;
}

int cmd_index(const std::string& corpus, const std::string& out, int window, double k1,
              double b) {
    auto docs = amber::ingest_corpus(corpus);
    std::vector<amber::Passage> passages;
    for (const auto& doc : docs) {
        auto chunks = amber::chunk_document(doc, window);
        passages.insert(passages.end(), chunks.begin(), chunks.end());
    }
    auto index = amber::Bm25Index::build(passages, k1, b);
    index.save(out);
    std::cout << "indexed " << index.passage_count() << " passages, avgdl "
              << index.avgdl() << "\n";
    return 0;
}

struct RunOptions {
    std::string index_path;
    std::string dataset_path;
    std::string kind = "shortform";
    std::string prompts_dir = "prompts";
    std::string out = "trace.jsonl";
    std::string trace_dir;
    BackendOptions backend;
    int max_iter = 3;
    int top_k = 5;
    bool no_stop_on_no_improvement = false;
    int concurrency = 4;
};

int cmd_run(const RunOptions& options) {
    auto index = amber::Bm25Index::load(options.index_path);
    auto prompts = amber::PromptSet::load(options.prompts_dir);
    auto dataset = amber::load_dataset(options.dataset_path,
                                       options.kind == "longform"
                                           ? amber::DatasetKind::longform
                                           : amber::DatasetKind::shortform);
    auto gateway = make_gateway(options.backend);

    amber::LoopConfig config;
    config.max_iter = options.max_iter;
    config.top_k = options.top_k;
    config.stop_on_no_improvement = !options.no_stop_on_no_improvement;
    config.model = options.backend.model;

    std::ofstream out(options.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trace file: " + options.out);
    json header = {
        {"trace_version", 1},
        {"config",
         {{"index", options.index_path},
          {"dataset", options.dataset_path},
          {"kind", options.kind},
          {"prompts", options.prompts_dir},
          {"model", options.backend.model},
          {"max_iter", config.max_iter},
          {"top_k", config.top_k},
          {"stop_on_no_improvement", config.stop_on_no_improvement},
          {"concurrency", options.concurrency}}},
    };
    out << header.dump() << "\n";

    std::signal(SIGINT, handle_interrupt);

    std::vector<std::string> lines(dataset.size());
    std::vector<std::optional<amber::StopReason>> reasons(dataset.size());
    std::atomic<size_t> next{0};
    std::atomic<long> total_calls{0};
    std::mutex log_mu;

    auto worker = [&] {
        while (!g_interrupted) {
            size_t i = next.fetch_add(1);
            if (i >= dataset.size()) return;
            amber::Query query{dataset[i].id, dataset[i].question};
            try {
                amber::RunResult result =
                    amber::run_question(query, index, config, prompts, *gateway);
                lines[i] = amber::run_result_to_json(result);
                reasons[i] = result.stopped_because;
                total_calls += result.llm_calls;
            } catch (const std::exception& e) {
                json error = {{"trace_version", 1}, {"id", query.id}, {"error", e.what()}};
                lines[i] = error.dump();
                std::lock_guard lock(log_mu);
                std::cerr << "warning: question " << query.id << " failed: " << e.what()
                          << "\n";
            }
        }
    };

    int threads = std::max(1, options.concurrency);
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::map<std::string, int> histogram;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;  // interrupted before this question ran
        out << lines[i] << "\n";
        if (reasons[i]) ++histogram[amber::to_string(*reasons[i])];
        if (!options.trace_dir.empty() && reasons[i]) {
            std::filesystem::create_directories(options.trace_dir);
            std::ofstream pretty(std::filesystem::path(options.trace_dir) /
                                 (dataset[i].id + ".json"));
            pretty << json::parse(lines[i]).dump(2) << "\n";
        }
    }
    out.flush();

    std::cout << "llm calls: " << total_calls.load() << "\n";
    std::cout << "backend calls: " << gateway->backend_calls() << "\n";
    std::cout << "stop reasons:";
    for (const auto& [reason, count] : histogram) {
        std::cout << " " << reason << "=" << count;
    }
    std::cout << "\n";
    if (g_interrupted) std::cout << "interrupted; partial trace flushed\n";
    return 0;
}

int cmd_eval(const std::string& trace_path, const std::string& dataset_path,
             const std::string& kind_str, const std::string& json_out) {
    amber::DatasetKind kind = kind_str == "longform" ? amber::DatasetKind::longform
                                                     : amber::DatasetKind::shortform;
    auto dataset = amber::load_dataset(dataset_path, kind);

    std::ifstream in(trace_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace file: " + trace_path);
    std::map<std::string, std::string> answers;
    std::string line;
    int results = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json obj = json::parse(line);
        if (!obj.contains("id")) continue;  // header line
        if (obj.contains("error")) continue;
        answers[obj["id"]] = obj["answer"];
        ++results;
    }
    if (results == 0) std::cerr << "warning: trace contains no results\n";

    amber::MetricReport report = amber::evaluate_run(answers, dataset, kind);
    std::cout << report.to_table();
    if (!json_out.empty()) {
        std::ofstream out(json_out, std::ios::binary);
        out << report.to_json() << "\n";
    }
    return 0;
}

struct FiltergenOptions {
    std::string dataset_path;
    std::string kind = "shortform";
    std::string index_path;
    std::string prompts_dir = "prompts";
    std::string measure = "strinc";
    double threshold = 0.0;
    std::string out = "training.jsonl";
    int top_k = 5;
    bool sweep = false;
    BackendOptions backend;
};

int cmd_filtergen(const FiltergenOptions& options) {
    auto index = amber::Bm25Index::load(options.index_path);
    auto prompts = amber::PromptSet::load(options.prompts_dir);
    auto dataset = amber::load_dataset(options.dataset_path,
                                       options.kind == "longform"
                                           ? amber::DatasetKind::longform
                                           : amber::DatasetKind::shortform);
    auto gateway = make_gateway(options.backend);
    amber::FilterMeasure measure = options.measure == "cxmi" ? amber::FilterMeasure::cxmi
                                                             : amber::FilterMeasure::strinc;

    std::vector<amber::FiltergenItem> items;
    for (const auto& example : dataset) {
        amber::FiltergenItem item;
        item.query = {example.id, example.question};
        item.chunks = index.search(example.question, options.top_k);
        item.gold_answer = example.answers.empty()
                               ? (example.qa_pairs.empty() || example.qa_pairs[0].empty()
                                      ? ""
                                      : example.qa_pairs[0][0])
                               : example.answers[0];
        items.push_back(std::move(item));
    }

    amber::FiltergenSummary summary;
    std::vector<amber::TrainingExample> examples;
    try {
        examples = amber::build_training_set(items, measure, options.threshold, prompts,
                                             *gateway, options.backend.model, &summary);
    } catch (const amber::UnsupportedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (measure == amber::FilterMeasure::cxmi && summary.emitted == 0 &&
        summary.skipped > 0) {
        // every example failed; with cxmi the usual cause is a backend that
        // cannot score tokens
        std::cerr << "error: no examples generated (backend cannot score?)\n";
        return kExitConfig;
    }

    std::ofstream out(options.out, std::ios::binary);
    for (const auto& example : examples) {
        out << amber::training_example_to_json(example) << "\n";
    }
    std::cout << "emitted " << summary.emitted << " examples (skipped " << summary.skipped
              << "); labels: useful=" << summary.useful << " useless=" << summary.useless
              << "\n";

    if (options.sweep && measure == amber::FilterMeasure::cxmi) {
        std::vector<double> scores;
        for (const auto& example : examples) {
            for (const auto& s : example.sentences) {
                if (s.cxmi) scores.push_back(*s.cxmi);
            }
        }
        for (double threshold : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
            int pass = 0;
            for (double s : scores) {
                if (s >= threshold) ++pass;
            }
            double rate = scores.empty() ? 0.0 : 100.0 * pass / scores.size();
            std::cout << "threshold " << threshold << ": pass-rate " << rate << "%\n";
        }
    }
    return 0;
}

int cmd_trace(const std::string& trace_path, const std::string& id) {
    std::ifstream in(trace_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace file: " + trace_path);
    std::string line;
    bool found = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json obj = json::parse(line);
        if (!obj.contains("id")) continue;
        if (!id.empty() && obj["id"] != id) continue;
        found = true;
        if (obj.contains("error")) {
            std::cout << obj["id"].get<std::string>() << ": FAILED: "
                      << obj["error"].get<std::string>() << "\n";
            continue;
        }
        std::cout << obj["id"].get<std::string>() << ": " << obj["question"].get<std::string>()
                  << "\n";
        if (id.empty()) {
            std::cout << "  answer: " << obj["answer"].get<std::string>()
                      << "  (stop: " << obj["stopped_because"].get<std::string>()
                      << ", llm calls: " << obj["llm_calls"].get<long>() << ")\n";
            continue;
        }
        for (const auto& it : obj["iterations"]) {
            int useful = 0, useless = 0, failed = 0;
            for (const auto& v : it["verdicts"]) {
                std::string verdict = v["verdict"];
                if (verdict == "useful") ++useful;
                else if (verdict == "useless") ++useless;
                else ++failed;
            }
            std::cout << "  step " << it["step"].get<int>() << ": query \""
                      << it["issued_query"].get<std::string>() << "\" retrieved "
                      << it["retrieved"].size() << " (useful " << useful << ", useless "
                      << useless << ", parse-failed " << failed << ") note v"
                      << it["note_before"].get<int>() << "->v" << it["note_after"].get<int>();
            if (it.contains("sufficiency")) {
                std::cout << " sufficient=" << (it["sufficiency"].get<bool>() ? "yes" : "no");
            }
            std::cout << "\n";
        }
        std::cout << "  final note v" << obj["final_note"]["version"].get<int>()
                  << "; answer: " << obj["answer"].get<std::string>()
                  << "\n  stop reason: " << obj["stopped_because"].get<std::string>()
                  << ", llm calls: " << obj["llm_calls"].get<long>() << "\n";
    }
    if (!found && !id.empty()) {
        std::cerr << "error: id not found in trace: " << id << "\n";
        return kExitNotFound;
    }
    return 0;
}

// Applies config-file values as defaults for any option the user did not pass.
void apply_config_defaults(CLI::App* cmd, const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        CLI::Option* option = cmd->get_option_no_throw("--" + key);
        if (option && option->count() == 0) {
            option->add_result(value);
            option->run_callback();
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive memory-based retrieval-augmented QA engine"};
    app.require_subcommand(1);

    // index
    auto* index_cmd = app.add_subcommand("index", "build a BM25 index from a JSONL corpus");
    std::string corpus, index_out;
    int window = 100;
    double k1 = 1.2, b = 0.75;
    index_cmd->add_option("--corpus", corpus, "corpus JSONL file")->required();
    index_cmd->add_option("--out", index_out, "output index file")->required();
    index_cmd->add_option("--window", window, "passage window in words");
    index_cmd->add_option("--k1", k1, "BM25 k1");
    index_cmd->add_option("--b", b, "BM25 b");

    // run
    auto* run_cmd = app.add_subcommand("run", "run the adaptive loop over a dataset");
    RunOptions run_options;
    std::string run_config_file;
    run_cmd->add_option("--config", run_config_file, "key=value config file");
    run_cmd->add_option("--index", run_options.index_path, "index file");
    run_cmd->add_option("--dataset", run_options.dataset_path, "dataset JSONL");
    run_cmd->add_option("--kind", run_options.kind, "shortform|longform");
    run_cmd->add_option("--prompts", run_options.prompts_dir, "prompt templates directory");
    run_cmd->add_option("--out", run_options.out, "trace JSONL output");
    run_cmd->add_option("--trace-dir", run_options.trace_dir,
                        "directory for per-question pretty traces");
    run_cmd->add_option("--max-iter", run_options.max_iter, "iteration cap");
    run_cmd->add_option("--top-k", run_options.top_k, "passages per retrieval");
    run_cmd->add_flag("--no-stop-on-no-improvement", run_options.no_stop_on_no_improvement,
                      "keep iterating when the note comparison rejects the update");
    run_cmd->add_option("--concurrency", run_options.concurrency, "parallel questions");
    add_backend_flags(run_cmd, run_options.backend);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a trace against a dataset");
    std::string eval_trace, eval_dataset, eval_kind = "shortform", eval_json;
    eval_cmd->add_option("--trace", eval_trace, "trace JSONL")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "dataset JSONL")->required();
    eval_cmd->add_option("--kind", eval_kind, "shortform|longform");
    eval_cmd->add_option("--json", eval_json, "also write the report as JSON");

    // filtergen
    auto* gen_cmd = app.add_subcommand("filtergen", "generate filter training data");
    FiltergenOptions gen_options;
    gen_cmd->add_option("--dataset", gen_options.dataset_path, "dataset JSONL")->required();
    gen_cmd->add_option("--kind", gen_options.kind, "shortform|longform");
    gen_cmd->add_option("--index", gen_options.index_path, "index file")->required();
    gen_cmd->add_option("--prompts", gen_options.prompts_dir, "prompt templates directory");
    gen_cmd->add_option("--measure", gen_options.measure, "strinc|cxmi");
    gen_cmd->add_option("--threshold", gen_options.threshold, "cxmi threshold (nats)");
    gen_cmd->add_option("--out", gen_options.out, "training JSONL output");
    gen_cmd->add_option("--top-k", gen_options.top_k, "passages per question");
    gen_cmd->add_flag("--sweep", gen_options.sweep, "print cxmi pass-rate per threshold");
    add_backend_flags(gen_cmd, gen_options.backend);

    // trace
    auto* trace_cmd = app.add_subcommand("trace", "inspect a trace file");
    std::string trace_path, trace_id;
    trace_cmd->add_option("--trace", trace_path, "trace JSONL")->required();
    trace_cmd->add_option("--id", trace_id, "question id (omit for a summary of all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : 0;
    }

    try {
        if (*index_cmd) {
            if (window < 1) {
                std::cerr << "error: --window must be >= 1\n";
                return kExitConfig;
            }
            return cmd_index(corpus, index_out, window, k1, b);
        }
        if (*run_cmd) {
            if (!run_config_file.empty()) {
                apply_config_defaults(run_cmd, read_config_file(run_config_file));
            }
            if (run_options.index_path.empty() || run_options.dataset_path.empty()) {
                std::cerr << "error: --index and --dataset are required\n";
                return kExitConfig;
            }
            return cmd_run(run_options);
        }
        if (*eval_cmd) return cmd_eval(eval_trace, eval_dataset, eval_kind, eval_json);
        if (*gen_cmd) return cmd_filtergen(gen_options);
        if (*trace_cmd) return cmd_trace(trace_path, trace_id);
    } catch (const amber::DatasetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
