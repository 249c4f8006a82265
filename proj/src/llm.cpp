#include "amber/llm.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>

#include <httplib.h>

namespace amber {

using nlohmann::json;

double LlmGateway::score_continuation(const std::string&, const std::string&,
                                      const std::string&) {
    throw UnsupportedError("backend does not support token scoring");
}

std::string cache_key(const LlmRequest& request) {
    json canonical = {
        {"model", request.model},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"want_logprobs", request.want_logprobs},
        {"messages", json::array()},
    };
    for (const auto& m : request.messages) {
        canonical["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    std::string data = canonical.dump();

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string response_to_json(const LlmResponse& response) {
    json obj = {
        {"text", response.text},
        {"prompt_tokens", response.prompt_tokens},
        {"completion_tokens", response.completion_tokens},
    };
    if (response.token_logprobs) {
        json arr = json::array();
        for (const auto& t : *response.token_logprobs) {
            arr.push_back({{"token", t.token}, {"logprob", t.logprob}});
        }
        obj["token_logprobs"] = arr;
    }
    return obj.dump();
}

LlmResponse response_from_json(const std::string& text) {
    json obj = json::parse(text);
    LlmResponse response;
    response.text = obj.at("text");
    response.prompt_tokens = obj.value("prompt_tokens", 0);
    response.completion_tokens = obj.value("completion_tokens", 0);
    if (obj.contains("token_logprobs")) {
        std::vector<TokenLogprob> lps;
        for (const auto& t : obj["token_logprobs"]) {
            lps.push_back({t.at("token"), t.at("logprob")});
        }
        response.token_logprobs = std::move(lps);
    }
    return response;
}

// ---------------------------------------------------------------------------
// MockGateway

MockGateway::MockGateway(std::vector<MockEntry> entries, MockMode mode)
    : entries_(std::move(entries)), mode_(mode) {}

MockGateway MockGateway::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("cannot open mock script: " + path);
    std::vector<MockEntry> entries;
    MockMode mode = MockMode::sequential;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json obj = json::parse(line);
        if (first && obj.contains("mode")) {
            mode = obj["mode"] == "matched" ? MockMode::matched : MockMode::sequential;
            first = false;
            continue;
        }
        first = false;
        MockEntry entry;
        entry.template_tag = obj.value("template", "");
        entry.contains = obj.value("contains", "");
        entry.response.text = obj.value("text", "");
        if (obj.contains("logprobs")) {
            std::vector<TokenLogprob> lps;
            for (const auto& lp : obj["logprobs"]) {
                lps.push_back({"", lp.get<double>()});
            }
            entry.response.token_logprobs = std::move(lps);
        }
        entries.push_back(std::move(entry));
    }
    return MockGateway(std::move(entries), mode);
}

const MockEntry& MockGateway::next(const std::string& tag, const std::string& content) {
    if (mode_ == MockMode::sequential) {
        if (cursor_ >= entries_.size()) {
            throw MockExhausted("mock script exhausted at call " + std::to_string(cursor_) +
                                " (tag: " + tag + ")");
        }
        const MockEntry& entry = entries_[cursor_++];
        if (!entry.template_tag.empty() && entry.template_tag != tag) {
            throw MockUnmatched("sequential entry " + std::to_string(cursor_ - 1) +
                                " expected tag '" + entry.template_tag + "', got '" + tag + "'");
        }
        if (!entry.contains.empty() && content.find(entry.contains) == std::string::npos) {
            throw MockUnmatched("sequential entry " + std::to_string(cursor_ - 1) +
                                " pattern '" + entry.contains + "' not found in request");
        }
        return entry;
    }
    for (const auto& entry : entries_) {
        if (!entry.template_tag.empty() && entry.template_tag != tag) continue;
        if (!entry.contains.empty() && content.find(entry.contains) == std::string::npos)
            continue;
        return entry;
    }
    throw MockUnmatched("no mock entry matches tag '" + tag + "'");
}

LlmResponse MockGateway::complete(const LlmRequest& request) {
    std::lock_guard lock(mu_);
    ++calls_;
    std::string content;
    for (const auto& m : request.messages) content += m.content + "\n";
    return next(request.tag, content).response;
}

double MockGateway::score_continuation(const std::string& prefix,
                                       const std::string& continuation,
                                       const std::string&) {
    if (continuation.empty()) return 0.0;
    std::lock_guard lock(mu_);
    ++calls_;
    const MockEntry& entry = next("score_continuation", prefix + "\n" + continuation);
    if (!entry.response.token_logprobs) {
        throw UnsupportedError("mock entry has no scripted logprobs");
    }
    double total = 0.0;
    for (const auto& t : *entry.response.token_logprobs) total += t.logprob;
    return total;
}

size_t MockGateway::entries_left() const {
    std::lock_guard lock(mu_);
    return mode_ == MockMode::sequential ? entries_.size() - cursor_ : 0;
}

// ---------------------------------------------------------------------------
// HttpGateway

HttpGateway::HttpGateway(HttpConfig config) : config_(std::move(config)) {}

namespace {

struct ParsedUrl {
    std::string host_port;  // scheme://host:port
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("bad endpoint url: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string HttpGateway::post_json(const std::string& path, const std::string& body) {
    ParsedUrl parsed = parse_url(config_.endpoint);
    std::string last_error;
    double delay = config_.backoff_seconds;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay *= 2.0;
        }
        httplib::Client client(parsed.host_port);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }
        ++calls_;
        auto res = client.Post(path.empty() ? parsed.path : path, headers, body,
                               "application/json");
        if (!res) {
            last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 500) {
            last_error = "server status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw TransportError("http status " + std::to_string(res->status) + ": " +
                                 res->body);
        }
        return res->body;
    }
    throw TransportError("request failed after " + std::to_string(config_.retries + 1) +
                         " attempts: " + last_error);
}

LlmResponse HttpGateway::complete(const LlmRequest& request) {
    json body = {
        {"model", request.model},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"messages", json::array()},
    };
    for (const auto& m : request.messages) {
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    if (request.want_logprobs) body["logprobs"] = true;

    json reply = json::parse(post_json("", body.dump()));
    LlmResponse response;
    const auto& choice = reply.at("choices").at(0);
    response.text = choice.at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
        response.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
        response.completion_tokens = reply["usage"].value("completion_tokens", 0);
    }
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content")) {
        std::vector<TokenLogprob> lps;
        for (const auto& t : choice["logprobs"]["content"]) {
            lps.push_back({t.value("token", ""), t.value("logprob", 0.0)});
        }
        response.token_logprobs = std::move(lps);
    }
    return response;
}

// Uses the legacy completions endpoint with echo + logprobs and sums the
// logprobs of tokens at or past the prefix boundary.
double HttpGateway::score_continuation(const std::string& prefix,
                                       const std::string& continuation,
                                       const std::string& model) {
    if (continuation.empty()) return 0.0;
    json body = {
        {"model", model},   {"prompt", prefix + continuation},
        {"max_tokens", 0},  {"echo", true},
        {"logprobs", 0},    {"temperature", 0.0},
    };
    ParsedUrl parsed = parse_url(config_.endpoint);
    std::string path = parsed.path;
    auto pos = path.find("/chat/completions");
    if (pos != std::string::npos) path = path.substr(0, pos) + "/completions";
    json reply = json::parse(post_json(path, body.dump()));
    const auto& choice = reply.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        throw UnsupportedError("endpoint returned no logprobs for scoring request");
    }
    const auto& lp = choice["logprobs"];
    const auto& offsets = lp.at("text_offset");
    const auto& logprobs = lp.at("token_logprobs");
    double total = 0.0;
    for (size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i].get<size_t>() >= prefix.size() && !logprobs[i].is_null()) {
            total += logprobs[i].get<double>();
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// CachedGateway

CachedGateway::CachedGateway(std::shared_ptr<LlmGateway> inner, std::string cache_dir)
    : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
    std::filesystem::create_directories(cache_dir_);
}

LlmResponse CachedGateway::complete(const LlmRequest& request) {
    std::filesystem::path path = std::filesystem::path(cache_dir_) / cache_key(request);
    {
        std::ifstream in(path, std::ios::binary);
        if (in) {
            std::ostringstream buf;
            buf << in.rdbuf();
            return response_from_json(buf.str());
        }
    }
    LlmResponse response = inner_->complete(request);
    // write-then-rename keeps concurrent writers atomic; identical keys carry
    // identical values so last-writer-wins is safe
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        out << response_to_json(response);
    }
    std::filesystem::rename(tmp, path);
    return response;
}

double CachedGateway::score_continuation(const std::string& prefix,
                                         const std::string& continuation,
                                         const std::string& model) {
    if (continuation.empty()) return 0.0;
    LlmRequest key_request;
    key_request.model = model;
    key_request.tag = "score_continuation";
    key_request.want_logprobs = true;
    key_request.max_tokens = 0;
    key_request.messages = {{"user", prefix}, {"assistant", continuation}};
    std::filesystem::path path = std::filesystem::path(cache_dir_) / cache_key(key_request);
    {
        std::ifstream in(path, std::ios::binary);
        if (in) {
            std::ostringstream buf;
            buf << in.rdbuf();
            LlmResponse cached = response_from_json(buf.str());
            double total = 0.0;
            if (cached.token_logprobs) {
                for (const auto& t : *cached.token_logprobs) total += t.logprob;
            }
            return total;
        }
    }
    double score = inner_->score_continuation(prefix, continuation, model);
    LlmResponse record;
    record.token_logprobs = std::vector<TokenLogprob>{{"", score}};
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << response_to_json(record);
    }
    std::filesystem::rename(tmp, path);
    return score;
}

}  // namespace amber
