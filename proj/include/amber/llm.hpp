#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace amber {

struct Message {
    std::string role;  // system | user | assistant
    std::string content;
};

struct LlmRequest {
    std::string model;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    bool want_logprobs = false;
    /// Pipeline stage that issued the request (template enum name or
    /// "score_continuation"). Metadata only: excluded from the cache key.
    std::string tag;
};

struct TokenLogprob {
    std::string token;
    double logprob;  // nats, <= 0
};

struct LlmResponse {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MockExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MockUnmatched : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Uniform LLM access. Implementations must be safe for concurrent use.
class LlmGateway {
  public:
    virtual ~LlmGateway() = default;

    virtual LlmResponse complete(const LlmRequest& request) = 0;

    /// Total logprob (nats) of `continuation` forced after `prefix`.
    /// Throws UnsupportedError when the backend cannot score tokens.
    virtual double score_continuation(const std::string& prefix,
                                      const std::string& continuation,
                                      const std::string& model);

    /// Requests that reached the backend (cache hits excluded).
    virtual long backend_calls() const = 0;
};

/// 256-bit hex digest over the canonical serialization of the request
/// (model, temperature, max_tokens, want_logprobs, messages in order).
std::string cache_key(const LlmRequest& request);

struct MockEntry {
    std::string template_tag;  // empty = match any tag
    std::string contains;      // empty = match any content
    LlmResponse response;
};

enum class MockMode { sequential, matched };

/// Deterministic scripted backend. Sequential mode consumes entries in order
/// (matchers, when present, are asserted); matched mode serves the first
/// entry whose matcher applies without consuming it.
class MockGateway : public LlmGateway {
  public:
    MockGateway(std::vector<MockEntry> entries, MockMode mode);
    MockGateway(MockGateway&& other) noexcept
        : entries_(std::move(other.entries_)),
          mode_(other.mode_),
          cursor_(other.cursor_),
          calls_(other.calls_.load()) {}

    /// JSON-lines script: optional first line {"mode": "..."}, then one entry
    /// per line {"template": ..., "contains": ..., "text": ..., "logprobs": [...]}.
    static MockGateway from_file(const std::string& path);

    LlmResponse complete(const LlmRequest& request) override;
    double score_continuation(const std::string& prefix, const std::string& continuation,
                              const std::string& model) override;
    long backend_calls() const override { return calls_.load(); }

    size_t entries_left() const;

  private:
    const MockEntry& next(const std::string& tag, const std::string& content);

    std::vector<MockEntry> entries_;
    MockMode mode_;
    size_t cursor_ = 0;
    std::atomic<long> calls_{0};
    mutable std::mutex mu_;
};

struct HttpConfig {
    std::string endpoint;  // e.g. http://host:port/v1/chat/completions
    std::string api_key;   // usually from AMBER_LLM_API_KEY
    int retries = 3;
    double backoff_seconds = 0.5;  // doubled per attempt
    int timeout_seconds = 60;
};

/// OpenAI-compatible chat-completions client with retry on transport
/// failures only. Malformed completions are the caller's problem.
class HttpGateway : public LlmGateway {
  public:
    explicit HttpGateway(HttpConfig config);

    LlmResponse complete(const LlmRequest& request) override;
    double score_continuation(const std::string& prefix, const std::string& continuation,
                              const std::string& model) override;
    long backend_calls() const override { return calls_.load(); }

  private:
    std::string post_json(const std::string& path, const std::string& body);

    HttpConfig config_;
    std::atomic<long> calls_{0};
};

/// File-backed response cache in front of another gateway. One file per key,
/// name = hex digest, content = canonical JSON of the response.
class CachedGateway : public LlmGateway {
  public:
    CachedGateway(std::shared_ptr<LlmGateway> inner, std::string cache_dir);

    LlmResponse complete(const LlmRequest& request) override;
    double score_continuation(const std::string& prefix, const std::string& continuation,
                              const std::string& model) override;
    long backend_calls() const override { return inner_->backend_calls(); }

  private:
    std::shared_ptr<LlmGateway> inner_;
    std::string cache_dir_;
};

/// Per-run decorator counting logical completions (cache hits included).
class CountingGateway : public LlmGateway {
  public:
    explicit CountingGateway(LlmGateway& inner) : inner_(inner) {}

    LlmResponse complete(const LlmRequest& request) override {
        ++count_;
        return inner_.complete(request);
    }
    double score_continuation(const std::string& prefix, const std::string& continuation,
                              const std::string& model) override {
        ++count_;
        return inner_.score_continuation(prefix, continuation, model);
    }
    long backend_calls() const override { return inner_.backend_calls(); }
    long count() const { return count_.load(); }

  private:
    LlmGateway& inner_;
    std::atomic<long> count_{0};
};

std::string response_to_json(const LlmResponse& response);
LlmResponse response_from_json(const std::string& text);

}  // namespace amber
