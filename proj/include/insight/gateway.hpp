#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace insight::gateway {

enum class Role { system, user, assistant };

std::string role_name(Role role);
Role role_from_name(std::string_view name);

struct TextPart {
    std::string text;
};

struct ImagePart {
    std::string png_bytes;
};

using Part = std::variant<TextPart, ImagePart>;

struct Message {
    Role role = Role::user;
    std::vector<Part> parts;
};

enum class ResponseFormat { free_text, json_object };

struct GatewayRequest {
    std::string model_id; // endpoint name from the endpoint table
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    ResponseFormat response_format = ResponseFormat::free_text;
};

struct Usage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct GatewayResponse {
    std::string text;
    std::string model_id;
    Usage usage;
    bool from_cache = false;
};

struct RetrievedDoc {
    std::string title;
    std::string snippet;
    std::string url;
    int rank = 1;
};

// Canonical serialization: object keys are sorted, image bytes are base64.
// Two requests hash equal iff every field (including image bytes) matches.
nlohmann::json request_to_json(const GatewayRequest& request);
GatewayRequest request_from_json(const nlohmann::json& doc);
std::string canonical_hash(const GatewayRequest& request);

// Throws Error unless the request has >= 1 user message, temperature >= 0,
// max_tokens > 0 and a model id.
void validate_request(const GatewayRequest& request);

// First integer in [1,10] appearing in the text, if any.
std::optional<int> parse_score_1_10(std::string_view text);

// Last standalone YES/NO (case-insensitive) in the text, if any.
std::optional<bool> parse_yes_no(std::string_view text);

class Backend {
public:
    virtual ~Backend() = default;
    virtual GatewayResponse complete(const GatewayRequest& request) = 0;
};

struct EndpointConfig {
    std::string name;
    std::string base_url;
    std::string model;       // provider-side model identifier
    std::string api_key_env; // env var holding the bearer token; may be empty
};

struct RetryPolicy {
    int max_retries = 3;
    int base_delay_ms = 1000; // doubled per attempt: 1s, 2s, 4s
};

// OpenAI-compatible chat-completions over HTTP(S). Transient failures
// (connect errors, 429, 5xx) are retried with exponential backoff.
class LiveBackend : public Backend {
public:
    explicit LiveBackend(std::map<std::string, EndpointConfig> endpoints, RetryPolicy retry = {});
    GatewayResponse complete(const GatewayRequest& request) override;

private:
    std::map<std::string, EndpointConfig> endpoints_;
    RetryPolicy retry_;
};

// Scripted responses for tests and offline runs. Rules are tried in order;
// the first rule whose conditions all hold answers the request, consuming
// its response list sequentially (the last entry repeats by default).
class MockBackend : public Backend {
public:
    struct Rule {
        std::string when_contains; // substring of the concatenated text parts; empty = any
        std::string when_model;    // exact model id; empty = any
        std::vector<std::string> responses;
        bool repeat_last = true;
    };

    void add_rule(Rule rule);
    void add_response(const std::string& text); // catch-all single-response rule

    // Handler checked before rules; lets tests fabricate responses.
    void set_handler(std::function<std::optional<std::string>(const GatewayRequest&)> handler);

    static std::shared_ptr<MockBackend> from_script(const nlohmann::json& script);
    static std::shared_ptr<MockBackend> from_script_file(const std::filesystem::path& path);

    GatewayResponse complete(const GatewayRequest& request) override;

private:
    struct RuleState {
        Rule rule;
        std::size_t consumed = 0;
    };

    std::mutex mutex_;
    std::vector<RuleState> rules_;
    std::function<std::optional<std::string>(const GatewayRequest&)> handler_;
};

enum class ReplayMode { record, replay };

// Content-addressed response cache: one JSON file per request hash. In
// record mode misses are forwarded to the inner backend and stored; in
// replay mode a miss is an error naming the hash.
class ReplayBackend : public Backend {
public:
    ReplayBackend(std::filesystem::path cache_dir, ReplayMode mode,
                  std::shared_ptr<Backend> inner = nullptr);
    GatewayResponse complete(const GatewayRequest& request) override;

private:
    std::filesystem::path cache_dir_;
    ReplayMode mode_;
    std::shared_ptr<Backend> inner_;
    std::mutex write_mutex_;
};

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::vector<RetrievedDoc> retrieve(const std::vector<std::string>& keywords) = 0;
};

// Canned documents from a local JSON file: {"keyword": [{title,snippet,url}]}.
class FixtureSearch : public SearchBackend {
public:
    explicit FixtureSearch(const std::filesystem::path& fixture_file);
    std::vector<RetrievedDoc> retrieve(const std::vector<std::string>& keywords) override;

private:
    nlohmann::json fixture_;
};

// HTTP GET <base_url>?q=<keywords>, expecting a JSON list of
// {title, snippet, url}.
class LiveSearch : public SearchBackend {
public:
    explicit LiveSearch(std::string base_url, RetryPolicy retry = {});
    std::vector<RetrievedDoc> retrieve(const std::vector<std::string>& keywords) override;

private:
    std::string base_url_;
    RetryPolicy retry_;
};

// Record/replay wrapper for search, keyed by the keyword list.
class ReplaySearch : public SearchBackend {
public:
    ReplaySearch(std::filesystem::path cache_dir, ReplayMode mode,
                 std::shared_ptr<SearchBackend> inner = nullptr);
    std::vector<RetrievedDoc> retrieve(const std::vector<std::string>& keywords) override;

private:
    std::filesystem::path cache_dir_;
    ReplayMode mode_;
    std::shared_ptr<SearchBackend> inner_;
    std::mutex write_mutex_;
};

// Front door used by the pipeline and the eval harness: validates requests,
// enforces a per-endpoint in-flight cap, and owns the search backend.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<Backend> backend, int per_endpoint_inflight = 4);
    ~Gateway();

    GatewayResponse complete(const GatewayRequest& request);

    // Asks the judge endpoint to score 1-10; one re-ask with a format
    // reminder on parse failure, then Error("judge format violation ...").
    int judge_score(const std::string& judge_id, const std::string& rubric,
                    const std::vector<Part>& context = {});

    void set_search_backend(std::shared_ptr<SearchBackend> search);

    // Rank-ordered, deduplicated by URL, truncated to 10.
    std::vector<RetrievedDoc> web_retrieve(const std::vector<std::string>& keywords);

    Backend& backend() { return *backend_; }

private:
    struct Limiter;
    Limiter& limiter_for(const std::string& endpoint);

    std::shared_ptr<Backend> backend_;
    std::shared_ptr<SearchBackend> search_;
    int per_endpoint_inflight_;
    std::mutex limiters_mutex_;
    std::map<std::string, std::unique_ptr<Limiter>> limiters_;
};

} // namespace insight::gateway
