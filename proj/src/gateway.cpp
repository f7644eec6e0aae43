#include "insight/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <thread>
#include <unordered_set>

#include "httplib.h"

#include "insight/error.hpp"
#include "insight/util.hpp"

namespace insight::gateway {

namespace {

constexpr std::size_t kMaxRetrievedDocs = 10;

std::string format_name(ResponseFormat format) {
    return format == ResponseFormat::json_object ? "json_object" : "free_text";
}

ResponseFormat format_from_name(std::string_view name) {
    if (name == "json_object") return ResponseFormat::json_object;
    if (name == "free_text") return ResponseFormat::free_text;
    throw Error("unknown response_format: " + std::string(name));
}

// "http://host:port/prefix" -> ("http://host:port", "/prefix")
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error("endpoint base_url must include a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

std::string percent_encode(std::string_view text) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (char raw : text) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(raw);
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        }
    }
    return out;
}

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

std::string concatenated_text(const GatewayRequest& request) {
    std::string text;
    for (const auto& message : request.messages) {
        for (const auto& part : message.parts) {
            if (const auto* t = std::get_if<TextPart>(&part)) {
                if (!text.empty()) text.push_back('\n');
                text += t->text;
            }
        }
    }
    return text;
}

Usage synthetic_usage(const GatewayRequest& request, const std::string& response_text) {
    // Rough char/4 estimate so mock runs still produce plausible accounting.
    long prompt = 0;
    for (const auto& message : request.messages) {
        for (const auto& part : message.parts) {
            if (const auto* t = std::get_if<TextPart>(&part)) {
                prompt += static_cast<long>(t->text.size());
            } else {
                prompt += 1024;
            }
        }
    }
    return {prompt / 4, static_cast<long>(response_text.size()) / 4};
}

nlohmann::json response_to_json(const GatewayResponse& response) {
    return {
        {"text", response.text},
        {"model_id", response.model_id},
        {"usage",
         {{"prompt_tokens", response.usage.prompt_tokens},
          {"completion_tokens", response.usage.completion_tokens}}},
    };
}

GatewayResponse response_from_json(const nlohmann::json& doc) {
    GatewayResponse response;
    response.text = doc.at("text").get<std::string>();
    response.model_id = doc.at("model_id").get<std::string>();
    response.usage.prompt_tokens = doc.at("usage").at("prompt_tokens").get<long>();
    response.usage.completion_tokens = doc.at("usage").at("completion_tokens").get<long>();
    return response;
}

std::string search_cache_key(const std::vector<std::string>& keywords) {
    std::string joined = "web_retrieve";
    for (const auto& keyword : keywords) {
        joined.push_back('\x1f');
        joined += keyword;
    }
    return util::sha256_hex(joined);
}

nlohmann::json docs_to_json(const std::vector<RetrievedDoc>& docs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& doc : docs) {
        out.push_back({{"title", doc.title},
                       {"snippet", doc.snippet},
                       {"url", doc.url},
                       {"rank", doc.rank}});
    }
    return out;
}

std::vector<RetrievedDoc> docs_from_json(const nlohmann::json& array) {
    std::vector<RetrievedDoc> docs;
    for (const auto& entry : array) {
        RetrievedDoc doc;
        doc.title = entry.value("title", "");
        doc.snippet = entry.value("snippet", "");
        doc.url = entry.value("url", "");
        doc.rank = entry.value("rank", static_cast<int>(docs.size()) + 1);
        docs.push_back(std::move(doc));
    }
    return docs;
}

} // namespace

std::string role_name(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_name(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    throw Error("unknown message role: " + std::string(name));
}

nlohmann::json request_to_json(const GatewayRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& message : request.messages) {
        nlohmann::json parts = nlohmann::json::array();
        for (const auto& part : message.parts) {
            if (const auto* text = std::get_if<TextPart>(&part)) {
                parts.push_back({{"type", "text"}, {"text", text->text}});
            } else {
                const auto& image = std::get<ImagePart>(part);
                parts.push_back(
                    {{"type", "image_png"}, {"data_b64", util::base64_encode(image.png_bytes)}});
            }
        }
        messages.push_back({{"role", role_name(message.role)}, {"parts", std::move(parts)}});
    }
    return {
        {"model_id", request.model_id},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"response_format", format_name(request.response_format)},
    };
}

GatewayRequest request_from_json(const nlohmann::json& doc) {
    GatewayRequest request;
    request.model_id = doc.at("model_id").get<std::string>();
    request.temperature = doc.at("temperature").get<double>();
    request.max_tokens = doc.at("max_tokens").get<int>();
    request.response_format = format_from_name(doc.at("response_format").get<std::string>());
    for (const auto& message_doc : doc.at("messages")) {
        Message message;
        message.role = role_from_name(message_doc.at("role").get<std::string>());
        for (const auto& part_doc : message_doc.at("parts")) {
            const std::string type = part_doc.at("type").get<std::string>();
            if (type == "text") {
                message.parts.push_back(TextPart{part_doc.at("text").get<std::string>()});
            } else if (type == "image_png") {
                message.parts.push_back(
                    ImagePart{util::base64_decode(part_doc.at("data_b64").get<std::string>())});
            } else {
                throw Error("unknown message part type: " + type);
            }
        }
        request.messages.push_back(std::move(message));
    }
    return request;
}

std::string canonical_hash(const GatewayRequest& request) {
    // nlohmann::json orders object keys, so dump() is canonical.
    return util::sha256_hex(request_to_json(request).dump());
}

void validate_request(const GatewayRequest& request) {
    if (request.model_id.empty()) throw Error("request is missing a model id");
    if (request.temperature < 0.0) throw Error("temperature must be >= 0");
    if (request.max_tokens <= 0) throw Error("max_tokens must be positive");
    const bool has_user = std::any_of(request.messages.begin(), request.messages.end(),
                                      [](const Message& m) { return m.role == Role::user; });
    if (!has_user) throw Error("request must contain at least one user message");
}

std::optional<int> parse_score_1_10(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            std::size_t j = i;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            if (j - i <= 2) {
                const int value = std::stoi(std::string(text.substr(i, j - i)));
                if (value >= 1 && value <= 10) return value;
            }
            i = j;
        } else {
            ++i;
        }
    }
    return std::nullopt;
}

std::optional<bool> parse_yes_no(std::string_view text) {
    std::optional<bool> last;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto is_word = [&](std::string_view word) {
            if (i + word.size() > text.size()) return false;
            for (std::size_t k = 0; k < word.size(); ++k) {
                if (std::tolower(static_cast<unsigned char>(text[i + k])) != word[k]) return false;
            }
            const bool left_ok =
                i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
            const bool right_ok = i + word.size() == text.size() ||
                                  !std::isalnum(static_cast<unsigned char>(text[i + word.size()]));
            return left_ok && right_ok;
        };
        if (is_word("yes")) last = true;
        else if (is_word("no")) last = false;
    }
    return last;
}

// ── Live backend ────────────────────────────────────────────────

LiveBackend::LiveBackend(std::map<std::string, EndpointConfig> endpoints, RetryPolicy retry)
    : endpoints_(std::move(endpoints)), retry_(retry) {}

GatewayResponse LiveBackend::complete(const GatewayRequest& request) {
    const auto it = endpoints_.find(request.model_id);
    if (it == endpoints_.end()) {
        throw Error("unknown endpoint '" + request.model_id + "'");
    }
    const EndpointConfig& endpoint = it->second;
    if (endpoint.base_url.empty()) {
        throw Error("endpoint '" + endpoint.name + "' has no base_url configured");
    }

    nlohmann::json body;
    body["model"] = endpoint.model.empty() ? endpoint.name : endpoint.model;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    if (request.response_format == ResponseFormat::json_object) {
        body["response_format"] = {{"type", "json_object"}};
    }
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& message : request.messages) {
        nlohmann::json entry;
        entry["role"] = role_name(message.role);
        if (message.parts.size() == 1 && std::holds_alternative<TextPart>(message.parts[0])) {
            entry["content"] = std::get<TextPart>(message.parts[0]).text;
        } else {
            nlohmann::json content = nlohmann::json::array();
            for (const auto& part : message.parts) {
                if (const auto* text = std::get_if<TextPart>(&part)) {
                    content.push_back({{"type", "text"}, {"text", text->text}});
                } else {
                    const auto& image = std::get<ImagePart>(part);
                    content.push_back(
                        {{"type", "image_url"},
                         {"image_url",
                          {{"url",
                            "data:image/png;base64," + util::base64_encode(image.png_bytes)}}}});
                }
            }
            entry["content"] = std::move(content);
        }
        messages.push_back(std::move(entry));
    }
    body["messages"] = std::move(messages);

    httplib::Headers headers;
    if (!endpoint.api_key_env.empty()) {
        const char* key = std::getenv(endpoint.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw Error("api key env var '" + endpoint.api_key_env + "' is not set for endpoint '" +
                        endpoint.name + "'");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto [host, prefix] = split_base_url(endpoint.base_url);
    const std::string path = prefix + "/v1/chat/completions";
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(retry_.base_delay_ms << (attempt - 1)));
        }
        httplib::Client client(host);
        client.set_connection_timeout(30);
        client.set_read_timeout(300);
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "connection failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw Error("endpoint '" + endpoint.name + "' returned invalid JSON: " + e.what());
            }
            GatewayResponse response;
            response.model_id = request.model_id;
            const auto& choice = doc.at("choices").at(0);
            const auto& content = choice.at("message").at("content");
            response.text = content.is_null() ? "" : content.get<std::string>();
            if (doc.contains("usage")) {
                response.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
                response.usage.completion_tokens = doc["usage"].value("completion_tokens", 0L);
            }
            return response;
        }
        std::string provider_message = res->body;
        const auto error_doc = nlohmann::json::parse(res->body, nullptr, false);
        if (!error_doc.is_discarded() && error_doc.contains("error")) {
            const auto& err = error_doc["error"];
            provider_message = err.is_object() ? err.value("message", res->body)
                                               : err.dump();
        }
        last_error = "provider error (status " + std::to_string(res->status) + "): " +
                     provider_message;
        if (!retryable_status(res->status)) throw Error(last_error);
    }
    throw Error("exhausted retries after " + std::to_string(retry_.max_retries + 1) +
                " attempts: " + last_error);
}

// ── Mock backend ────────────────────────────────────────────────

void MockBackend::add_rule(Rule rule) {
    std::lock_guard lock(mutex_);
    rules_.push_back({std::move(rule), 0});
}

void MockBackend::add_response(const std::string& text) {
    add_rule(Rule{"", "", {text}, true});
}

void MockBackend::set_handler(
    std::function<std::optional<std::string>(const GatewayRequest&)> handler) {
    std::lock_guard lock(mutex_);
    handler_ = std::move(handler);
}

std::shared_ptr<MockBackend> MockBackend::from_script(const nlohmann::json& script) {
    auto backend = std::make_shared<MockBackend>();
    if (!script.is_object() || !script.contains("rules") || !script["rules"].is_array()) {
        throw ConfigError("mock script must be an object with a 'rules' array");
    }
    for (const auto& rule_doc : script["rules"]) {
        Rule rule;
        rule.when_contains = rule_doc.value("when_contains", "");
        rule.when_model = rule_doc.value("when_model", "");
        rule.repeat_last = rule_doc.value("repeat_last", true);
        if (rule_doc.contains("responses")) {
            for (const auto& response : rule_doc["responses"]) {
                rule.responses.push_back(response.is_string() ? response.get<std::string>()
                                                              : response.dump());
            }
        } else if (rule_doc.contains("response")) {
            const auto& response = rule_doc["response"];
            rule.responses.push_back(response.is_string() ? response.get<std::string>()
                                                          : response.dump());
        }
        if (rule.responses.empty()) {
            throw ConfigError("mock rule needs a 'response' or non-empty 'responses'");
        }
        backend->add_rule(std::move(rule));
    }
    return backend;
}

std::shared_ptr<MockBackend> MockBackend::from_script_file(const std::filesystem::path& path) {
    nlohmann::json script;
    try {
        script = nlohmann::json::parse(util::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mock script is not valid JSON: " + path.string() + ": " + e.what());
    }
    return from_script(script);
}

GatewayResponse MockBackend::complete(const GatewayRequest& request) {
    std::lock_guard lock(mutex_);
    std::string text;
    if (handler_) {
        if (auto scripted = handler_(request)) {
            GatewayResponse response;
            response.text = *scripted;
            response.model_id = request.model_id;
            response.usage = synthetic_usage(request, response.text);
            return response;
        }
    }
    const std::string prompt_text = concatenated_text(request);
    for (auto& state : rules_) {
        const Rule& rule = state.rule;
        if (!rule.when_model.empty() && rule.when_model != request.model_id) continue;
        if (!rule.when_contains.empty() &&
            prompt_text.find(rule.when_contains) == std::string::npos) {
            continue;
        }
        std::size_t index = state.consumed;
        if (index >= rule.responses.size()) {
            if (!rule.repeat_last) continue; // exhausted; let a later rule answer
            index = rule.responses.size() - 1;
        }
        ++state.consumed;
        GatewayResponse response;
        response.text = rule.responses[index];
        response.model_id = request.model_id;
        response.usage = synthetic_usage(request, response.text);
        return response;
    }
    throw Error("mock backend has no rule matching request for model '" + request.model_id + "'");
}

// ── Replay backend ──────────────────────────────────────────────

ReplayBackend::ReplayBackend(std::filesystem::path cache_dir, ReplayMode mode,
                             std::shared_ptr<Backend> inner)
    : cache_dir_(std::move(cache_dir)), mode_(mode), inner_(std::move(inner)) {
    std::filesystem::create_directories(cache_dir_);
}

GatewayResponse ReplayBackend::complete(const GatewayRequest& request) {
    const std::string hash = canonical_hash(request);
    const std::filesystem::path entry_path = cache_dir_ / (hash + ".json");

    if (std::filesystem::exists(entry_path)) {
        const auto doc = nlohmann::json::parse(util::read_file(entry_path));
        GatewayResponse response = response_from_json(doc.at("response"));
        response.from_cache = true;
        return response;
    }
    if (mode_ == ReplayMode::replay) {
        throw Error("replay cache miss for request " + hash);
    }
    if (!inner_) throw Error("record mode requires an inner backend");

    GatewayResponse response = inner_->complete(request);
    const nlohmann::json entry = {
        {"request", request_to_json(request)},
        {"response", response_to_json(response)},
    };
    {
        std::lock_guard lock(write_mutex_);
        if (!std::filesystem::exists(entry_path)) {
            util::write_file_atomic(entry_path, entry.dump(2));
        }
    }
    response.from_cache = false;
    return response;
}

// ── Search backends ─────────────────────────────────────────────

FixtureSearch::FixtureSearch(const std::filesystem::path& fixture_file) {
    try {
        fixture_ = nlohmann::json::parse(util::read_file(fixture_file));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("search fixture is not valid JSON: " + fixture_file.string() + ": " +
                          e.what());
    }
    if (!fixture_.is_object()) {
        throw ConfigError("search fixture must map keywords to document lists: " +
                          fixture_file.string());
    }
}

std::vector<RetrievedDoc> FixtureSearch::retrieve(const std::vector<std::string>& keywords) {
    std::vector<RetrievedDoc> docs;
    for (const auto& keyword : keywords) {
        const auto it = fixture_.find(keyword);
        if (it == fixture_.end()) continue;
        for (const auto& entry : *it) {
            RetrievedDoc doc;
            doc.title = entry.value("title", "");
            doc.snippet = entry.value("snippet", "");
            doc.url = entry.value("url", "");
            docs.push_back(std::move(doc));
        }
    }
    return docs;
}

LiveSearch::LiveSearch(std::string base_url, RetryPolicy retry)
    : base_url_(std::move(base_url)), retry_(retry) {}

std::vector<RetrievedDoc> LiveSearch::retrieve(const std::vector<std::string>& keywords) {
    std::string query;
    for (const auto& keyword : keywords) {
        if (!query.empty()) query += "%20";
        query += percent_encode(keyword);
    }
    const auto [host, prefix] = split_base_url(base_url_);
    const std::string path = (prefix.empty() ? "/" : prefix) + "?q=" + query;

    std::string last_error;
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(retry_.base_delay_ms << (attempt - 1)));
        }
        httplib::Client client(host);
        client.set_connection_timeout(30);
        client.set_read_timeout(60);
        auto res = client.Get(path);
        if (!res) {
            last_error = "connection failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            const auto doc = nlohmann::json::parse(res->body, nullptr, false);
            if (doc.is_discarded() || !doc.is_array()) {
                throw Error("search backend returned invalid JSON");
            }
            return docs_from_json(doc);
        }
        last_error = "search backend error (status " + std::to_string(res->status) + ")";
        if (!retryable_status(res->status)) throw Error(last_error);
    }
    throw Error("exhausted retries after " + std::to_string(retry_.max_retries + 1) +
                " attempts: " + last_error);
}

ReplaySearch::ReplaySearch(std::filesystem::path cache_dir, ReplayMode mode,
                           std::shared_ptr<SearchBackend> inner)
    : cache_dir_(std::move(cache_dir)), mode_(mode), inner_(std::move(inner)) {
    std::filesystem::create_directories(cache_dir_);
}

std::vector<RetrievedDoc> ReplaySearch::retrieve(const std::vector<std::string>& keywords) {
    const std::filesystem::path entry_path = cache_dir_ / (search_cache_key(keywords) + ".json");
    if (std::filesystem::exists(entry_path)) {
        const auto doc = nlohmann::json::parse(util::read_file(entry_path));
        return docs_from_json(doc.at("docs"));
    }
    if (mode_ == ReplayMode::replay) {
        throw Error("replay cache miss for web_retrieve " + search_cache_key(keywords));
    }
    if (!inner_) throw Error("record mode requires an inner search backend");

    const auto docs = inner_->retrieve(keywords);
    const nlohmann::json entry = {{"keywords", keywords}, {"docs", docs_to_json(docs)}};
    {
        std::lock_guard lock(write_mutex_);
        if (!std::filesystem::exists(entry_path)) {
            util::write_file_atomic(entry_path, entry.dump(2));
        }
    }
    return docs;
}

// ── Gateway ─────────────────────────────────────────────────────

struct Gateway::Limiter {
    std::mutex mutex;
    std::condition_variable cv;
    int in_flight = 0;
};

Gateway::Gateway(std::shared_ptr<Backend> backend, int per_endpoint_inflight)
    : backend_(std::move(backend)), per_endpoint_inflight_(std::max(1, per_endpoint_inflight)) {}

Gateway::~Gateway() = default;

Gateway::Limiter& Gateway::limiter_for(const std::string& endpoint) {
    std::lock_guard lock(limiters_mutex_);
    auto& slot = limiters_[endpoint];
    if (!slot) slot = std::make_unique<Limiter>();
    return *slot;
}

GatewayResponse Gateway::complete(const GatewayRequest& request) {
    validate_request(request);
    Limiter& limiter = limiter_for(request.model_id);
    {
        std::unique_lock lock(limiter.mutex);
        limiter.cv.wait(lock, [&] { return limiter.in_flight < per_endpoint_inflight_; });
        ++limiter.in_flight;
    }
    try {
        GatewayResponse response = backend_->complete(request);
        {
            std::lock_guard lock(limiter.mutex);
            --limiter.in_flight;
        }
        limiter.cv.notify_one();
        return response;
    } catch (...) {
        {
            std::lock_guard lock(limiter.mutex);
            --limiter.in_flight;
        }
        limiter.cv.notify_one();
        throw;
    }
}

int Gateway::judge_score(const std::string& judge_id, const std::string& rubric,
                         const std::vector<Part>& context) {
    GatewayRequest request;
    request.model_id = judge_id;
    request.max_tokens = 128;
    Message user{Role::user, {TextPart{rubric}}};
    user.parts.insert(user.parts.end(), context.begin(), context.end());
    request.messages.push_back(std::move(user));

    GatewayResponse response = complete(request);
    if (const auto score = parse_score_1_10(response.text)) return *score;

    request.messages.push_back({Role::assistant, {TextPart{response.text}}});
    request.messages.push_back(
        {Role::user, {TextPart{"Respond with a single integer from 1 to 10 and nothing else."}}});
    response = complete(request);
    if (const auto score = parse_score_1_10(response.text)) return *score;

    throw Error("judge format violation: no 1-10 score in response from judge '" + judge_id + "'");
}

void Gateway::set_search_backend(std::shared_ptr<SearchBackend> search) {
    search_ = std::move(search);
}

std::vector<RetrievedDoc> Gateway::web_retrieve(const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw Error("empty keyword list");
    if (!search_) throw Error("retrieval backend not configured");

    const auto raw = search_->retrieve(keywords);
    std::vector<RetrievedDoc> docs;
    std::unordered_set<std::string> seen_urls;
    for (const auto& doc : raw) {
        if (!doc.url.empty() && !seen_urls.insert(doc.url).second) continue;
        docs.push_back(doc);
        docs.back().rank = static_cast<int>(docs.size());
        if (docs.size() == kMaxRetrievedDocs) break;
    }
    return docs;
}

} // namespace insight::gateway
