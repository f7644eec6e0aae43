#include "insight/config.hpp"

#include <cctype>
#include <cstdlib>

#include "json.hpp"

#include "insight/error.hpp"
#include "insight/util.hpp"

namespace insight::config {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& path) {
    if (path.empty()) return {};
    std::filesystem::path p(path);
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

} // namespace

RunConfig load_config(const std::filesystem::path& file) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(util::read_file(file));
    } catch (const Error& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + file.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object: " + file.string());

    RunConfig config;
    config.config_dir = std::filesystem::absolute(file).parent_path();

    config.run_id = doc.value("run_id", "");
    config.dataset = resolve(config.config_dir, doc.value("dataset", ""));
    if (config.dataset.empty()) throw ConfigError("config is missing 'dataset'");

    config.mode = doc.value("mode", "agent");
    if (config.mode != "agent" && config.mode != "direct") {
        throw ConfigError("mode must be 'agent' or 'direct', got '" + config.mode + "'");
    }

    if (doc.contains("agent")) {
        const auto& a = doc["agent"];
        if (!a.is_object()) throw ConfigError("'agent' must be an object");
        config.agent.root_question_count = a.value("root_questions", 3);
        config.agent.candidate_count = a.value("candidates", 3);
        config.agent.depth = a.value("depth", 3);
        config.agent.backbone = a.value("backbone", "");
        config.agent.analysis = a.value("analysis", "");
        config.agent.temperature = a.value("temperature", 0.0);
        config.agent.max_tokens = a.value("max_tokens", 1024);
    }
    if (config.agent.root_question_count < 1) {
        throw ConfigError("agent.root_questions must be >= 1");
    }
    if (config.agent.candidate_count < 1) throw ConfigError("agent.candidates must be >= 1");
    if (config.agent.depth < 0) throw ConfigError("agent.depth must be >= 0");
    if (config.agent.backbone.empty()) throw ConfigError("agent.backbone endpoint is required");
    if (config.agent.analysis.empty()) config.agent.analysis = config.agent.backbone;

    if (doc.contains("endpoints")) {
        if (!doc["endpoints"].is_object()) throw ConfigError("'endpoints' must be an object");
        for (const auto& [name, endpoint_doc] : doc["endpoints"].items()) {
            gateway::EndpointConfig endpoint;
            endpoint.name = name;
            endpoint.base_url = endpoint_doc.value("base_url", "");
            endpoint.model = endpoint_doc.value("model", "");
            if (endpoint_doc.contains("api_key_env")) {
                endpoint.api_key_env = endpoint_doc.value("api_key_env", "");
            } else if (!endpoint.base_url.empty()) {
                // keys stay in the environment: INSIGHT_API_KEY_<NAME>
                std::string suffix = name;
                for (auto& c : suffix) {
                    c = std::isalnum(static_cast<unsigned char>(c))
                            ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                            : '_';
                }
                endpoint.api_key_env = "INSIGHT_API_KEY_" + suffix;
            }
            config.endpoints[name] = std::move(endpoint);
        }
    }

    if (doc.contains("judges")) {
        const auto& judges = doc["judges"];
        if (!judges.is_object()) throw ConfigError("'judges' must be an object");
        if (judges.contains("geval")) {
            config.judges.geval = judges["geval"].get<std::vector<std::string>>();
            if (config.judges.geval.size() != 2) {
                throw ConfigError("judges.geval must list exactly 2 endpoints, got " +
                                  std::to_string(config.judges.geval.size()));
            }
        }
        if (judges.contains("novelty")) {
            config.judges.novelty = judges["novelty"].get<std::vector<std::string>>();
            if (config.judges.novelty.size() != 3) {
                throw ConfigError("judges.novelty must list exactly 3 endpoints, got " +
                                  std::to_string(config.judges.novelty.size()));
            }
        }
    }

    if (doc.contains("search")) {
        const auto& search = doc["search"];
        if (!search.is_object()) throw ConfigError("'search' must be an object");
        config.search.fixture = resolve(config.config_dir, search.value("fixture", ""));
        config.search.base_url = search.value("base_url", "");
    }

    config.backend = doc.value("backend", "mock");
    if (config.backend != "mock" && config.backend != "live") {
        throw ConfigError("backend must be 'mock' or 'live', got '" + config.backend + "'");
    }
    config.mock_script = resolve(config.config_dir, doc.value("mock_script", ""));
    if (config.backend == "mock" && config.mock_script.empty()) {
        throw ConfigError("backend 'mock' requires 'mock_script'");
    }

    config.cache_dir = resolve(config.config_dir, doc.value("cache_dir", ""));
    if (config.cache_dir.empty()) {
        if (const char* env = std::getenv("INSIGHT_CACHE_DIR"); env != nullptr && *env != '\0') {
            config.cache_dir = env;
        }
    }

    config.replay = doc.value("replay", "off");
    if (config.replay != "off" && config.replay != "record" && config.replay != "replay") {
        throw ConfigError("replay must be 'off', 'record' or 'replay'");
    }

    config.parallelism = doc.value("parallelism", 1);
    if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");

    config.output_dir = resolve(config.config_dir, doc.value("output_dir", "out"));
    config.prompts_dir = resolve(config.config_dir, doc.value("prompts", ""));
    if (config.prompts_dir.empty()) throw ConfigError("config is missing 'prompts'");

    if (config.run_id.empty()) config.run_id = "run-" + config.mode;
    return config;
}

} // namespace insight::config
