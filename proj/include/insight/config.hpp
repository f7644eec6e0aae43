#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "insight/agent.hpp"
#include "insight/gateway.hpp"

namespace insight::config {

struct SearchConfig {
    std::filesystem::path fixture; // local canned-docs JSON
    std::string base_url;          // live search endpoint
};

struct JudgeConfig {
    std::vector<std::string> geval;   // exactly 2 endpoint names when present
    std::vector<std::string> novelty; // exactly 3 endpoint names when present
};

struct RunConfig {
    std::filesystem::path config_dir; // directory of the config file
    std::string run_id;
    std::filesystem::path dataset;
    std::string mode = "agent"; // agent | direct
    agent::AgentConfig agent;
    std::map<std::string, gateway::EndpointConfig> endpoints;
    JudgeConfig judges;
    SearchConfig search;
    std::string backend = "mock"; // mock | live
    std::filesystem::path mock_script;
    std::filesystem::path cache_dir; // falls back to $INSIGHT_CACHE_DIR
    std::string replay = "off";      // off | record | replay
    int parallelism = 1;
    std::filesystem::path output_dir = "out";
    std::filesystem::path prompts_dir;
};

// Loads and validates a config file. Relative paths are resolved against
// the config file's directory; secrets stay in environment variables.
RunConfig load_config(const std::filesystem::path& file);

} // namespace insight::config
