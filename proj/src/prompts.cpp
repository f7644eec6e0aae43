#include "insight/prompts.hpp"

#include <algorithm>

#include "insight/error.hpp"
#include "insight/util.hpp"

namespace insight::prompts {

PromptLibrary PromptLibrary::load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("prompt directory not found: " + dir.string());
    }
    PromptLibrary library;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        library.templates_[file.stem().string()] = util::read_file(file);
    }
    if (library.templates_.empty()) {
        throw ConfigError("prompt directory contains no .txt templates: " + dir.string());
    }
    return library;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& values) const {
    const auto it = templates_.find(name);
    if (it == templates_.end()) throw Error("unknown prompt template '" + name + "'");

    std::string text = it->second;
    for (const auto& [key, value] : values) {
        const std::string placeholder = "{{" + key + "}}";
        std::size_t pos = 0;
        while ((pos = text.find(placeholder, pos)) != std::string::npos) {
            text.replace(pos, placeholder.size(), value);
            pos += value.size();
        }
    }
    const auto open = text.find("{{");
    if (open != std::string::npos) {
        const auto close = text.find("}}", open);
        const std::string leftover =
            close == std::string::npos ? "{{" : text.substr(open, close - open + 2);
        throw Error("unresolved placeholder '" + leftover + "' in template '" + name + "'");
    }
    return text;
}

void PromptLibrary::set(const std::string& name, std::string text) {
    templates_[name] = std::move(text);
}

} // namespace insight::prompts
