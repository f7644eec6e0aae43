#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace insight::prompts {

// Text templates with {{name}} placeholders, one UTF-8 .txt file per
// template; the file stem is the template name.
class PromptLibrary {
public:
    static PromptLibrary load_dir(const std::filesystem::path& dir);

    bool has(const std::string& name) const { return templates_.count(name) > 0; }

    // Replaces every {{key}}; throws if the template is unknown or any
    // placeholder is left unresolved.
    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& values) const;

    void set(const std::string& name, std::string text);

    const std::map<std::string, std::string>& templates() const { return templates_; }

private:
    std::map<std::string, std::string> templates_;
};

} // namespace insight::prompts
