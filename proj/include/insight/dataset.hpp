#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "insight/error.hpp"

namespace insight::dataset {

inline constexpr std::array<std::string_view, 6> kInsightTypes = {
    "Descriptive", "Diagnostic", "Predictive", "Prescriptive", "Evaluative", "Exploratory",
};

// Case-insensitive match against the taxonomy; returns the canonical spelling.
std::optional<std::string> canonical_insight_type(std::string_view raw);

struct GroundTruthInsight {
    std::string question;
    std::string insight_text;
    std::string insight_type;
    std::string evidence; // may be empty
};

struct BenchmarkCase {
    std::string case_id;
    std::filesystem::path image_ref; // resolved path used for reading
    std::string image_rel;           // path as written in the manifest
    std::string goal;
    int difficulty = 0;
    std::vector<GroundTruthInsight> ground_truth;
};

struct DatasetManifest {
    std::string version;
    std::vector<BenchmarkCase> cases;
};

struct Violation {
    std::string case_id;
    std::string field;
    std::string message;

    std::string str() const;
};

class ValidationError : public Error {
public:
    ValidationError(std::string summary, std::vector<Violation> violations);

    const std::vector<Violation>& violations() const { return violations_; }

private:
    std::vector<Violation> violations_;
};

// Loads <root>/manifest.json (or `root` itself when it is a file), checks
// every invariant, and preserves case order. Throws Error for missing or
// malformed manifests and ValidationError when any case is invalid.
DatasetManifest load_dataset(const std::filesystem::path& root);

// Empty result iff every invariant holds; each entry names field and rule.
std::vector<Violation> validate_case(const BenchmarkCase& benchmark_case);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);

struct DatasetStats {
    std::size_t case_count = 0;
    std::size_t insight_count = 0;
    std::map<std::string, std::size_t> by_type;
    std::map<int, std::size_t> by_difficulty;
    double mean_question_tokens = 0.0;
    double mean_insight_tokens = 0.0;
};

DatasetStats dataset_stats(const DatasetManifest& manifest);

} // namespace insight::dataset
