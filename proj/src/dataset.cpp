#include "insight/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "insight/text_metrics.hpp"
#include "insight/util.hpp"

namespace insight::dataset {

namespace {

constexpr std::string_view kPngSignature = "\x89PNG\r\n\x1a\n";

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Pulls a typed field out of a case object, reporting case_id + field on any
// schema violation.
const nlohmann::json& require_field(const nlohmann::json& object, const std::string& field,
                                    const std::string& case_id) {
    const auto it = object.find(field);
    if (it == object.end()) {
        throw ValidationError("schema violation", {{case_id, field, "missing field"}});
    }
    return *it;
}

std::string require_string(const nlohmann::json& object, const std::string& field,
                           const std::string& case_id) {
    const auto& value = require_field(object, field, case_id);
    if (!value.is_string()) {
        throw ValidationError("schema violation", {{case_id, field, "expected a string"}});
    }
    return value.get<std::string>();
}

int require_int(const nlohmann::json& object, const std::string& field, const std::string& case_id) {
    const auto& value = require_field(object, field, case_id);
    if (!value.is_number_integer()) {
        throw ValidationError("schema violation", {{case_id, field, "expected an integer"}});
    }
    return value.get<int>();
}

bool has_png_signature(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char header[8] = {};
    in.read(header, sizeof(header));
    return in.gcount() == 8 && std::string_view(header, 8) == kPngSignature;
}

} // namespace

std::optional<std::string> canonical_insight_type(std::string_view raw) {
    const std::string needle = lowercase(raw);
    for (const auto canonical : kInsightTypes) {
        if (needle == lowercase(canonical)) return std::string(canonical);
    }
    return std::nullopt;
}

std::string Violation::str() const {
    return "case '" + case_id + "': field '" + field + "': " + message;
}

ValidationError::ValidationError(std::string summary, std::vector<Violation> violations)
    : Error([&] {
          std::ostringstream out;
          out << summary << " (" << violations.size() << " violation"
              << (violations.size() == 1 ? "" : "s") << ")";
          for (const auto& v : violations) out << "\n  " << v.str();
          return out.str();
      }()),
      violations_(std::move(violations)) {}

DatasetManifest load_dataset(const std::filesystem::path& root) {
    const std::filesystem::path manifest_path =
        std::filesystem::is_directory(root) ? root / "manifest.json" : root;
    if (!std::filesystem::exists(manifest_path)) {
        throw Error("missing manifest: " + manifest_path.string());
    }
    const std::filesystem::path base_dir = manifest_path.parent_path();

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(util::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("manifest is not valid JSON: " + manifest_path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("cases") || !doc["cases"].is_array()) {
        throw Error("manifest must be an object with a 'cases' array: " + manifest_path.string());
    }

    DatasetManifest manifest;
    manifest.version = doc.value("version", "");
    if (doc["cases"].empty()) throw Error("empty dataset: manifest contains no cases");

    for (const auto& case_doc : doc["cases"]) {
        if (!case_doc.is_object()) {
            throw ValidationError("schema violation", {{"?", "cases[]", "expected an object"}});
        }
        BenchmarkCase benchmark_case;
        benchmark_case.case_id = case_doc.value("case_id", "");
        const std::string id = benchmark_case.case_id.empty() ? "?" : benchmark_case.case_id;

        benchmark_case.case_id = require_string(case_doc, "case_id", id);
        benchmark_case.image_rel = require_string(case_doc, "image", id);
        benchmark_case.image_ref =
            (base_dir / std::filesystem::path(benchmark_case.image_rel)).lexically_normal();
        benchmark_case.goal = require_string(case_doc, "goal", id);
        benchmark_case.difficulty = require_int(case_doc, "difficulty", id);

        const auto& insights = require_field(case_doc, "insights", id);
        if (!insights.is_array()) {
            throw ValidationError("schema violation", {{id, "insights", "expected an array"}});
        }
        std::size_t index = 0;
        for (const auto& insight_doc : insights) {
            const std::string field_prefix = "insights[" + std::to_string(index) + "]";
            if (!insight_doc.is_object()) {
                throw ValidationError("schema violation", {{id, field_prefix, "expected an object"}});
            }
            GroundTruthInsight gt;
            gt.question = require_string(insight_doc, "question", id);
            gt.insight_text = require_string(insight_doc, "insight", id);
            gt.insight_type = require_string(insight_doc, "type", id);
            gt.evidence = insight_doc.contains("evidence")
                              ? require_string(insight_doc, "evidence", id)
                              : "";
            if (const auto canonical = canonical_insight_type(gt.insight_type)) {
                gt.insight_type = *canonical; // stored canonically capitalized
            }
            benchmark_case.ground_truth.push_back(std::move(gt));
            ++index;
        }
        manifest.cases.push_back(std::move(benchmark_case));
    }

    std::vector<Violation> violations;
    std::unordered_set<std::string> seen_ids;
    for (const auto& benchmark_case : manifest.cases) {
        if (!seen_ids.insert(benchmark_case.case_id).second) {
            violations.push_back({benchmark_case.case_id, "case_id", "duplicate case_id"});
        }
        const auto case_violations = validate_case(benchmark_case);
        violations.insert(violations.end(), case_violations.begin(), case_violations.end());
    }
    if (!violations.empty()) {
        throw ValidationError("dataset validation failed", std::move(violations));
    }
    return manifest;
}

std::vector<Violation> validate_case(const BenchmarkCase& benchmark_case) {
    std::vector<Violation> violations;
    const std::string& id = benchmark_case.case_id;

    if (benchmark_case.case_id.empty()) {
        violations.push_back({id, "case_id", "must be non-empty"});
    }
    if (benchmark_case.goal.empty()) {
        violations.push_back({id, "goal", "must be non-empty"});
    }
    if (benchmark_case.difficulty < 1 || benchmark_case.difficulty > 4) {
        violations.push_back({id, "difficulty", "must be in {1,2,3,4}"});
    }
    if (benchmark_case.ground_truth.empty()) {
        violations.push_back({id, "insights", "ground truth must be non-empty"});
    }
    if (!std::filesystem::exists(benchmark_case.image_ref)) {
        violations.push_back({id, "image", "file not found: " + benchmark_case.image_ref.string()});
    } else if (!has_png_signature(benchmark_case.image_ref)) {
        violations.push_back({id, "image", "not a PNG (bad signature)"});
    }

    std::size_t index = 0;
    for (const auto& gt : benchmark_case.ground_truth) {
        const std::string prefix = "insights[" + std::to_string(index) + "]";
        if (gt.question.empty()) {
            violations.push_back({id, prefix + ".question", "must be non-empty"});
        }
        if (gt.insight_text.empty()) {
            violations.push_back({id, prefix + ".insight", "must be non-empty"});
        }
        if (!canonical_insight_type(gt.insight_type)) {
            violations.push_back({id, prefix + ".type", "insight_type not in taxonomy"});
        }
        ++index;
    }
    return violations;
}

nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& benchmark_case : manifest.cases) {
        nlohmann::json insights = nlohmann::json::array();
        for (const auto& gt : benchmark_case.ground_truth) {
            insights.push_back({
                {"question", gt.question},
                {"insight", gt.insight_text},
                {"type", gt.insight_type},
                {"evidence", gt.evidence},
            });
        }
        cases.push_back({
            {"case_id", benchmark_case.case_id},
            {"image", benchmark_case.image_rel},
            {"goal", benchmark_case.goal},
            {"difficulty", benchmark_case.difficulty},
            {"insights", std::move(insights)},
        });
    }
    return {{"version", manifest.version}, {"cases", std::move(cases)}};
}

DatasetStats dataset_stats(const DatasetManifest& manifest) {
    DatasetStats stats;
    stats.case_count = manifest.cases.size();
    long question_tokens = 0;
    long insight_tokens = 0;
    for (const auto& benchmark_case : manifest.cases) {
        ++stats.by_difficulty[benchmark_case.difficulty];
        for (const auto& gt : benchmark_case.ground_truth) {
            ++stats.insight_count;
            ++stats.by_type[gt.insight_type];
            question_tokens += static_cast<long>(metrics::tokenize(gt.question).size());
            insight_tokens += static_cast<long>(metrics::tokenize(gt.insight_text).size());
        }
    }
    if (stats.insight_count > 0) {
        stats.mean_question_tokens =
            static_cast<double>(question_tokens) / static_cast<double>(stats.insight_count);
        stats.mean_insight_tokens =
            static_cast<double>(insight_tokens) / static_cast<double>(stats.insight_count);
    }
    return stats;
}

} // namespace insight::dataset
