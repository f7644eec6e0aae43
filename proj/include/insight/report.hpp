#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "insight/eval.hpp"

namespace insight::report {

struct RunRow {
    std::string run_id;
    std::map<std::string, eval::CaseScores> per_scorer; // aggregate values
    std::optional<std::pair<double, double>> novelty;   // original, innovation
};

struct Comparison {
    std::vector<RunRow> rows;

    // Fixed 3-decimal table; values come straight from the eval JSONs.
    std::string render_text() const;
    nlohmann::json to_json() const;
};

// Merges eval documents by run_id (one row per run, columns per scorer).
// Throws Error("duplicate run_id ...") when the same (run_id, scorer) pair
// appears twice.
Comparison build_comparison(const std::vector<nlohmann::json>& eval_docs);

} // namespace insight::report
