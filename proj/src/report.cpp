#include "insight/report.hpp"

#include <iomanip>
#include <set>
#include <sstream>

#include "insight/error.hpp"
#include "insight/util.hpp"

namespace insight::report {

Comparison build_comparison(const std::vector<nlohmann::json>& eval_docs) {
    if (eval_docs.empty()) throw Error("report requires at least one eval document");

    Comparison comparison;
    std::map<std::string, std::size_t> row_index;
    std::set<std::pair<std::string, std::string>> seen;

    for (const auto& doc : eval_docs) {
        if (!doc.is_object() || !doc.contains("run_id") || !doc.contains("scorer") ||
            !doc.contains("aggregate")) {
            throw Error("eval document is missing run_id/scorer/aggregate");
        }
        const std::string run_id = doc["run_id"].get<std::string>();
        const std::string scorer = doc["scorer"].get<std::string>();
        if (!seen.insert({run_id, scorer}).second) {
            throw Error("duplicate run_id '" + run_id + "' for scorer '" + scorer + "'");
        }

        auto it = row_index.find(run_id);
        if (it == row_index.end()) {
            row_index[run_id] = comparison.rows.size();
            comparison.rows.push_back({run_id, {}, std::nullopt});
            it = row_index.find(run_id);
        }
        RunRow& row = comparison.rows[it->second];

        const auto& aggregate = doc["aggregate"];
        row.per_scorer[scorer] = {aggregate.value("recall", 0.0), aggregate.value("precision", 0.0),
                                  aggregate.value("f1", 0.0)};
        if (doc.contains("novelty") && doc["novelty"].is_object()) {
            row.novelty = {doc["novelty"].value("original", 0.0),
                           doc["novelty"].value("innovation", 0.0)};
        }
    }
    return comparison;
}

std::string Comparison::render_text() const {
    std::set<std::string> scorers;
    bool any_novelty = false;
    for (const auto& row : rows) {
        for (const auto& [scorer, scores] : row.per_scorer) scorers.insert(scorer);
        any_novelty = any_novelty || row.novelty.has_value();
    }

    std::size_t id_width = 8;
    for (const auto& row : rows) id_width = std::max(id_width, row.run_id.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(id_width) + 2) << "run";
    for (const auto& scorer : scorers) {
        out << std::setw(27) << (scorer + " (R / P / F1)");
    }
    if (any_novelty) out << "novelty (Orig / Innov)";
    out << '\n';
    out << std::string(id_width + 2 + scorers.size() * 27 + (any_novelty ? 22 : 0), '-') << '\n';

    for (const auto& row : rows) {
        out << std::left << std::setw(static_cast<int>(id_width) + 2) << row.run_id;
        for (const auto& scorer : scorers) {
            const auto it = row.per_scorer.find(scorer);
            if (it == row.per_scorer.end()) {
                out << std::setw(27) << "-";
            } else {
                const auto& s = it->second;
                out << std::setw(27)
                    << (util::format_fixed(s.recall, 3) + " / " +
                        util::format_fixed(s.precision, 3) + " / " + util::format_fixed(s.f1, 3));
            }
        }
        if (any_novelty) {
            if (row.novelty) {
                out << util::format_fixed(row.novelty->first, 3) + " / " +
                           util::format_fixed(row.novelty->second, 3);
            } else {
                out << "-";
            }
        }
        out << '\n';
    }
    return out.str();
}

nlohmann::json Comparison::to_json() const {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json scorers = nlohmann::json::object();
        for (const auto& [scorer, scores] : row.per_scorer) {
            scorers[scorer] = {{"recall", scores.recall},
                               {"precision", scores.precision},
                               {"f1", scores.f1}};
        }
        nlohmann::json entry = {{"run_id", row.run_id}, {"scorers", std::move(scorers)}};
        if (row.novelty) {
            entry["novelty"] = {{"original", row.novelty->first},
                                {"innovation", row.novelty->second}};
        }
        runs.push_back(std::move(entry));
    }
    return {{"runs", std::move(runs)}};
}

} // namespace insight::report
