#include "insight/eval.hpp"

#include <algorithm>
#include <sstream>

#include "insight/text_metrics.hpp"
#include "insight/util.hpp"

namespace insight::eval {

namespace {

using gateway::ImagePart;
using gateway::Message;
using gateway::Role;
using gateway::TextPart;

void require_non_empty(std::size_t gt_count, std::size_t gen_count) {
    if (gt_count == 0 || gen_count == 0) throw Error("empty insight set");
}

std::string numbered_list(const std::vector<std::string>& items) {
    if (items.empty()) return "(none)";
    std::ostringstream out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out << (i + 1) << ". " << items[i] << '\n';
    }
    return out.str();
}

// Binary novelty vote: CoT response ending in YES/NO; one re-ask.
int binary_vote(gateway::Gateway& gw, const std::string& judge_id, const std::string& rubric,
                const std::string& image_png) {
    gateway::GatewayRequest request;
    request.model_id = judge_id;
    request.max_tokens = 1024;
    request.messages = {{Role::user, {TextPart{rubric}, ImagePart{image_png}}}};

    auto response = gw.complete(request);
    auto verdict = gateway::parse_yes_no(response.text);
    if (!verdict) {
        request.messages.push_back({Role::assistant, {TextPart{response.text}}});
        request.messages.push_back(
            {Role::user, {TextPart{"Answer strictly YES or NO on a single line."}}});
        response = gw.complete(request);
        verdict = gateway::parse_yes_no(response.text);
    }
    if (!verdict) {
        throw Error("judge format violation: no YES/NO verdict from judge '" + judge_id + "'");
    }
    return *verdict ? 1 : 0;
}

} // namespace

nlohmann::json ScoreMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < gt_count; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < gen_count; ++c) row.push_back(at(r, c));
        rows.push_back(std::move(row));
    }
    return {{"scorer", scorer_name},
            {"gt_count", gt_count},
            {"gen_count", gen_count},
            {"scores", std::move(rows)}};
}

ScoreMatrix ScoreMatrix::from_json(const nlohmann::json& doc) {
    ScoreMatrix matrix;
    matrix.scorer_name = doc.at("scorer").get<std::string>();
    matrix.gt_count = doc.at("gt_count").get<std::size_t>();
    matrix.gen_count = doc.at("gen_count").get<std::size_t>();
    matrix.scores.reserve(matrix.gt_count * matrix.gen_count);
    for (const auto& row : doc.at("scores")) {
        for (const auto& value : row) matrix.scores.push_back(value.get<double>());
    }
    if (matrix.scores.size() != matrix.gt_count * matrix.gen_count) {
        throw Error("score matrix dimensions do not match its entries");
    }
    for (const double score : matrix.scores) {
        if (score < 0.0 || score > 1.0) throw Error("score matrix entry outside [0,1]");
    }
    return matrix;
}

double insight_recall(const ScoreMatrix& matrix) {
    require_non_empty(matrix.gt_count, matrix.gen_count);
    double sum = 0.0;
    for (std::size_t r = 0; r < matrix.gt_count; ++r) {
        double best = 0.0;
        for (std::size_t c = 0; c < matrix.gen_count; ++c) best = std::max(best, matrix.at(r, c));
        sum += best;
    }
    return sum / static_cast<double>(matrix.gt_count);
}

double insight_precision(const ScoreMatrix& matrix) {
    require_non_empty(matrix.gt_count, matrix.gen_count);
    double sum = 0.0;
    for (std::size_t c = 0; c < matrix.gen_count; ++c) {
        double best = 0.0;
        for (std::size_t r = 0; r < matrix.gt_count; ++r) best = std::max(best, matrix.at(r, c));
        sum += best;
    }
    return sum / static_cast<double>(matrix.gen_count);
}

double insight_f1(double recall, double precision) {
    if (recall + precision == 0.0) return 0.0;
    return 2.0 * recall * precision / (recall + precision);
}

ScoreMatrix rouge1_matrix(const std::vector<dataset::GroundTruthInsight>& gt,
                          const std::vector<agent::InsightRecord>& gen) {
    require_non_empty(gt.size(), gen.size());
    ScoreMatrix matrix;
    matrix.scorer_name = "rouge1";
    matrix.gt_count = gt.size();
    matrix.gen_count = gen.size();
    matrix.scores.resize(gt.size() * gen.size());
    for (std::size_t r = 0; r < gt.size(); ++r) {
        for (std::size_t c = 0; c < gen.size(); ++c) {
            matrix.at(r, c) = metrics::rouge1(gt[r].insight_text, gen[c].insight_text);
        }
    }
    return matrix;
}

JudgeScorer::JudgeScorer(gateway::Gateway& gw, const prompts::PromptLibrary& library,
                         std::vector<std::string> judge_ids)
    : gateway_(gw), prompts_(library), judge_ids_(std::move(judge_ids)) {
    if (judge_ids_.size() != 2) {
        throw ConfigError("geval requires exactly 2 judges, got " +
                          std::to_string(judge_ids_.size()));
    }
}

ScoreMatrix JudgeScorer::score(const std::vector<dataset::GroundTruthInsight>& gt,
                               const std::vector<agent::InsightRecord>& gen) const {
    require_non_empty(gt.size(), gen.size());
    ScoreMatrix matrix;
    matrix.scorer_name = "geval";
    matrix.gt_count = gt.size();
    matrix.gen_count = gen.size();
    matrix.scores.resize(gt.size() * gen.size());
    for (std::size_t r = 0; r < gt.size(); ++r) {
        for (std::size_t c = 0; c < gen.size(); ++c) {
            const std::string rubric =
                prompts_.render("geval_similarity", {{"reference", gt[r].insight_text},
                                                     {"candidate", gen[c].insight_text}});
            long total = 0;
            for (const auto& judge : judge_ids_) {
                try {
                    total += gateway_.judge_score(judge, rubric);
                } catch (const Error& e) {
                    throw Error("geval cell (" + std::to_string(r) + "," + std::to_string(c) +
                                "): " + e.what());
                }
            }
            matrix.at(r, c) =
                static_cast<double>(total) / static_cast<double>(judge_ids_.size()) / 10.0;
        }
    }
    return matrix;
}

// ── Novelty ─────────────────────────────────────────────────────

std::pair<double, double> novelty_scores(long correct, long incorrect, long accepted) {
    const long total = correct + incorrect;
    if (total <= 0) throw Error("empty insight set");
    const double original = static_cast<double>(correct) / static_cast<double>(total);
    const double innovation =
        static_cast<double>(correct + accepted) / static_cast<double>(total);
    return {original, innovation};
}

nlohmann::json NoveltyReport::to_json() const {
    nlohmann::json verdict_array = nlohmann::json::array();
    for (const auto& verdict : verdicts) {
        nlohmann::json entry = {
            {"insight", verdict.insight_text},
            {"raw_geval", verdict.raw_geval},
            {"correct", verdict.correct},
        };
        if (verdict.voted) {
            entry["votes"] = verdict.votes;
            entry["accepted"] = verdict.accepted;
        }
        verdict_array.push_back(std::move(entry));
    }
    return {{"correct_count", correct_count},
            {"incorrect_count", incorrect_count},
            {"accepted_novel", accepted_novel},
            {"original", original},
            {"innovation", innovation},
            {"verdicts", std::move(verdict_array)}};
}

NoveltyReport novelty(const ScoreMatrix& geval_matrix,
                      const std::vector<std::string>& generated_texts, const NoveltyInputs& inputs,
                      gateway::Gateway& gw, const prompts::PromptLibrary& library,
                      const std::vector<std::string>& judge_ids) {
    if (geval_matrix.scorer_name != "geval") {
        throw Error("novelty requires a geval score matrix, got '" + geval_matrix.scorer_name +
                    "'");
    }
    if (judge_ids.size() != 3) {
        throw ConfigError("novelty requires exactly 3 judges, got " +
                          std::to_string(judge_ids.size()));
    }
    if (generated_texts.size() != geval_matrix.gen_count) {
        throw Error("generated insight count does not match the geval matrix");
    }
    if (generated_texts.empty()) throw Error("empty insight set");

    NoveltyReport report;
    for (std::size_t c = 0; c < geval_matrix.gen_count; ++c) {
        double best = 0.0;
        for (std::size_t r = 0; r < geval_matrix.gt_count; ++r) {
            best = std::max(best, geval_matrix.at(r, c));
        }
        InsightVerdict verdict;
        verdict.insight_text = generated_texts[c];
        verdict.raw_geval = best * 10.0;
        verdict.correct = verdict.raw_geval > 5.0; // strictly greater
        report.verdicts.push_back(std::move(verdict));
    }

    const std::string known = numbered_list(inputs.known_insights);
    for (auto& verdict : report.verdicts) {
        if (verdict.correct) {
            ++report.correct_count;
            continue;
        }
        ++report.incorrect_count;
        const std::string rubric = library.render("novelty_judge", {
                                                                       {"goal", inputs.goal},
                                                                       {"insight", verdict.insight_text},
                                                                       {"known_insights", known},
                                                                   });
        int accepted_votes = 0;
        for (std::size_t j = 0; j < judge_ids.size(); ++j) {
            try {
                verdict.votes[j] = binary_vote(gw, judge_ids[j], rubric, inputs.image_png);
            } catch (const Error& e) {
                throw NoveltyAborted(e.what(), report);
            }
            accepted_votes += verdict.votes[j];
        }
        verdict.voted = true;
        verdict.accepted = accepted_votes >= 2;
        if (verdict.accepted) ++report.accepted_novel;
    }

    const auto [original, innovation] =
        novelty_scores(report.correct_count, report.incorrect_count, report.accepted_novel);
    report.original = original;
    report.innovation = innovation;
    return report;
}

NoveltyReport pool_novelty(const std::vector<NoveltyReport>& reports) {
    NoveltyReport pooled;
    for (const auto& report : reports) {
        pooled.correct_count += report.correct_count;
        pooled.incorrect_count += report.incorrect_count;
        pooled.accepted_novel += report.accepted_novel;
        pooled.verdicts.insert(pooled.verdicts.end(), report.verdicts.begin(),
                               report.verdicts.end());
    }
    const auto [original, innovation] =
        novelty_scores(pooled.correct_count, pooled.incorrect_count, pooled.accepted_novel);
    pooled.original = original;
    pooled.innovation = innovation;
    return pooled;
}

// ── Quality assessment ──────────────────────────────────────────

QualityVerdict quality_assess(const dataset::BenchmarkCase& benchmark_case,
                              const std::string& judge_id, gateway::Gateway& gw,
                              const prompts::PromptLibrary& library) {
    std::vector<std::string> questions;
    std::vector<std::string> insights;
    for (const auto& gt : benchmark_case.ground_truth) {
        questions.push_back(gt.question);
        insights.push_back(gt.insight_text);
    }
    const std::string rubric =
        library.render("quality_assess", {{"goal", benchmark_case.goal},
                                          {"questions", numbered_list(questions)},
                                          {"insights", numbered_list(insights)}});

    gateway::GatewayRequest request;
    request.model_id = judge_id;
    request.max_tokens = 256;
    request.response_format = gateway::ResponseFormat::json_object;
    request.messages = {
        {Role::user, {TextPart{rubric}, ImagePart{util::read_file(benchmark_case.image_ref)}}}};

    const auto parse = [](const std::string& text) -> std::optional<QualityVerdict> {
        try {
            const auto doc = util::parse_json_lenient(text);
            if (!doc.is_object() || !doc.value("correctness", nlohmann::json()).is_boolean() ||
                !doc.value("rationality", nlohmann::json()).is_boolean() ||
                !doc.value("coherence", nlohmann::json()).is_boolean()) {
                return std::nullopt;
            }
            return QualityVerdict{doc["correctness"].get<bool>(), doc["rationality"].get<bool>(),
                                  doc["coherence"].get<bool>()};
        } catch (const Error&) {
            return std::nullopt;
        }
    };

    auto response = gw.complete(request);
    if (const auto verdict = parse(response.text)) return *verdict;

    request.messages.push_back({Role::assistant, {TextPart{response.text}}});
    request.messages.push_back(
        {Role::user,
         {TextPart{"Return only a JSON object with boolean fields "
                   "'correctness', 'rationality' and 'coherence'."}}});
    response = gw.complete(request);
    if (const auto verdict = parse(response.text)) return *verdict;

    throw Error("judge format violation: no quality verdict from judge '" + judge_id + "'");
}

QualityRates quality_batch(const dataset::DatasetManifest& manifest, const std::string& judge_id,
                           gateway::Gateway& gw, const prompts::PromptLibrary& library) {
    QualityRates rates;
    for (const auto& benchmark_case : manifest.cases) {
        const auto verdict = quality_assess(benchmark_case, judge_id, gw, library);
        rates.correctness += verdict.correctness ? 1.0 : 0.0;
        rates.rationality += verdict.rationality ? 1.0 : 0.0;
        rates.coherence += verdict.coherence ? 1.0 : 0.0;
        ++rates.case_count;
    }
    if (rates.case_count > 0) {
        rates.correctness /= static_cast<double>(rates.case_count);
        rates.rationality /= static_cast<double>(rates.case_count);
        rates.coherence /= static_cast<double>(rates.case_count);
    }
    return rates;
}

// ── Aggregation ─────────────────────────────────────────────────

Aggregate aggregate_scorer(const std::vector<CaseEval>& evals, const std::string& scorer) {
    if (evals.empty()) throw Error("aggregate requires at least one case");
    Aggregate aggregate;
    std::map<int, CaseScores> difficulty_sums;
    for (const auto& eval : evals) {
        const auto it = eval.per_scorer.find(scorer);
        if (it == eval.per_scorer.end()) continue;
        aggregate.overall.recall += it->second.recall;
        aggregate.overall.precision += it->second.precision;
        aggregate.overall.f1 += it->second.f1;
        auto& bucket = difficulty_sums[eval.difficulty];
        bucket.recall += it->second.recall;
        bucket.precision += it->second.precision;
        bucket.f1 += it->second.f1;
        ++aggregate.difficulty_counts[eval.difficulty];
    }
    const auto n = static_cast<double>(evals.size());
    aggregate.overall.recall /= n;
    aggregate.overall.precision /= n;
    aggregate.overall.f1 /= n;
    for (auto& [difficulty, sums] : difficulty_sums) {
        const auto count = static_cast<double>(aggregate.difficulty_counts[difficulty]);
        aggregate.by_difficulty[difficulty] = {sums.recall / count, sums.precision / count,
                                               sums.f1 / count};
    }
    return aggregate;
}

// ── EvalRunner ──────────────────────────────────────────────────

EvalRunner::EvalRunner(const dataset::DatasetManifest& manifest, gateway::Gateway* gw,
                       const prompts::PromptLibrary* library,
                       std::vector<std::string> geval_judges,
                       std::vector<std::string> novelty_judges)
    : manifest_(manifest),
      gateway_(gw),
      prompts_(library),
      geval_judges_(std::move(geval_judges)),
      novelty_judges_(std::move(novelty_judges)) {}

ScoreMatrix EvalRunner::matrix_for(const dataset::BenchmarkCase& benchmark_case,
                                   const std::vector<agent::InsightRecord>& gen,
                                   const std::string& scorer,
                                   const std::filesystem::path& cache_path) const {
    if (std::filesystem::exists(cache_path)) {
        const auto cached = ScoreMatrix::from_json(
            nlohmann::json::parse(util::read_file(cache_path)));
        if (cached.gt_count == benchmark_case.ground_truth.size() &&
            cached.gen_count == gen.size()) {
            return cached;
        }
    }
    ScoreMatrix matrix;
    if (scorer == "rouge1") {
        matrix = rouge1_matrix(benchmark_case.ground_truth, gen);
    } else if (scorer == "geval") {
        if (gateway_ == nullptr || prompts_ == nullptr) {
            throw ConfigError("geval scoring requires a configured gateway and prompt library");
        }
        matrix = JudgeScorer(*gateway_, *prompts_, geval_judges_).score(benchmark_case.ground_truth,
                                                                        gen);
    } else {
        throw ConfigError("unknown scorer '" + scorer + "' (expected rouge1 or geval)");
    }
    util::write_file_atomic(cache_path, matrix.to_json().dump(2));
    return matrix;
}

EvalOutput EvalRunner::evaluate(const agent::Predictions& predictions,
                                const EvalOptions& options) const {
    std::map<std::string, const dataset::BenchmarkCase*> case_index;
    for (const auto& benchmark_case : manifest_.cases) {
        case_index[benchmark_case.case_id] = &benchmark_case;
    }
    for (const auto& prediction : predictions.cases) {
        if (case_index.count(prediction.case_id) == 0) {
            throw Error("unknown case_id in predictions: " + prediction.case_id);
        }
    }

    const std::filesystem::path matrix_dir = options.out_dir / "matrices" / predictions.run_id;
    std::filesystem::create_directories(matrix_dir);

    EvalOutput output;
    std::vector<CaseEval> evals;
    std::map<std::string, ScoreMatrix> geval_matrices; // reused by novelty

    for (const auto& prediction : predictions.cases) {
        const auto& benchmark_case = *case_index.at(prediction.case_id);
        CaseEval eval;
        eval.case_id = prediction.case_id;
        eval.difficulty = benchmark_case.difficulty;

        for (const auto& scorer : options.scorers) {
            if (prediction.insights.empty()) {
                // A failed case scores zero instead of aborting the batch.
                output.warnings.push_back("case '" + prediction.case_id +
                                          "' has no generated insights; scoring 0");
                eval.per_scorer[scorer] = {0.0, 0.0, 0.0};
                continue;
            }
            const auto cache_path =
                matrix_dir / (prediction.case_id + "." + scorer + ".json");
            const auto matrix =
                matrix_for(benchmark_case, prediction.insights, scorer, cache_path);
            CaseScores scores;
            scores.recall = insight_recall(matrix);
            scores.precision = insight_precision(matrix);
            scores.f1 = insight_f1(scores.recall, scores.precision);
            eval.per_scorer[scorer] = scores;
            if (scorer == "geval") geval_matrices.emplace(prediction.case_id, matrix);
        }
        evals.push_back(std::move(eval));
    }

    std::optional<NoveltyReport> pooled_novelty;
    if (options.with_novelty) {
        if (gateway_ == nullptr || prompts_ == nullptr) {
            throw ConfigError("novelty requires a configured gateway and prompt library");
        }
        if (novelty_judges_.size() != 3) {
            throw ConfigError("novelty requires exactly 3 judges, got " +
                              std::to_string(novelty_judges_.size()));
        }
        std::vector<NoveltyReport> reports;
        for (const auto& prediction : predictions.cases) {
            if (prediction.insights.empty()) continue;
            const auto matrix_it = geval_matrices.find(prediction.case_id);
            if (matrix_it == geval_matrices.end()) {
                throw ConfigError("novelty needs geval in --scorer so precision scores exist");
            }
            const auto& benchmark_case = *case_index.at(prediction.case_id);
            NoveltyInputs inputs;
            inputs.goal = benchmark_case.goal;
            inputs.image_png = util::read_file(benchmark_case.image_ref);
            for (const auto& gt : benchmark_case.ground_truth) {
                inputs.known_insights.push_back(gt.insight_text);
            }
            std::vector<std::string> generated;
            for (const auto& record : prediction.insights) {
                generated.push_back(record.insight_text);
            }
            auto report = novelty(matrix_it->second, generated, inputs, *gateway_, *prompts_,
                                  novelty_judges_);
            util::write_file_atomic(matrix_dir / (prediction.case_id + ".novelty.json"),
                                    report.to_json().dump(2));
            reports.push_back(std::move(report));
        }
        if (!reports.empty()) pooled_novelty = pool_novelty(reports);
    }
    output.novelty = pooled_novelty;

    for (const auto& scorer : options.scorers) {
        const auto aggregate = aggregate_scorer(evals, scorer);
        nlohmann::json case_array = nlohmann::json::array();
        for (const auto& eval : evals) {
            const auto& scores = eval.per_scorer.at(scorer);
            case_array.push_back({{"case_id", eval.case_id},
                                  {"recall", scores.recall},
                                  {"precision", scores.precision},
                                  {"f1", scores.f1}});
        }
        nlohmann::json by_difficulty = nlohmann::json::object();
        for (const auto& [difficulty, scores] : aggregate.by_difficulty) {
            by_difficulty[std::to_string(difficulty)] = {
                {"recall", scores.recall},
                {"precision", scores.precision},
                {"f1", scores.f1},
                {"cases", aggregate.difficulty_counts.at(difficulty)}};
        }
        nlohmann::json doc = {
            {"run_id", predictions.run_id},
            {"scorer", scorer},
            {"cases", std::move(case_array)},
            {"aggregate",
             {{"recall", aggregate.overall.recall},
              {"precision", aggregate.overall.precision},
              {"f1", aggregate.overall.f1},
              {"by_difficulty", std::move(by_difficulty)}}},
        };
        if (!options.created_at.empty()) doc["created_at"] = options.created_at;
        if (scorer == "geval" && pooled_novelty) {
            doc["novelty"] = {{"original", pooled_novelty->original},
                              {"innovation", pooled_novelty->innovation}};
        }
        output.eval_docs[scorer] = std::move(doc);
    }
    return output;
}

} // namespace insight::eval
