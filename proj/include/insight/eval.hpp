#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "insight/agent.hpp"
#include "insight/dataset.hpp"
#include "insight/gateway.hpp"
#include "insight/prompts.hpp"

namespace insight::eval {

// Pairwise similarity scores, rows = ground truth, columns = generated.
struct ScoreMatrix {
    std::string scorer_name;
    std::size_t gt_count = 0;
    std::size_t gen_count = 0;
    std::vector<double> scores; // row-major, entries in [0,1]

    double at(std::size_t row, std::size_t col) const { return scores[row * gen_count + col]; }
    double& at(std::size_t row, std::size_t col) { return scores[row * gen_count + col]; }

    nlohmann::json to_json() const;
    static ScoreMatrix from_json(const nlohmann::json& doc);
};

// Mean over rows of the row maxima.
double insight_recall(const ScoreMatrix& matrix);

// Mean over columns of the column maxima.
double insight_precision(const ScoreMatrix& matrix);

// Harmonic mean; 0 when recall + precision == 0.
double insight_f1(double recall, double precision);

struct CaseScores {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

struct CaseEval {
    std::string case_id;
    int difficulty = 0;
    std::map<std::string, CaseScores> per_scorer;
};

ScoreMatrix rouge1_matrix(const std::vector<dataset::GroundTruthInsight>& gt,
                          const std::vector<agent::InsightRecord>& gen);

// G-Eval matrix: each cell is the mean of the two judges' 1-10 scores / 10.
class JudgeScorer {
public:
    JudgeScorer(gateway::Gateway& gw, const prompts::PromptLibrary& library,
                std::vector<std::string> judge_ids);

    ScoreMatrix score(const std::vector<dataset::GroundTruthInsight>& gt,
                      const std::vector<agent::InsightRecord>& gen) const;

private:
    gateway::Gateway& gateway_;
    const prompts::PromptLibrary& prompts_;
    std::vector<std::string> judge_ids_; // exactly 2
};

// ── Novelty (Original / Innovation) ─────────────────────────────

struct InsightVerdict {
    std::string insight_text;
    double raw_geval = 0.0; // best-matching precision score on the 1-10 scale
    bool correct = false;   // raw_geval > 5
    std::array<int, 3> votes{0, 0, 0};
    bool voted = false;
    bool accepted = false; // >= 2 of 3 judges accepted
};

struct NoveltyReport {
    long correct_count = 0;   // M
    long incorrect_count = 0; // N
    long accepted_novel = 0;
    double original = 0.0;
    double innovation = 0.0;
    std::vector<InsightVerdict> verdicts;

    nlohmann::json to_json() const;
};

// The two scores from the raw counts: original = M/(M+N),
// innovation = (M + accepted)/(M+N).
std::pair<double, double> novelty_scores(long correct, long incorrect, long accepted);

// Thrown when a judge fails mid-novelty; carries whatever was decided.
class NoveltyAborted : public Error {
public:
    NoveltyAborted(const std::string& message, NoveltyReport partial)
        : Error(message), partial_(std::move(partial)) {}
    const NoveltyReport& partial() const { return partial_; }

private:
    NoveltyReport partial_;
};

struct NoveltyInputs {
    std::string goal;
    std::string image_png;
    std::vector<std::string> known_insights; // ground-truth insight texts
};

// Classifies each generated insight as correct (column max of the geval
// matrix > 5 raw) or incorrect; sends incorrect ones to 3 judges for a
// binary novelty vote.
NoveltyReport novelty(const ScoreMatrix& geval_matrix,
                      const std::vector<std::string>& generated_texts, const NoveltyInputs& inputs,
                      gateway::Gateway& gw, const prompts::PromptLibrary& library,
                      const std::vector<std::string>& judge_ids);

NoveltyReport pool_novelty(const std::vector<NoveltyReport>& reports);

// ── Dataset quality assessment ──────────────────────────────────

struct QualityVerdict {
    bool correctness = false;
    bool rationality = false;
    bool coherence = false;
};

QualityVerdict quality_assess(const dataset::BenchmarkCase& benchmark_case,
                              const std::string& judge_id, gateway::Gateway& gw,
                              const prompts::PromptLibrary& library);

struct QualityRates {
    double correctness = 0.0;
    double rationality = 0.0;
    double coherence = 0.0;
    std::size_t case_count = 0;
};

QualityRates quality_batch(const dataset::DatasetManifest& manifest, const std::string& judge_id,
                           gateway::Gateway& gw, const prompts::PromptLibrary& library);

// ── Aggregation over a run ──────────────────────────────────────

struct Aggregate {
    CaseScores overall;
    std::map<int, CaseScores> by_difficulty;
    std::map<int, std::size_t> difficulty_counts;
};

Aggregate aggregate_scorer(const std::vector<CaseEval>& evals, const std::string& scorer);

// ── Eval driver (matrix caching + eval JSON assembly) ───────────

struct EvalOptions {
    std::vector<std::string> scorers; // subset of {"rouge1", "geval"}
    bool with_novelty = false;
    std::filesystem::path out_dir; // matrix cache + outputs live beneath
    std::string created_at;        // timestamp field for the output docs
};

struct EvalOutput {
    std::map<std::string, nlohmann::json> eval_docs; // by scorer
    std::vector<std::string> warnings;
    std::optional<NoveltyReport> novelty;
};

class EvalRunner {
public:
    EvalRunner(const dataset::DatasetManifest& manifest, gateway::Gateway* gw,
               const prompts::PromptLibrary* library, std::vector<std::string> geval_judges,
               std::vector<std::string> novelty_judges);

    EvalOutput evaluate(const agent::Predictions& predictions, const EvalOptions& options) const;

private:
    ScoreMatrix matrix_for(const dataset::BenchmarkCase& benchmark_case,
                           const std::vector<agent::InsightRecord>& gen, const std::string& scorer,
                           const std::filesystem::path& cache_path) const;

    const dataset::DatasetManifest& manifest_;
    gateway::Gateway* gateway_;
    const prompts::PromptLibrary* prompts_;
    std::vector<std::string> geval_judges_;
    std::vector<std::string> novelty_judges_;
};

} // namespace insight::eval
