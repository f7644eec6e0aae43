#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "insight/dataset.hpp"
#include "insight/gateway.hpp"
#include "insight/prompts.hpp"

namespace insight::agent {

struct ImageSummary {
    std::string features;
    std::vector<std::string> keywords; // deduplicated, non-empty
};

struct RootQuestion {
    int index = 1; // 1-based, unique within a run
    std::string text;
};

struct ImageEvidence {
    int question_index = 0;
    std::string findings;
};

enum class Origin { root, followup };

std::string origin_name(Origin origin);
Origin origin_from_name(std::string_view name);

struct InsightRecord {
    std::string question;
    std::string answer;
    std::string insight_text;
    Origin origin = Origin::root;
    int depth = 0;             // 0 iff origin == root
    int parent_root_index = 1; // which root chain this record belongs to
};

struct FollowupCandidate {
    std::string text;
    int score = 0; // 1-10 once scored
};

struct AgentConfig {
    int root_question_count = 3; // m
    int candidate_count = 3;     // n
    int depth = 3;               // p follow-up rounds per root
    std::string backbone;        // endpoint for reasoning calls
    std::string analysis;        // endpoint for the image-analysis tool
    double temperature = 0.0;
    int max_tokens = 1024;
};

struct TraceEvent {
    int seq = 0;
    std::string purpose;
    std::string request_hash;
    std::string model_id;
    long duration_ms = 0;
    bool from_cache = false;
};

struct PipelineTrace {
    std::string case_id;
    std::vector<TraceEvent> events;
    std::vector<std::pair<int, std::string>> notes; // (seq, text)

    ImageSummary summary;
    std::vector<gateway::RetrievedDoc> docs;
    std::vector<RootQuestion> root_questions;
    std::vector<std::vector<FollowupCandidate>> candidate_sets; // scored
    std::vector<std::string> selections;

    // One line per event, interleaved with notes by sequence number.
    std::string to_jsonl() const;
};

// What the pipeline is allowed to see: image + goal, never ground truth.
struct CaseInput {
    std::string case_id;
    std::filesystem::path image_path;
    std::string goal;

    static CaseInput from(const dataset::BenchmarkCase& benchmark_case);
};

class Pipeline {
public:
    Pipeline(gateway::Gateway& gw, const prompts::PromptLibrary& library, AgentConfig config);

    // Stage 1 + iterated stages 2/3; returns exactly m * (p + 1) records.
    // `trace` accumulates as the run progresses, so a mid-case failure
    // leaves the partial trace behind for the caller.
    std::vector<InsightRecord> run(const CaseInput& input, PipelineTrace& trace) const;
    std::pair<std::vector<InsightRecord>, PipelineTrace> run(const CaseInput& input) const;

    // Single-call baseline: one prompt, a JSON list of insights.
    std::vector<InsightRecord> run_direct(const CaseInput& input, PipelineTrace& trace) const;
    std::pair<std::vector<InsightRecord>, PipelineTrace> run_direct(const CaseInput& input) const;

    ImageSummary summarize_image(const std::string& png_bytes, const std::string& goal,
                                 PipelineTrace& trace) const;
    std::vector<RootQuestion> generate_root_questions(const std::string& png_bytes,
                                                      const std::string& goal,
                                                      const ImageSummary& summary,
                                                      const std::vector<gateway::RetrievedDoc>& docs,
                                                      int count, PipelineTrace& trace) const;
    ImageEvidence analyze_image(const std::string& png_bytes, const std::string& question,
                                int question_index, PipelineTrace& trace) const;
    InsightRecord answer_and_insight(const std::string& question, const std::string& png_bytes,
                                     const ImageEvidence& evidence, Origin origin, int depth,
                                     int parent_root_index, PipelineTrace& trace) const;
    std::vector<FollowupCandidate> generate_followup_candidates(
        const std::string& png_bytes, const std::string& goal, const std::string& prior_question,
        const std::string& prior_answer, const ImageSummary& summary,
        const std::vector<gateway::RetrievedDoc>& docs, int count, PipelineTrace& trace) const;

    struct SelectionContext {
        std::string goal;
        std::string root_question;
        std::string latest_answer;
    };

    // Scores every candidate 1-10 and returns the argmax (ties -> lowest
    // index). Scores are written back into `candidates`.
    FollowupCandidate select_followup(std::vector<FollowupCandidate>& candidates,
                                      const SelectionContext& context, PipelineTrace& trace) const;

    const AgentConfig& config() const { return config_; }

private:
    gateway::GatewayResponse complete_traced(const gateway::GatewayRequest& request,
                                             const std::string& purpose,
                                             PipelineTrace& trace) const;

    // json_object call with one re-ask on a contract violation.
    nlohmann::json structured_call(
        const std::string& endpoint, const std::string& purpose,
        std::vector<gateway::Message> messages,
        const std::function<std::optional<std::pair<std::string, std::string>>(
            const nlohmann::json&)>& check,
        PipelineTrace& trace) const;

    gateway::Gateway& gateway_;
    const prompts::PromptLibrary& prompts_;
    AgentConfig config_;
};

// Text block handed to prompt templates: "1. <title> - <snippet> (<url>)".
std::string render_docs(const std::vector<gateway::RetrievedDoc>& docs);

// ── Predictions file (consumed by the eval harness) ─────────────

struct PredictionCase {
    std::string case_id;
    std::vector<InsightRecord> insights;
};

struct Predictions {
    std::string run_id;
    nlohmann::json config;
    std::string created_at;
    std::vector<PredictionCase> cases;

    nlohmann::json to_json() const;
    static Predictions from_json(const nlohmann::json& doc);
    static Predictions load(const std::filesystem::path& path);
};

nlohmann::json record_to_json(const InsightRecord& record);
InsightRecord record_from_json(const nlohmann::json& doc);

} // namespace insight::agent
