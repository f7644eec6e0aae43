#include "insight/agent.hpp"

#include <chrono>
#include <set>
#include <sstream>

#include "insight/error.hpp"
#include "insight/util.hpp"

namespace insight::agent {

namespace {

using gateway::GatewayRequest;
using gateway::ImagePart;
using gateway::Message;
using gateway::ResponseFormat;
using gateway::Role;
using gateway::TextPart;

using Check =
    std::function<std::optional<std::pair<std::string, std::string>>(const nlohmann::json&)>;

constexpr const char* kMalformedOutput = "malformed model output";

std::optional<std::pair<std::string, std::string>> ok() { return std::nullopt; }

std::pair<std::string, std::string> problem(std::string description, std::string label) {
    return {std::move(description), std::move(label)};
}

std::vector<std::string> string_list(const nlohmann::json& value) {
    std::vector<std::string> out;
    if (!value.is_array()) return out;
    for (const auto& entry : value) {
        if (!entry.is_string()) return {};
        out.push_back(entry.get<std::string>());
    }
    return out;
}

} // namespace

std::string origin_name(Origin origin) { return origin == Origin::root ? "root" : "followup"; }

Origin origin_from_name(std::string_view name) {
    if (name == "root") return Origin::root;
    if (name == "followup") return Origin::followup;
    throw Error("unknown insight origin: " + std::string(name));
}

std::string PipelineTrace::to_jsonl() const {
    std::ostringstream out;
    std::size_t note_index = 0;
    const auto flush_notes = [&](int up_to_seq) {
        while (note_index < notes.size() && notes[note_index].first <= up_to_seq) {
            out << nlohmann::json{{"type", "note"},
                                  {"seq", notes[note_index].first},
                                  {"text", notes[note_index].second}}
                       .dump()
                << '\n';
            ++note_index;
        }
    };
    for (const auto& event : events) {
        flush_notes(event.seq - 1);
        out << nlohmann::json{{"type", "call"},
                              {"seq", event.seq},
                              {"purpose", event.purpose},
                              {"request_hash", event.request_hash},
                              {"model_id", event.model_id},
                              {"duration_ms", event.duration_ms},
                              {"from_cache", event.from_cache}}
                   .dump()
            << '\n';
    }
    flush_notes(std::numeric_limits<int>::max());
    return out.str();
}

CaseInput CaseInput::from(const dataset::BenchmarkCase& benchmark_case) {
    return {benchmark_case.case_id, benchmark_case.image_ref, benchmark_case.goal};
}

std::string render_docs(const std::vector<gateway::RetrievedDoc>& docs) {
    if (docs.empty()) return "(no reference material retrieved)";
    std::ostringstream out;
    for (const auto& doc : docs) {
        out << doc.rank << ". " << doc.title;
        if (!doc.snippet.empty()) out << " - " << doc.snippet;
        if (!doc.url.empty()) out << " (" << doc.url << ")";
        out << '\n';
    }
    return out.str();
}

Pipeline::Pipeline(gateway::Gateway& gw, const prompts::PromptLibrary& library, AgentConfig config)
    : gateway_(gw), prompts_(library), config_(std::move(config)) {}

gateway::GatewayResponse Pipeline::complete_traced(const GatewayRequest& request,
                                                   const std::string& purpose,
                                                   PipelineTrace& trace) const {
    const auto start = std::chrono::steady_clock::now();
    const auto response = gateway_.complete(request);
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    TraceEvent event;
    event.seq = static_cast<int>(trace.events.size() + trace.notes.size()) + 1;
    event.purpose = purpose;
    event.request_hash = gateway::canonical_hash(request);
    event.model_id = request.model_id;
    event.duration_ms = elapsed;
    event.from_cache = response.from_cache;
    trace.events.push_back(std::move(event));
    return response;
}

nlohmann::json Pipeline::structured_call(const std::string& endpoint, const std::string& purpose,
                                         std::vector<Message> messages, const Check& check,
                                         PipelineTrace& trace) const {
    GatewayRequest request;
    request.model_id = endpoint;
    request.temperature = config_.temperature;
    request.max_tokens = config_.max_tokens;
    request.response_format = ResponseFormat::json_object;
    request.messages = std::move(messages);

    std::string first_problem;
    std::string first_label;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto response = complete_traced(request, purpose, trace);
        std::optional<std::pair<std::string, std::string>> violation;
        nlohmann::json parsed;
        try {
            parsed = util::parse_json_lenient(response.text);
            violation = check(parsed);
        } catch (const Error&) {
            violation = problem("response was not valid JSON", kMalformedOutput);
        }
        if (!violation) return parsed;
        first_problem = violation->first;
        first_label = violation->second;
        if (attempt == 0) {
            request.messages.push_back({Role::assistant, {TextPart{response.text}}});
            request.messages.push_back(
                {Role::user,
                 {TextPart{"Format reminder: " + first_problem +
                           ". Return only the JSON object in the requested format."}}});
        }
    }
    throw Error(first_label + ": " + first_problem + " (" + purpose + ")");
}

ImageSummary Pipeline::summarize_image(const std::string& png_bytes, const std::string& goal,
                                       PipelineTrace& trace) const {
    const std::string prompt = prompts_.render("image_summary", {{"goal", goal}});
    const auto doc = structured_call(
        config_.backbone, "summarize_image",
        {{Role::user, {TextPart{prompt}, ImagePart{png_bytes}}}},
        [](const nlohmann::json& j) -> std::optional<std::pair<std::string, std::string>> {
            if (!j.is_object() || !j.contains("features") || !j["features"].is_string() ||
                j["features"].get<std::string>().empty()) {
                return problem("expected a non-empty string field 'features'", kMalformedOutput);
            }
            const auto keywords = string_list(j.value("keywords", nlohmann::json::array()));
            bool any = false;
            for (const auto& k : keywords) any = any || !util::trim(k).empty();
            if (!any) {
                return problem("expected a non-empty string array field 'keywords'",
                               kMalformedOutput);
            }
            return ok();
        },
        trace);

    ImageSummary summary;
    summary.features = doc["features"].get<std::string>();
    std::set<std::string> seen;
    for (const auto& raw : string_list(doc["keywords"])) {
        const std::string keyword = util::trim(raw);
        if (keyword.empty() || !seen.insert(keyword).second) continue;
        summary.keywords.push_back(keyword);
    }
    return summary;
}

std::vector<RootQuestion> Pipeline::generate_root_questions(
    const std::string& png_bytes, const std::string& goal, const ImageSummary& summary,
    const std::vector<gateway::RetrievedDoc>& docs, int count, PipelineTrace& trace) const {
    if (count < 1) throw Error("root question count must be >= 1");
    const std::string prompt = prompts_.render("root_questions", {
                                                                     {"goal", goal},
                                                                     {"features", summary.features},
                                                                     {"docs", render_docs(docs)},
                                                                     {"count", std::to_string(count)},
                                                                 });
    const auto doc = structured_call(
        config_.backbone, "root_questions",
        {{Role::user, {TextPart{prompt}, ImagePart{png_bytes}}}},
        [count](const nlohmann::json& j) -> std::optional<std::pair<std::string, std::string>> {
            if (!j.is_object() || !j.contains("questions") || !j["questions"].is_array()) {
                return problem("expected an array field 'questions'", kMalformedOutput);
            }
            const auto questions = string_list(j["questions"]);
            if (static_cast<int>(questions.size()) != count) {
                return problem("expected exactly " + std::to_string(count) + " questions, got " +
                                   std::to_string(j["questions"].size()),
                               "question count mismatch");
            }
            for (const auto& q : questions) {
                if (util::trim(q).empty()) {
                    return problem("questions must be non-empty strings", kMalformedOutput);
                }
            }
            return ok();
        },
        trace);

    std::vector<RootQuestion> questions;
    int index = 1;
    for (const auto& text : string_list(doc["questions"])) {
        questions.push_back({index++, util::trim(text)});
    }
    return questions;
}

ImageEvidence Pipeline::analyze_image(const std::string& png_bytes, const std::string& question,
                                      int question_index, PipelineTrace& trace) const {
    const std::string prompt = prompts_.render("image_analysis", {{"question", question}});
    GatewayRequest request;
    request.model_id = config_.analysis;
    request.temperature = config_.temperature;
    request.max_tokens = config_.max_tokens;
    request.messages = {{Role::user, {TextPart{prompt}, ImagePart{png_bytes}}}};

    auto response = complete_traced(request, "analyze_image", trace);
    std::string findings = util::trim(response.text);
    if (findings.empty()) {
        request.messages.push_back({Role::assistant, {TextPart{response.text}}});
        request.messages.push_back(
            {Role::user,
             {TextPart{"Your previous response was empty. Report the observable findings."}}});
        response = complete_traced(request, "analyze_image", trace);
        findings = util::trim(response.text);
    }
    if (findings.empty()) throw Error("empty evidence: image analysis produced no findings");
    return {question_index, std::move(findings)};
}

InsightRecord Pipeline::answer_and_insight(const std::string& question,
                                           const std::string& png_bytes,
                                           const ImageEvidence& evidence, Origin origin, int depth,
                                           int parent_root_index, PipelineTrace& trace) const {
    if (evidence.findings.empty()) throw Error("empty evidence: cannot answer without findings");
    const std::string prompt = prompts_.render(
        "answer_insight", {{"question", question}, {"evidence", evidence.findings}});
    const auto doc = structured_call(
        config_.backbone, "answer_insight",
        {{Role::user, {TextPart{prompt}, ImagePart{png_bytes}}}},
        [](const nlohmann::json& j) -> std::optional<std::pair<std::string, std::string>> {
            if (!j.is_object() || !j.contains("answer") || !j["answer"].is_string()) {
                return problem("expected a string field 'answer'", kMalformedOutput);
            }
            if (!j.contains("insight") || !j["insight"].is_string() ||
                util::trim(j["insight"].get<std::string>()).empty()) {
                return problem("expected a non-empty string field 'insight'", kMalformedOutput);
            }
            return ok();
        },
        trace);

    InsightRecord record;
    record.question = question;
    record.answer = util::trim(doc["answer"].get<std::string>());
    record.insight_text = util::trim(doc["insight"].get<std::string>());
    record.origin = origin;
    record.depth = depth;
    record.parent_root_index = parent_root_index;
    return record;
}

std::vector<FollowupCandidate> Pipeline::generate_followup_candidates(
    const std::string& png_bytes, const std::string& goal, const std::string& prior_question,
    const std::string& prior_answer, const ImageSummary& summary,
    const std::vector<gateway::RetrievedDoc>& docs, int count, PipelineTrace& trace) const {
    if (count < 1) throw Error("candidate count must be >= 1");
    const std::string prompt =
        prompts_.render("followup_candidates", {
                                                   {"goal", goal},
                                                   {"question", prior_question},
                                                   {"answer", prior_answer},
                                                   {"features", summary.features},
                                                   {"docs", render_docs(docs)},
                                                   {"count", std::to_string(count)},
                                               });
    const auto doc = structured_call(
        config_.backbone, "followup_candidates",
        {{Role::user, {TextPart{prompt}, ImagePart{png_bytes}}}},
        [count](const nlohmann::json& j) -> std::optional<std::pair<std::string, std::string>> {
            if (!j.is_object() || !j.contains("questions") || !j["questions"].is_array()) {
                return problem("expected an array field 'questions'", kMalformedOutput);
            }
            const auto questions = string_list(j["questions"]);
            if (static_cast<int>(questions.size()) != count) {
                return problem("expected exactly " + std::to_string(count) + " candidates, got " +
                                   std::to_string(j["questions"].size()),
                               "candidate count mismatch");
            }
            for (const auto& q : questions) {
                if (util::trim(q).empty()) {
                    return problem("candidates must be non-empty strings", kMalformedOutput);
                }
            }
            return ok();
        },
        trace);

    std::vector<FollowupCandidate> candidates;
    std::set<std::string> seen;
    for (const auto& text : string_list(doc["questions"])) {
        const std::string trimmed = util::trim(text);
        if (!seen.insert(trimmed).second) {
            trace.notes.emplace_back(
                static_cast<int>(trace.events.size() + trace.notes.size()) + 1,
                "duplicate follow-up candidate text: " + trimmed);
        }
        candidates.push_back({trimmed, 0});
    }
    return candidates;
}

FollowupCandidate Pipeline::select_followup(std::vector<FollowupCandidate>& candidates,
                                            const SelectionContext& context,
                                            PipelineTrace& trace) const {
    if (candidates.empty()) throw Error("select_followup requires at least one candidate");
    for (auto& candidate : candidates) {
        const std::string rubric =
            prompts_.render("followup_select", {
                                                   {"goal", context.goal},
                                                   {"root_question", context.root_question},
                                                   {"answer", context.latest_answer},
                                                   {"candidate", candidate.text},
                                               });
        GatewayRequest request;
        request.model_id = config_.backbone;
        request.temperature = config_.temperature;
        request.max_tokens = 128;
        request.messages = {{Role::user, {TextPart{rubric}}}};

        auto response = complete_traced(request, "select_followup", trace);
        auto score = gateway::parse_score_1_10(response.text);
        if (!score) {
            request.messages.push_back({Role::assistant, {TextPart{response.text}}});
            request.messages.push_back(
                {Role::user,
                 {TextPart{"Respond with a single integer from 1 to 10 and nothing else."}}});
            response = complete_traced(request, "select_followup", trace);
            score = gateway::parse_score_1_10(response.text);
        }
        if (!score) {
            throw Error("judge format violation: no 1-10 score while selecting a follow-up");
        }
        candidate.score = *score;
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (candidates[i].score > candidates[best].score) best = i; // ties keep the first
    }
    trace.candidate_sets.push_back(candidates);
    trace.selections.push_back(candidates[best].text);
    return candidates[best];
}

std::pair<std::vector<InsightRecord>, PipelineTrace> Pipeline::run(const CaseInput& input) const {
    PipelineTrace trace;
    auto records = run(input, trace);
    return {std::move(records), std::move(trace)};
}

std::vector<InsightRecord> Pipeline::run(const CaseInput& input, PipelineTrace& trace) const {
    trace.case_id = input.case_id;
    const std::string png_bytes = util::read_file(input.image_path);

    // Stage 1: summary, retrieval, root questions.
    trace.summary = summarize_image(png_bytes, input.goal, trace);

    const auto retrieve_start = std::chrono::steady_clock::now();
    trace.docs = gateway_.web_retrieve(trace.summary.keywords);
    std::string keyword_key = "web_retrieve";
    for (const auto& keyword : trace.summary.keywords) {
        keyword_key.push_back('\x1f');
        keyword_key += keyword;
    }
    TraceEvent retrieve_event;
    retrieve_event.seq = static_cast<int>(trace.events.size() + trace.notes.size()) + 1;
    retrieve_event.purpose = "web_retrieve";
    retrieve_event.request_hash = util::sha256_hex(keyword_key);
    retrieve_event.model_id = "search";
    retrieve_event.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                     std::chrono::steady_clock::now() - retrieve_start)
                                     .count();
    trace.events.push_back(std::move(retrieve_event));

    trace.root_questions = generate_root_questions(png_bytes, input.goal, trace.summary,
                                                   trace.docs, config_.root_question_count, trace);

    // Stages 2 and 3, chained per root: each follow-up derives from the most
    // recent question/answer in its root's chain.
    std::vector<InsightRecord> records;
    for (const auto& root : trace.root_questions) {
        ImageEvidence evidence = analyze_image(png_bytes, root.text, root.index, trace);
        InsightRecord record = answer_and_insight(root.text, png_bytes, evidence, Origin::root, 0,
                                                  root.index, trace);
        records.push_back(record);

        std::string prior_question = root.text;
        std::string prior_answer = record.answer;
        for (int round = 1; round <= config_.depth; ++round) {
            auto candidates = generate_followup_candidates(png_bytes, input.goal, prior_question,
                                                           prior_answer, trace.summary, trace.docs,
                                                           config_.candidate_count, trace);
            const auto best =
                select_followup(candidates, {input.goal, root.text, prior_answer}, trace);
            evidence = analyze_image(png_bytes, best.text, root.index, trace);
            record = answer_and_insight(best.text, png_bytes, evidence, Origin::followup, round,
                                        root.index, trace);
            records.push_back(record);
            prior_question = best.text;
            prior_answer = record.answer;
        }
    }
    return records;
}

std::pair<std::vector<InsightRecord>, PipelineTrace> Pipeline::run_direct(
    const CaseInput& input) const {
    PipelineTrace trace;
    auto records = run_direct(input, trace);
    return {std::move(records), std::move(trace)};
}

std::vector<InsightRecord> Pipeline::run_direct(const CaseInput& input,
                                                PipelineTrace& trace) const {
    trace.case_id = input.case_id;
    const std::string png_bytes = util::read_file(input.image_path);

    const std::string prompt = prompts_.render("direct_insights", {{"goal", input.goal}});
    const auto doc = structured_call(
        config_.backbone, "direct_insights",
        {{Role::user, {TextPart{prompt}, ImagePart{png_bytes}}}},
        [](const nlohmann::json& j) -> std::optional<std::pair<std::string, std::string>> {
            if (!j.is_object() || !j.contains("insights") || !j["insights"].is_array()) {
                return problem("expected an array field 'insights'", kMalformedOutput);
            }
            for (const auto& entry : j["insights"]) {
                if (!entry.is_string()) {
                    return problem("insights must be strings", kMalformedOutput);
                }
            }
            return ok();
        },
        trace);

    std::vector<InsightRecord> records;
    int index = 1;
    for (const auto& text : string_list(doc["insights"])) {
        const std::string trimmed = util::trim(text);
        if (trimmed.empty()) continue;
        InsightRecord record;
        record.insight_text = trimmed;
        record.origin = Origin::root;
        record.depth = 0;
        record.parent_root_index = index++;
        records.push_back(std::move(record));
    }
    if (records.empty()) throw Error("no insights produced");
    return records;
}

// ── Predictions serialization ───────────────────────────────────

nlohmann::json record_to_json(const InsightRecord& record) {
    return {
        {"question", record.question},
        {"answer", record.answer},
        {"insight", record.insight_text},
        {"origin", origin_name(record.origin)},
        {"depth", record.depth},
        {"root", record.parent_root_index},
    };
}

InsightRecord record_from_json(const nlohmann::json& doc) {
    InsightRecord record;
    record.question = doc.value("question", "");
    record.answer = doc.value("answer", "");
    record.insight_text = doc.at("insight").get<std::string>();
    record.origin = origin_from_name(doc.value("origin", "root"));
    record.depth = doc.value("depth", 0);
    record.parent_root_index = doc.value("root", 1);
    return record;
}

nlohmann::json Predictions::to_json() const {
    nlohmann::json case_array = nlohmann::json::array();
    for (const auto& prediction : cases) {
        nlohmann::json insights = nlohmann::json::array();
        for (const auto& record : prediction.insights) insights.push_back(record_to_json(record));
        case_array.push_back({{"case_id", prediction.case_id}, {"insights", std::move(insights)}});
    }
    nlohmann::json doc = {
        {"run_id", run_id},
        {"config", config},
        {"cases", std::move(case_array)},
    };
    if (!created_at.empty()) doc["created_at"] = created_at;
    return doc;
}

Predictions Predictions::from_json(const nlohmann::json& doc) {
    Predictions predictions;
    predictions.run_id = doc.at("run_id").get<std::string>();
    predictions.config = doc.value("config", nlohmann::json::object());
    predictions.created_at = doc.value("created_at", "");
    for (const auto& case_doc : doc.at("cases")) {
        PredictionCase prediction;
        prediction.case_id = case_doc.at("case_id").get<std::string>();
        for (const auto& record_doc : case_doc.at("insights")) {
            prediction.insights.push_back(record_from_json(record_doc));
        }
        predictions.cases.push_back(std::move(prediction));
    }
    return predictions;
}

Predictions Predictions::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(util::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error("predictions file is not valid: " + path.string() + ": " + e.what());
    }
}

} // namespace insight::agent
