#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "insight/agent.hpp"
#include "insight/error.hpp"
#include "support/pipeline_mock.hpp"
#include "support/test_util.hpp"

using namespace insight;
using namespace insight::agent;
using insight::testing::scripted_pipeline;
using insight::testing::StubSearch;
using insight::testing::TempWorkspace;

namespace {

struct Fixture {
    TempWorkspace ws;
    std::filesystem::path image;
    prompts::PromptLibrary library;
    std::shared_ptr<gateway::MockBackend> mock;

    Fixture()
        : image(ws.write("img.png", insight::testing::tiny_png())),
          library(prompts::PromptLibrary::load_dir(insight::testing::assets_dir() / "prompts")),
          mock(std::make_shared<gateway::MockBackend>()) {
        mock->set_handler(scripted_pipeline);
    }

    CaseInput input() const { return {"case-1", image, "Assess invasion and grading."}; }

    AgentConfig config(int m = 3, int n = 3, int p = 3) const {
        AgentConfig cfg;
        cfg.root_question_count = m;
        cfg.candidate_count = n;
        cfg.depth = p;
        cfg.backbone = "backbone";
        cfg.analysis = "analysis";
        return cfg;
    }
};

} // namespace

TEST_CASE("summarize_image parses features and deduplicates keywords") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_response(R"({"features":"sheets of atypical cells","keywords":["x","x","y"]})");
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;
    const auto summary = pipeline.summarize_image(insight::testing::tiny_png(), "goal", trace);
    CHECK(summary.features == "sheets of atypical cells");
    CHECK(summary.keywords == std::vector<std::string>{"x", "y"});
    CHECK(trace.events.size() == 1);
    CHECK(trace.events[0].purpose == "summarize_image");
}

TEST_CASE("summarize_image fails after two malformed responses") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_response("not json at all");
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;
    CHECK_THROWS_WITH_AS(pipeline.summarize_image(insight::testing::tiny_png(), "goal", trace),
                         doctest::Contains("malformed model output"), Error);
    CHECK(trace.events.size() == 2); // original + one re-ask
}

TEST_CASE("generate_root_questions enforces the requested count") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;
    const ImageSummary summary{"features", {"k"}};

    SUBCASE("correct count") {
        mock->add_response(R"({"questions":["q1","q2","q3"]})");
        const auto questions = pipeline.generate_root_questions(
            insight::testing::tiny_png(), "goal", summary, {}, 3, trace);
        REQUIRE(questions.size() == 3);
        CHECK(questions[0].index == 1);
        CHECK(questions[2].index == 3);
        CHECK(questions[1].text == "q2");
    }
    SUBCASE("single question") {
        mock->add_response(R"({"questions":["only one"]})");
        CHECK(pipeline
                  .generate_root_questions(insight::testing::tiny_png(), "goal", summary, {}, 1,
                                           trace)
                  .size() == 1);
    }
    SUBCASE("wrong count twice") {
        mock->add_response(R"({"questions":["q1","q2"]})");
        CHECK_THROWS_WITH_AS(pipeline.generate_root_questions(insight::testing::tiny_png(), "goal",
                                                              summary, {}, 3, trace),
                             doctest::Contains("question count mismatch"), Error);
    }
    SUBCASE("wrong count then corrected on re-ask") {
        mock->add_rule({"", "", {R"({"questions":["q1","q2"]})",
                                 R"({"questions":["q1","q2","q3"]})"},
                        true});
        CHECK(pipeline
                  .generate_root_questions(insight::testing::tiny_png(), "goal", summary, {}, 3,
                                           trace)
                  .size() == 3);
    }
}

TEST_CASE("analyze_image rejects persistently empty findings") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;

    SUBCASE("verbatim findings") {
        mock->add_response("dense nests of basaloid cells");
        const auto evidence =
            pipeline.analyze_image(insight::testing::tiny_png(), "q", 1, trace);
        CHECK(evidence.findings == "dense nests of basaloid cells");
        CHECK(evidence.question_index == 1);
    }
    SUBCASE("empty twice") {
        mock->add_response("");
        CHECK_THROWS_WITH_AS(pipeline.analyze_image(insight::testing::tiny_png(), "q", 1, trace),
                             doctest::Contains("empty evidence"), Error);
    }
    SUBCASE("question-keyed mock gives distinct findings") {
        mock->add_rule({"first question", "", {"findings one"}, true});
        mock->add_rule({"second question", "", {"findings two"}, true});
        CHECK(pipeline.analyze_image(insight::testing::tiny_png(), "first question", 1, trace)
                  .findings == "findings one");
        CHECK(pipeline.analyze_image(insight::testing::tiny_png(), "second question", 2, trace)
                  .findings == "findings two");
    }
}

TEST_CASE("answer_and_insight carries lineage from the caller") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;

    SUBCASE("root record") {
        mock->add_response(R"({"answer":"Invasion present","insight":"Higher metastatic risk"})");
        const auto record =
            pipeline.answer_and_insight("q", insight::testing::tiny_png(),
                                        {1, "evidence text"}, Origin::root, 0, 1, trace);
        CHECK(record.answer == "Invasion present");
        CHECK(record.insight_text == "Higher metastatic risk");
        CHECK(record.origin == Origin::root);
        CHECK(record.depth == 0);
    }
    SUBCASE("missing insight field twice") {
        mock->add_response(R"({"answer":"Invasion present"})");
        CHECK_THROWS_WITH_AS(
            pipeline.answer_and_insight("q", insight::testing::tiny_png(), {1, "evidence"},
                                        Origin::root, 0, 1, trace),
            doctest::Contains("malformed model output"), Error);
    }
}

TEST_CASE("generate_followup_candidates flags duplicates in the trace") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_response(R"({"questions":["same text","same text","other"]})");
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;
    const auto candidates = pipeline.generate_followup_candidates(
        insight::testing::tiny_png(), "goal", "prior q", "prior a", {"features", {"k"}}, {}, 3,
        trace);
    REQUIRE(candidates.size() == 3);
    REQUIRE(trace.notes.size() == 1);
    CHECK(trace.notes[0].second.find("duplicate follow-up candidate") != std::string::npos);
}

TEST_CASE("select_followup picks the argmax and breaks ties toward the first") {
    Fixture fx;
    auto mock = std::make_shared<gateway::MockBackend>();
    gateway::Gateway gw(mock);
    Pipeline pipeline(gw, fx.library, fx.config());
    PipelineTrace trace;
    const Pipeline::SelectionContext context{"goal", "root q", "answer"};

    SUBCASE("argmax") {
        mock->add_rule({"", "", {"4", "9", "6"}, true});
        std::vector<FollowupCandidate> candidates = {{"c1", 0}, {"c2", 0}, {"c3", 0}};
        const auto best = pipeline.select_followup(candidates, context, trace);
        CHECK(best.text == "c2");
        CHECK(best.score == 9);
        CHECK(candidates[0].score == 4);
        CHECK(candidates[2].score == 6);
        // the selection is an element of the input and beats every other score
        for (const auto& candidate : candidates) CHECK(best.score >= candidate.score);
    }
    SUBCASE("tie goes to the first") {
        mock->add_rule({"", "", {"7", "7", "3"}, true});
        std::vector<FollowupCandidate> candidates = {{"c1", 0}, {"c2", 0}, {"c3", 0}};
        CHECK(pipeline.select_followup(candidates, context, trace).text == "c1");
    }
    SUBCASE("single candidate") {
        mock->add_response("2");
        std::vector<FollowupCandidate> candidates = {{"only", 0}};
        CHECK(pipeline.select_followup(candidates, context, trace).text == "only");
    }
}

TEST_CASE("run_pipeline yields m*(p+1) records with correct lineage") {
    Fixture fx;
    gateway::Gateway gw(fx.mock);
    gw.set_search_backend(std::make_shared<StubSearch>());

    SUBCASE("defaults: 3 roots, depth 3 -> 12 insights") {
        Pipeline pipeline(gw, fx.library, fx.config());
        const auto [records, trace] = pipeline.run(fx.input());
        REQUIRE(records.size() == 12);

        std::map<int, std::set<int>> depths_per_root;
        for (const auto& record : records) {
            depths_per_root[record.parent_root_index].insert(record.depth);
            CHECK((record.depth == 0) == (record.origin == Origin::root));
            CHECK(!record.insight_text.empty());
        }
        REQUIRE(depths_per_root.size() == 3);
        for (const auto& [root, depths] : depths_per_root) {
            CHECK(depths == std::set<int>{0, 1, 2, 3});
        }
        CHECK(trace.root_questions.size() == 3);
        CHECK(trace.docs.size() == 2);
        CHECK(trace.candidate_sets.size() == 9);
        CHECK(trace.selections.size() == 9);
    }
    SUBCASE("m=1, p=0: single insight, no follow-up calls") {
        Pipeline pipeline(gw, fx.library, fx.config(1, 3, 0));
        const auto [records, trace] = pipeline.run(fx.input());
        REQUIRE(records.size() == 1);
        CHECK(records[0].depth == 0);
        for (const auto& event : trace.events) {
            CHECK(event.purpose != "followup_candidates");
            CHECK(event.purpose != "select_followup");
        }
        // summarize + retrieve + roots + analyze + answer
        CHECK(trace.events.size() == 5);
    }
}

TEST_CASE("follow-ups chain from the most recent question in each root") {
    Fixture fx;
    gateway::Gateway gw(fx.mock);
    gw.set_search_backend(std::make_shared<StubSearch>());
    Pipeline pipeline(gw, fx.library, fx.config(1, 2, 2));
    const auto [records, trace] = pipeline.run(fx.input());
    REQUIRE(records.size() == 3);
    // depth-2 question derives from the depth-1 question, not the root
    CHECK(records[2].question.find(records[1].question) != std::string::npos);
    CHECK(records[1].question.find(records[0].question) != std::string::npos);
}

TEST_CASE("run_direct produces flat records and rejects empty lists") {
    Fixture fx;
    gateway::Gateway gw(fx.mock);

    SUBCASE("five insights") {
        Pipeline pipeline(gw, fx.library, fx.config());
        const auto [records, trace] = pipeline.run_direct(fx.input());
        REQUIRE(records.size() == 5);
        for (const auto& record : records) {
            CHECK(record.origin == Origin::root);
            CHECK(record.depth == 0);
            CHECK(record.answer.empty());
        }
        CHECK(trace.events.size() == 1);
    }
    SUBCASE("two runs are identical") {
        Pipeline pipeline(gw, fx.library, fx.config());
        const auto first = pipeline.run_direct(fx.input());
        const auto second = pipeline.run_direct(fx.input());
        REQUIRE(first.first.size() == second.first.size());
        for (std::size_t i = 0; i < first.first.size(); ++i) {
            CHECK(first.first[i].insight_text == second.first[i].insight_text);
        }
    }
    SUBCASE("empty list is an error") {
        auto mock = std::make_shared<gateway::MockBackend>();
        mock->add_response(R"({"insights":[]})");
        gateway::Gateway empty_gw(mock);
        Pipeline pipeline(empty_gw, fx.library, fx.config());
        CHECK_THROWS_WITH_AS(pipeline.run_direct(fx.input()),
                             doctest::Contains("no insights produced"), Error);
    }
}

TEST_CASE("insight count law holds for randomized m and p over mock backends") {
    Fixture fx;
    gateway::Gateway gw(fx.mock);
    gw.set_search_backend(std::make_shared<StubSearch>());
    std::mt19937 rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 5);
        const int p = static_cast<int>(rng() % 5);
        Pipeline pipeline(gw, fx.library, fx.config(m, 2, p));
        const auto [records, trace] = pipeline.run(fx.input());
        CHECK(records.size() == static_cast<std::size_t>(m) * (p + 1));
        std::map<int, int> per_root;
        for (const auto& record : records) ++per_root[record.parent_root_index];
        CHECK(per_root.size() == static_cast<std::size_t>(m));
        for (const auto& [root, count] : per_root) CHECK(count == p + 1);
    }
}

TEST_CASE("replayed runs are byte-identical") {
    Fixture fx;
    TempWorkspace cache_ws;
    const auto cache = cache_ws.path() / "cache";

    const auto run_once = [&](std::shared_ptr<gateway::Backend> backend,
                              std::shared_ptr<gateway::SearchBackend> search) {
        gateway::Gateway gw(std::move(backend));
        gw.set_search_backend(std::move(search));
        Pipeline pipeline(gw, fx.library, fx.config(2, 2, 1));
        const auto [records, trace] = pipeline.run(fx.input());
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& record : records) doc.push_back(record_to_json(record));
        return std::pair{doc.dump(), trace};
    };

    const auto [recorded, trace_record] =
        run_once(std::make_shared<gateway::ReplayBackend>(cache, gateway::ReplayMode::record,
                                                          fx.mock),
                 std::make_shared<gateway::ReplaySearch>(cache, gateway::ReplayMode::record,
                                                         std::make_shared<StubSearch>()));
    const auto [replayed_1, trace_1] =
        run_once(std::make_shared<gateway::ReplayBackend>(cache, gateway::ReplayMode::replay),
                 std::make_shared<gateway::ReplaySearch>(cache, gateway::ReplayMode::replay));
    const auto [replayed_2, trace_2] =
        run_once(std::make_shared<gateway::ReplayBackend>(cache, gateway::ReplayMode::replay),
                 std::make_shared<gateway::ReplaySearch>(cache, gateway::ReplayMode::replay));

    CHECK(recorded == replayed_1);
    CHECK(replayed_1 == replayed_2);
    REQUIRE(trace_1.events.size() == trace_2.events.size());
    for (std::size_t i = 0; i < trace_1.events.size(); ++i) {
        CHECK(trace_1.events[i].request_hash == trace_2.events[i].request_hash);
        if (trace_1.events[i].purpose != "web_retrieve") CHECK(trace_1.events[i].from_cache);
    }
    CHECK(trace_record.events.size() == trace_1.events.size());
}

TEST_CASE("trace serializes as one JSON line per event") {
    Fixture fx;
    gateway::Gateway gw(fx.mock);
    gw.set_search_backend(std::make_shared<StubSearch>());
    Pipeline pipeline(gw, fx.library, fx.config(1, 2, 1));
    const auto [records, trace] = pipeline.run(fx.input());

    std::istringstream lines(trace.to_jsonl());
    std::string line;
    std::size_t call_lines = 0;
    int last_seq = 0;
    while (std::getline(lines, line)) {
        const auto doc = nlohmann::json::parse(line);
        CHECK(doc.contains("type"));
        if (doc["type"] == "call") {
            ++call_lines;
            CHECK(doc["request_hash"].get<std::string>().size() == 64);
            CHECK(doc["seq"].get<int>() > last_seq);
            last_seq = doc["seq"].get<int>();
        }
    }
    CHECK(call_lines == trace.events.size());
}

TEST_CASE("CaseInput exposes image and goal only") {
    dataset::BenchmarkCase benchmark_case;
    benchmark_case.case_id = "c";
    benchmark_case.image_ref = "/tmp/x.png";
    benchmark_case.goal = "g";
    benchmark_case.ground_truth = {{"q", "secret label", "Descriptive", ""}};
    const auto input = CaseInput::from(benchmark_case);
    CHECK(input.case_id == "c");
    CHECK(input.goal == "g");
    const auto serialized = nlohmann::json{{"case_id", input.case_id},
                                           {"image", input.image_path.string()},
                                           {"goal", input.goal}}
                                .dump();
    CHECK(serialized.find("secret label") == std::string::npos);
}

TEST_CASE("predictions round-trip through their JSON schema") {
    Predictions predictions;
    predictions.run_id = "r1";
    predictions.created_at = "2026-01-01T00:00:00Z";
    predictions.config = {{"mode", "agent"}};
    predictions.cases.push_back(
        {"case-1",
         {{"q1", "a1", "i1", Origin::root, 0, 1}, {"q2", "a2", "i2", Origin::followup, 1, 1}}});

    const auto doc = predictions.to_json();
    CHECK(doc["cases"][0]["insights"][0]["insight"] == "i1");
    CHECK(doc["cases"][0]["insights"][1]["origin"] == "followup");
    CHECK(doc["cases"][0]["insights"][1]["root"] == 1);

    const auto loaded = Predictions::from_json(doc);
    CHECK(loaded.run_id == "r1");
    REQUIRE(loaded.cases.size() == 1);
    REQUIRE(loaded.cases[0].insights.size() == 2);
    CHECK(loaded.cases[0].insights[1].depth == 1);
    CHECK(loaded.cases[0].insights[1].origin == Origin::followup);
    CHECK(loaded.to_json() == doc);
}
