#include "insight/cli.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "insight/agent.hpp"
#include "insight/config.hpp"
#include "insight/dataset.hpp"
#include "insight/error.hpp"
#include "insight/eval.hpp"
#include "insight/gateway.hpp"
#include "insight/prompts.hpp"
#include "insight/report.hpp"
#include "insight/text_metrics.hpp"
#include "insight/util.hpp"

namespace insight::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;
constexpr int kExitTotal = 3;

struct GatewayStack {
    std::shared_ptr<gateway::Backend> backend;
    std::unique_ptr<gateway::Gateway> gateway;
};

// Assembles base backend + optional record/replay wrapper + search backend
// from a run config.
GatewayStack build_gateway(const config::RunConfig& config, bool need_search) {
    GatewayStack stack;

    std::shared_ptr<gateway::Backend> base;
    if (config.replay != "replay") {
        if (config.backend == "mock") {
            base = gateway::MockBackend::from_script_file(config.mock_script);
        } else {
            base = std::make_shared<gateway::LiveBackend>(config.endpoints);
        }
    }

    if (config.replay == "off") {
        stack.backend = base;
    } else {
        if (config.cache_dir.empty()) {
            throw ConfigError("record/replay requires cache_dir (or $INSIGHT_CACHE_DIR)");
        }
        const auto mode = config.replay == "record" ? gateway::ReplayMode::record
                                                    : gateway::ReplayMode::replay;
        stack.backend = std::make_shared<gateway::ReplayBackend>(config.cache_dir, mode, base);
    }

    stack.gateway = std::make_unique<gateway::Gateway>(stack.backend);

    if (need_search) {
        std::shared_ptr<gateway::SearchBackend> search;
        if (!config.search.fixture.empty()) {
            search = std::make_shared<gateway::FixtureSearch>(config.search.fixture);
        } else if (!config.search.base_url.empty()) {
            search = std::make_shared<gateway::LiveSearch>(config.search.base_url);
        }
        if (config.replay != "off") {
            const auto mode = config.replay == "record" ? gateway::ReplayMode::record
                                                        : gateway::ReplayMode::replay;
            search = std::make_shared<gateway::ReplaySearch>(config.cache_dir, mode, search);
        }
        if (search) stack.gateway->set_search_backend(std::move(search));
    }
    return stack;
}

int cmd_validate(const std::string& dataset_path, std::ostream& out, std::ostream& err) {
    try {
        const auto manifest = dataset::load_dataset(dataset_path);
        const auto stats = dataset::dataset_stats(manifest);
        out << "OK: " << stats.case_count << " cases, " << stats.insight_count << " insights\n";
        for (const auto& [type, count] : stats.by_type) {
            out << "  " << type << ": " << count << "\n";
        }
        for (const auto& [difficulty, count] : stats.by_difficulty) {
            out << "  difficulty " << difficulty << ": " << count << " cases\n";
        }
        return kExitOk;
    } catch (const dataset::ValidationError& e) {
        err << "validation failed:\n";
        for (const auto& violation : e.violations()) {
            err << "  " << violation.str() << "\n";
        }
        return kExitConfig;
    }
}

struct RunOverrides {
    std::string mode;
    std::string run_id;
    std::string output_dir;
    std::string cache_dir;
    bool record = false;
    bool replay = false;
};

int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err) {
    auto config = config::load_config(config_path);
    if (!overrides.mode.empty()) config.mode = overrides.mode;
    if (!overrides.run_id.empty()) config.run_id = overrides.run_id;
    if (!overrides.output_dir.empty()) config.output_dir = overrides.output_dir;
    if (!overrides.cache_dir.empty()) config.cache_dir = overrides.cache_dir;
    if (overrides.record) config.replay = "record";
    if (overrides.replay) config.replay = "replay";
    if (overrides.mode == "direct" && overrides.run_id.empty() && config.run_id == "run-agent") {
        config.run_id = "run-direct";
    }

    const auto manifest = dataset::load_dataset(config.dataset);
    const auto library = prompts::PromptLibrary::load_dir(config.prompts_dir);
    auto stack = build_gateway(config, config.mode == "agent");
    const agent::Pipeline pipeline(*stack.gateway, library, config.agent);

    struct CaseOutcome {
        std::optional<agent::PredictionCase> prediction;
        std::string error;
        std::string trace_jsonl;
    };
    std::vector<CaseOutcome> outcomes(manifest.cases.size());

    std::atomic<std::size_t> next_case{0};
    const auto worker = [&] {
        while (true) {
            const std::size_t index = next_case.fetch_add(1);
            if (index >= manifest.cases.size()) return;
            const auto input = agent::CaseInput::from(manifest.cases[index]);
            agent::PipelineTrace trace;
            try {
                auto records = config.mode == "agent" ? pipeline.run(input, trace)
                                                      : pipeline.run_direct(input, trace);
                outcomes[index].prediction = agent::PredictionCase{input.case_id, std::move(records)};
            } catch (const std::exception& e) {
                // One flaky case must not sink the batch; keep its partial trace.
                outcomes[index].error = e.what();
            }
            outcomes[index].trace_jsonl = trace.to_jsonl();
        }
    };
    const std::size_t worker_count =
        std::min<std::size_t>(static_cast<std::size_t>(config.parallelism),
                              manifest.cases.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < worker_count; ++i) workers.emplace_back(worker);
    for (auto& thread : workers) thread.join();

    agent::Predictions predictions;
    predictions.run_id = config.run_id;
    predictions.created_at = util::utc_timestamp();
    predictions.config = {
        {"mode", config.mode},
        {"dataset", config.dataset.string()},
        {"agent",
         {{"root_questions", config.agent.root_question_count},
          {"candidates", config.agent.candidate_count},
          {"depth", config.agent.depth},
          {"backbone", config.agent.backbone},
          {"analysis", config.agent.analysis},
          {"temperature", config.agent.temperature},
          {"max_tokens", config.agent.max_tokens}}},
    };

    const std::filesystem::path trace_dir = config.output_dir / "traces" / config.run_id;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < manifest.cases.size(); ++i) {
        const auto& case_id = manifest.cases[i].case_id;
        if (outcomes[i].prediction) {
            out << "case " << case_id << ": ok (" << outcomes[i].prediction->insights.size()
                << " insights)\n";
            predictions.cases.push_back(std::move(*outcomes[i].prediction));
            util::write_file(trace_dir / (case_id + ".jsonl"), outcomes[i].trace_jsonl);
        } else {
            ++failures;
            out << "case " << case_id << ": FAILED (" << outcomes[i].error << ")\n";
            if (!outcomes[i].trace_jsonl.empty()) {
                util::write_file(trace_dir / (case_id + ".jsonl"), outcomes[i].trace_jsonl);
            }
        }
    }

    const std::filesystem::path predictions_path =
        config.output_dir / (config.run_id + ".predictions.json");
    util::write_file_atomic(predictions_path, predictions.to_json().dump(2) + "\n");
    out << "predictions: " << predictions_path.string() << "\n";
    out << manifest.cases.size() - failures << "/" << manifest.cases.size() << " cases succeeded\n";

    if (failures == manifest.cases.size()) {
        err << "all cases failed\n";
        return kExitTotal;
    }
    return failures == 0 ? kExitOk : kExitPartial;
}

struct EvalArgs {
    std::string predictions_path;
    std::string dataset_path;
    std::string scorer_csv = "rouge1";
    bool with_novelty = false;
    std::string config_path;
    std::string output_dir;
};

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    const auto manifest = dataset::load_dataset(args.dataset_path);
    const auto predictions = agent::Predictions::load(args.predictions_path);

    std::vector<std::string> scorers;
    std::stringstream csv(args.scorer_csv);
    std::string token;
    while (std::getline(csv, token, ',')) {
        token = util::trim(token);
        if (token.empty()) continue;
        if (token != "rouge1" && token != "geval") {
            throw ConfigError("unknown scorer '" + token + "' (expected rouge1 or geval)");
        }
        if (std::find(scorers.begin(), scorers.end(), token) == scorers.end()) {
            scorers.push_back(token);
        }
    }
    if (scorers.empty()) throw ConfigError("no scorers requested");
    if (args.with_novelty &&
        std::find(scorers.begin(), scorers.end(), "geval") == scorers.end()) {
        throw ConfigError("--novelty requires the geval scorer");
    }

    const bool needs_gateway =
        args.with_novelty || std::find(scorers.begin(), scorers.end(), "geval") != scorers.end();

    std::optional<GatewayStack> stack;
    std::optional<prompts::PromptLibrary> library;
    std::vector<std::string> geval_judges;
    std::vector<std::string> novelty_judges;
    if (needs_gateway) {
        if (args.config_path.empty()) {
            throw ConfigError("geval/novelty scoring requires --config for judges and endpoints");
        }
        const auto config = config::load_config(args.config_path);
        if (config.judges.geval.size() != 2) {
            throw ConfigError("judges.geval must list exactly 2 endpoints");
        }
        geval_judges = config.judges.geval;
        if (args.with_novelty) {
            if (config.judges.novelty.size() != 3) {
                throw ConfigError("judges.novelty must list exactly 3 endpoints");
            }
            novelty_judges = config.judges.novelty;
        }
        stack = build_gateway(config, false);
        library = prompts::PromptLibrary::load_dir(config.prompts_dir);
    }

    eval::EvalOptions options;
    options.scorers = scorers;
    options.with_novelty = args.with_novelty;
    options.out_dir = args.output_dir.empty()
                          ? std::filesystem::path(args.predictions_path).parent_path()
                          : std::filesystem::path(args.output_dir);
    options.created_at = util::utc_timestamp();

    const eval::EvalRunner runner(manifest, stack ? stack->gateway.get() : nullptr,
                                  library ? &*library : nullptr, geval_judges, novelty_judges);
    const auto result = runner.evaluate(predictions, options);

    for (const auto& warning : result.warnings) err << "warning: " << warning << "\n";
    for (const auto& scorer : scorers) {
        const auto& doc = result.eval_docs.at(scorer);
        const std::filesystem::path path =
            options.out_dir / (predictions.run_id + ".eval." + scorer + ".json");
        util::write_file_atomic(path, doc.dump(2) + "\n");
        const auto& aggregate = doc["aggregate"];
        out << scorer << ": recall " << util::format_fixed(aggregate["recall"].get<double>(), 3)
            << "  precision " << util::format_fixed(aggregate["precision"].get<double>(), 3)
            << "  f1 " << util::format_fixed(aggregate["f1"].get<double>(), 3) << "\n";
        out << "eval: " << path.string() << "\n";
    }
    if (result.novelty) {
        out << "novelty: original " << util::format_fixed(result.novelty->original, 3)
            << "  innovation " << util::format_fixed(result.novelty->innovation, 3) << "\n";
    }
    return kExitOk;
}

int cmd_redundancy(const std::string& dataset_path, std::ostream& out) {
    const auto manifest = dataset::load_dataset(dataset_path);
    std::vector<std::string> questions;
    std::vector<std::string> insights;
    for (const auto& benchmark_case : manifest.cases) {
        for (const auto& gt : benchmark_case.ground_truth) {
            questions.push_back(gt.question);
            insights.push_back(gt.insight_text);
        }
    }
    const auto question_report = metrics::redundancy_report(questions);
    const auto insight_report = metrics::redundancy_report(insights);

    const auto line = [&](const std::string& name, double q, double i) {
        out << std::string(14 - name.size(), ' ') << name << "  "
            << util::format_fixed(q, 4) << "     " << util::format_fixed(i, 4) << "\n";
    };
    out << "        metric  questions  insights\n";
    line("tfidf-cosine", question_report.tfidf_cosine, insight_report.tfidf_cosine);
    line("self-bleu", question_report.self_bleu, insight_report.self_bleu);
    line("distinct-2", question_report.distinct2, insight_report.distinct2);
    out << "     sentences  " << question_report.sentence_count << "          "
        << insight_report.sentence_count << "\n";
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& eval_paths, const std::string& json_out,
               std::ostream& out) {
    std::vector<nlohmann::json> docs;
    for (const auto& path : eval_paths) {
        try {
            docs.push_back(nlohmann::json::parse(util::read_file(path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error("eval file is not valid JSON: " + path + ": " + e.what());
        }
    }
    const auto comparison = report::build_comparison(docs);
    out << comparison.render_text();
    if (!json_out.empty()) {
        util::write_file_atomic(json_out, comparison.to_json().dump(2) + "\n");
        out << "report: " << json_out << "\n";
    }
    return kExitOk;
}

} // namespace

int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"insight: multi-agent medical insight mining and evaluation"};
    app.require_subcommand(1);

    std::string dataset_path;
    auto* validate_cmd = app.add_subcommand("validate", "Check a dataset against its schema");
    validate_cmd->add_option("dataset", dataset_path, "Dataset directory or manifest file")
        ->required();

    std::string config_path;
    RunOverrides overrides;
    auto* run_cmd = app.add_subcommand("run", "Run the agent pipeline or the direct baseline");
    run_cmd->add_option("--config", config_path, "Run config JSON")->required();
    run_cmd->add_option("--mode", overrides.mode, "agent | direct")
        ->check(CLI::IsMember({"agent", "direct"}));
    run_cmd->add_option("--run-id", overrides.run_id, "Override the run id");
    run_cmd->add_option("--out", overrides.output_dir, "Override the output directory");
    run_cmd->add_option("--cache-dir", overrides.cache_dir, "Override the replay cache directory");
    auto* record_flag = run_cmd->add_flag("--record", overrides.record,
                                          "Record model responses into the replay cache");
    run_cmd->add_flag("--replay", overrides.replay, "Serve all responses from the replay cache")
        ->excludes(record_flag);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
    eval_cmd->add_option("--pred", eval_args.predictions_path, "Predictions JSON")->required();
    eval_cmd->add_option("--dataset", eval_args.dataset_path, "Dataset directory")->required();
    eval_cmd->add_option("--scorer", eval_args.scorer_csv, "Comma list: rouge1,geval");
    eval_cmd->add_flag("--novelty", eval_args.with_novelty, "Also compute novelty scores");
    eval_cmd->add_option("--config", eval_args.config_path, "Run config (judges + endpoints)");
    eval_cmd->add_option("--out", eval_args.output_dir, "Output directory for eval JSONs");

    std::string redundancy_dataset;
    auto* redundancy_cmd =
        app.add_subcommand("redundancy", "Corpus redundancy metrics for a dataset");
    redundancy_cmd->add_option("--dataset", redundancy_dataset, "Dataset directory")->required();

    std::vector<std::string> report_paths;
    std::string report_json;
    auto* report_cmd = app.add_subcommand("report", "Render a comparison of eval outputs");
    report_cmd->add_option("evals", report_paths, "Eval JSON files")->required();
    report_cmd->add_option("--json", report_json, "Also write the comparison as JSON");

    try {
        std::reverse(args.begin(), args.end()); // CLI11's vector parse is LIFO
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (validate_cmd->parsed()) return cmd_validate(dataset_path, out, err);
        if (run_cmd->parsed()) return cmd_run(config_path, overrides, out, err);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, out, err);
        if (redundancy_cmd->parsed()) return cmd_redundancy(redundancy_dataset, out);
        if (report_cmd->parsed()) return cmd_report(report_paths, report_json, out);
    } catch (const dataset::ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "unexpected error: " << e.what() << "\n";
        return kExitTotal;
    }
    return kExitConfig;
}

} // namespace insight::cli
