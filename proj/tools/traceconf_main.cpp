// Command-line front end. Flags override the config file; errors are printed
// as a single JSON line on stderr with a nonzero exit code.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "traceconf/commands.hpp"
#include "traceconf/error.hpp"

namespace {

using traceconf::cli::RunConfig;
using nlohmann::json;

struct Overrides {
    std::optional<std::string> questions, generations, verdicts, scores, token_sets, out_dir, failures;
    std::optional<std::string> extraction_config, prompt_template, judge_template;
    std::vector<std::string> estimators;
    std::optional<std::string> unit, marker_scope, prompt_kind, ece_variant;
    std::optional<int> k_top, min_responses, top_n, ece_intervals;
    std::optional<unsigned> threads;
    std::optional<bool> renormalize, reasoning_tags;
    std::optional<std::string> base_url, model, judge_base_url, judge_model;
    std::optional<int> max_concurrent, max_tokens, top_logprobs;
    std::optional<double> temperature;
    std::optional<std::size_t> synth_n;
    std::optional<std::uint64_t> seed;
};

void add_flags(CLI::App& app, Overrides& o) {
    app.add_option("--questions", o.questions, "Question file (JSONL)");
    app.add_option("--generations", o.generations, "Generation file (JSONL)");
    app.add_option("--verdicts", o.verdicts, "Verdict file (JSONL)");
    app.add_option("--scores", o.scores, "Score file (JSONL)");
    app.add_option("--token-sets", o.token_sets, "Forking token-set file (JSONL)");
    app.add_option("--out-dir", o.out_dir, "Report directory");
    app.add_option("--failures", o.failures, "Failure report file");
    app.add_option("--extraction-config", o.extraction_config, "Marker list / linguistic scale JSON");
    app.add_option("--prompt-template", o.prompt_template, "Elicitation prompt template file");
    app.add_option("--judge-template", o.judge_template, "Judge prompt template file");
    app.add_option("--estimators", o.estimators, "Estimators, e.g. TL VC SP SUMENT FT EM FUSED(VC,TL)");
    app.add_option("--unit", o.unit, "Trace length unit")->check(CLI::IsMember({"tokens", "characters"}));
    app.add_option("--marker-scope", o.marker_scope, "Epistemic marker scope")
        ->check(CLI::IsMember({"whole_output", "reasoning_only"}));
    app.add_option("--prompt-kind", o.prompt_kind, "Prompt kind")
        ->check(CLI::IsMember({"linguistic", "numeric", "topk", "answer_only"}));
    app.add_option("--ece-variant", o.ece_variant, "ECE variant")->check(CLI::IsMember({"mass_weighted", "binned"}));
    app.add_option("--ece-intervals", o.ece_intervals, "ECE grid intervals")->check(CLI::PositiveNumber);
    app.add_option("--k-top", o.k_top, "Alternatives used for entropy")->check(CLI::PositiveNumber);
    app.add_option("--min-responses", o.min_responses, "Discovery minimum response count");
    app.add_option("--top-n", o.top_n, "Discovery set size")->check(CLI::PositiveNumber);
    app.add_option("--threads", o.threads, "Worker threads for discovery")->check(CLI::PositiveNumber);
    app.add_option("--renormalize", o.renormalize, "Renormalize top-k mass before entropy");
    app.add_option("--reasoning-tags", o.reasoning_tags, "Keep reasoning-tag sentences in prompts");
    app.add_option("--base-url", o.base_url, "Generation endpoint base URL");
    app.add_option("--model", o.model, "Generation model name");
    app.add_option("--judge-base-url", o.judge_base_url, "Judge endpoint base URL");
    app.add_option("--judge-model", o.judge_model, "Judge model name");
    app.add_option("--max-concurrent", o.max_concurrent, "Requests in flight")->check(CLI::PositiveNumber);
    app.add_option("--max-tokens", o.max_tokens, "Generation token budget")->check(CLI::PositiveNumber);
    app.add_option("--top-logprobs", o.top_logprobs, "Alternatives requested per token");
    app.add_option("--temperature", o.temperature, "Sampling temperature");
    app.add_option("--synth-n", o.synth_n, "Synthetic corpus size");
    app.add_option("--seed", o.seed, "Synthetic corpus seed");
}

void apply(const Overrides& o, RunConfig& c) {
    auto set = [](const auto& src, auto& dst) {
        if (src) dst = *src;
    };
    set(o.questions, c.questions);
    set(o.generations, c.generations);
    set(o.verdicts, c.verdicts);
    set(o.scores, c.scores);
    set(o.token_sets, c.token_sets);
    set(o.out_dir, c.out_dir);
    set(o.failures, c.failures);
    set(o.extraction_config, c.extraction_config);
    set(o.prompt_template, c.prompt_template);
    set(o.judge_template, c.judge_template);
    if (!o.estimators.empty()) c.estimators = o.estimators;

    // Enumerations go through the config parser so both paths agree.
    json j;
    if (o.unit) j["unit"] = *o.unit;
    if (o.marker_scope) j["marker_scope"] = *o.marker_scope;
    if (o.prompt_kind) j["prompt_kind"] = *o.prompt_kind;
    if (o.ece_variant) j["ece_variant"] = *o.ece_variant;
    if (!j.empty()) {
        const RunConfig parsed = traceconf::cli::run_config_from_json(j);
        if (o.unit) c.unit = parsed.unit;
        if (o.marker_scope) c.marker_scope = parsed.marker_scope;
        if (o.prompt_kind) c.prompt_kind = parsed.prompt_kind;
        if (o.ece_variant) c.ece.variant = parsed.ece.variant;
    }
    set(o.ece_intervals, c.ece.intervals);
    if (o.k_top) {
        c.entropy.k_top = *o.k_top;
        c.discovery.k_top = *o.k_top;
    }
    if (o.renormalize) {
        c.entropy.renormalize = *o.renormalize;
        c.discovery.renormalize = *o.renormalize;
    }
    set(o.min_responses, c.discovery.min_responses);
    set(o.top_n, c.discovery.top_n);
    set(o.threads, c.threads);
    set(o.reasoning_tags, c.reasoning_tags);
    set(o.base_url, c.endpoint.base_url);
    set(o.model, c.endpoint.model);
    set(o.judge_base_url, c.judge_endpoint.base_url);
    set(o.judge_model, c.judge_endpoint.model);
    if (o.max_concurrent) c.endpoint.max_concurrent = c.judge_endpoint.max_concurrent = *o.max_concurrent;
    set(o.max_tokens, c.endpoint.max_tokens);
    set(o.top_logprobs, c.endpoint.top_logprobs);
    set(o.temperature, c.endpoint.temperature);
    set(o.synth_n, c.synth.n);
    set(o.seed, c.synth.seed);
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const traceconf::ParseError*>(&e)) return "parse_error";
    if (dynamic_cast<const traceconf::DegenerateInputError*>(&e)) return "degenerate_input";
    if (dynamic_cast<const traceconf::ProtocolError*>(&e)) return "protocol_error";
    if (dynamic_cast<const traceconf::RequestRejected*>(&e)) return "request_rejected";
    if (dynamic_cast<const traceconf::TransientError*>(&e)) return "transient_error";
    if (dynamic_cast<const traceconf::Error*>(&e)) return "error";
    return "internal_error";
}

int fail(const std::string& command, const char* kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"command", command}, {"message", message}}.dump() << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidence estimation and evaluation for reasoning-model generations"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "Run configuration (JSON)");
    Overrides overrides;
    add_flags(app, overrides);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"questions-validate", "Validate a question file"},
        {"generate", "Query the generation endpoint for every question"},
        {"judge", "Label generations via exact match and the judge endpoint"},
        {"score", "Compute confidence scores for generations"},
        {"discover", "Discover forking tokens per dataset"},
        {"eval", "Evaluate scores against labels"},
        {"report", "Render charts from an eval report"},
        {"synth", "Write a seeded synthetic corpus"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("", "usage_error", e.what());
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        RunConfig config = config_path.empty() ? RunConfig{} : traceconf::cli::load_run_config(config_path);
        apply(overrides, config);
        namespace cli = traceconf::cli;
        json summary = {{"command", command}, {"status", "ok"}};
        if (command == "questions-validate") {
            summary["questions"] = cli::cmd_questions_validate(config);
        } else if (command == "generate") {
            const auto s = cli::cmd_generate(config);
            summary.update({{"records", s.records}, {"failures", s.failures}, {"missing_logprobs", s.missing_logprobs}});
        } else if (command == "judge") {
            const auto s = cli::cmd_judge(config);
            summary.update({{"verdicts", s.verdicts},
                            {"failures", s.failures},
                            {"exact_matches", s.exact_matches},
                            {"judge_calls", s.judge_calls}});
        } else if (command == "score") {
            const auto s = cli::cmd_score(config);
            summary.update({{"rows", s.rows}, {"columns", s.columns}, {"missing", s.missing},
                            {"fusion_excluded", s.fusion_excluded}});
        } else if (command == "discover") {
            json sets = json::object();
            for (const auto& set : cli::cmd_discover(config)) sets[set.dataset] = set.tokens.size();
            summary["token_sets"] = std::move(sets);
        } else if (command == "eval") {
            const auto s = cli::cmd_eval(config);
            std::cout << s.table;
            summary["estimators"] = s.reports.size();
        } else if (command == "report") {
            json files = json::array();
            for (const auto& p : cli::cmd_report(config)) files.push_back(p.generic_string());
            summary["files"] = std::move(files);
        } else if (command == "synth") {
            cli::cmd_synth(config);
            summary["records"] = config.synth.n;
        }
        std::cerr << summary.dump() << '\n';
        return 0;
    } catch (const std::exception& e) {
        return fail(command, error_kind(e), e.what());
    }
}
