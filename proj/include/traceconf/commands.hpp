#pragma once

// Pipeline stages behind the command-line tool. Each stage reads and writes
// files only, so any stage can be re-run or replaced by an external producer.
// The effective configuration is embedded in every output for provenance.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "traceconf/client.hpp"
#include "traceconf/estimators.hpp"
#include "traceconf/forking.hpp"
#include "traceconf/metrics.hpp"
#include "traceconf/records.hpp"
#include "traceconf/synth.hpp"

namespace traceconf::cli {

struct RunConfig {
    std::filesystem::path questions;
    std::filesystem::path generations;
    std::filesystem::path verdicts;
    std::filesystem::path scores;
    std::filesystem::path token_sets;
    std::filesystem::path out_dir = "reports";
    std::filesystem::path failures;
    std::filesystem::path extraction_config;  // marker list / linguistic scale override
    std::filesystem::path prompt_template;
    std::filesystem::path judge_template;

    std::vector<std::string> estimators = {"TL", "VC", "FUSED(VC,TL)"};
    LengthUnit unit = LengthUnit::tokens;
    EntropyOptions entropy;
    MarkerScope marker_scope = MarkerScope::whole_output;
    DiscoveryConfig discovery;
    unsigned threads = 1;

    PromptKind prompt_kind = PromptKind::numeric;
    bool reasoning_tags = true;
    EndpointConfig endpoint;
    EndpointConfig judge_endpoint;

    EceOptions ece;
    int heatmap_vc_bins = 10;
    int heatmap_tl_bins = 10;

    SyntheticSpec synth;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Returns the number of valid questions.
std::size_t cmd_questions_validate(const RunConfig& config);

struct GenerateSummary {
    std::size_t records = 0;
    std::size_t failures = 0;
    std::size_t missing_logprobs = 0;
};
/// `endpoint` overrides the configured HTTP endpoint (tests, mocks).
GenerateSummary cmd_generate(const RunConfig& config, ChatEndpoint* endpoint = nullptr);

struct JudgeSummary {
    std::size_t verdicts = 0;
    std::size_t failures = 0;
    std::size_t exact_matches = 0;
    std::size_t judge_calls = 0;
};
JudgeSummary cmd_judge(const RunConfig& config, ChatEndpoint* endpoint = nullptr);

/// Writes a synthetic question file, labeled generations and verdicts.
void cmd_synth(const RunConfig& config);

struct ScoreSummary {
    std::vector<std::string> columns;
    std::map<std::string, std::size_t> missing;  // per column
    std::map<std::string, std::size_t> fusion_excluded;
    std::size_t rows = 0;
};

/// Computes the selected estimator columns for a record list (library form
/// of cmd_score; the CLI adds only file I/O).
std::vector<ConfidenceScore> score_records(std::span<const GenerationRecord> records, const RunConfig& config,
                                           std::span<const ForkingTokenSet> token_sets, ScoreSummary* summary = nullptr);

ScoreSummary cmd_score(const RunConfig& config);

/// One token set per dataset label present in the generations.
std::vector<ForkingTokenSet> cmd_discover(const RunConfig& config);

struct EvalSummary {
    std::vector<EvalReport> reports;
    std::string table;  // rendered AUROC x 100 table
};
EvalSummary cmd_eval(const RunConfig& config);

/// Renders the AUROC table: one row per dataset (plus ALL), one column per
/// estimator, AUROC x 100 with one decimal, best value in a row starred.
std::string render_auroc_table(const std::vector<EvalReport>& reports);

/// Returns the files written.
std::vector<std::filesystem::path> cmd_report(const RunConfig& config);

}  // namespace traceconf::cli
