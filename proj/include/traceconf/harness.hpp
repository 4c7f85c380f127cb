#pragma once

// Drives a chat endpoint over a question set and adjudicates answers.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "traceconf/client.hpp"
#include "traceconf/extraction.hpp"
#include "traceconf/prompts.hpp"
#include "traceconf/records.hpp"

namespace traceconf {

struct FailureEntry {
    std::string question_id;
    std::string stage;  // "generate" or "judge"
    std::string error;
    int attempts = 0;
};

nlohmann::json to_json(const FailureEntry& f);

struct RunSettings {
    int max_concurrent = 8;
    int attempts = 3;
    int backoff_ms = 500;
    double temperature = 0.0;  // recorded in gen_params
    int max_tokens = 4096;
};

RunSettings run_settings(const EndpointConfig& config);

struct GenerateResult {
    std::vector<GenerationRecord> records;  // question order, failures omitted
    std::vector<FailureEntry> failures;
    std::size_t missing_logprobs = 0;       // responses that came back without logprobs
};

/// One generation per question, issued with at most `max_concurrent`
/// requests in flight. Records are extracted before they are returned.
/// A ProtocolError from the endpoint aborts the run and is rethrown.
GenerateResult generate(std::span<const Question> questions, const PromptTemplate& tmpl, ChatEndpoint& endpoint,
                        const RunSettings& settings, const ExtractionOptions& extraction = {});

struct JudgeResult {
    std::vector<Verdict> verdicts;  // record order
    std::vector<FailureEntry> failures;
    std::size_t exact_matches = 0;
    std::size_t judge_calls = 0;
};

/// Parses a judge reply: after any reasoning block, the first word must be
/// yes/no (case-insensitive, punctuation ignored).
std::optional<bool> parse_judge_reply(std::string_view reply);

/// Normalized exact match of an answer against the gold list (trimmed,
/// case-insensitive).
bool exact_match(std::string_view answer, std::span<const std::string> gold);

/// One verdict per record. Records without an extracted answer are judged
/// incorrect without a call; exact gold matches are judged correct without
/// a call; the rest go to the judge endpoint.
JudgeResult judge(std::span<const GenerationRecord> records, std::span<const Question> questions,
                  ChatEndpoint& judge_endpoint, const std::string& judge_template, const RunSettings& settings);

void write_failures(const std::filesystem::path& path, std::span<const FailureEntry> failures);

}  // namespace traceconf
