#pragma once

// Data model for questions, generations and verdicts, plus the
// line-delimited JSON files they live in.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace traceconf {

enum class PromptKind { linguistic, numeric, topk, answer_only };

std::string_view to_string(PromptKind kind);
/// Throws ParseError on an unrecognised name.
PromptKind parse_prompt_kind(std::string_view name);

struct Question {
    std::string id;
    std::string dataset;
    std::string text;
    std::vector<std::string> choices;
    std::vector<std::string> gold;
    std::optional<int> difficulty;

    bool operator==(const Question&) const = default;
};

struct TokenAlternative {
    std::string token;
    double logprob = 0.0;

    bool operator==(const TokenAlternative&) const = default;
};

/// One sampled token with the endpoint's top-k alternatives at that step.
/// `top` is kept sorted by descending logprob.
struct TokenStep {
    std::string token;
    double logprob = 0.0;
    std::vector<TokenAlternative> top;
    std::optional<double> entropy;  // nats, cached by whoever computed it

    bool operator==(const TokenStep&) const = default;
};

enum class ConfidenceKind { linguistic_phrase, numeric_0_100, topk_numeric };

std::string_view to_string(ConfidenceKind kind);
ConfidenceKind parse_confidence_kind(std::string_view name);

struct ParsedConfidence {
    ConfidenceKind kind = ConfidenceKind::numeric_0_100;
    std::string raw;
    double value = 0.0;  // probability in [0, 1]

    bool operator==(const ParsedConfidence&) const = default;
};

/// Outcome of running the answer/confidence grammar over one record.
/// Failures are values: `failures` lists short reason codes and the raw
/// captured confidence string is kept for audit even when it did not parse.
struct Extraction {
    std::optional<std::string> answer;
    std::optional<ParsedConfidence> confidence;
    std::optional<std::string> confidence_raw;
    std::vector<std::string> failures;
    bool truncated = false;  // reasoning never closed; searched raw_text

    bool operator==(const Extraction&) const = default;
};

struct GenParams {
    double temperature = 0.0;
    int max_tokens = 4096;
    std::string endpoint;

    bool operator==(const GenParams&) const = default;
};

struct GenerationRecord {
    std::string question_id;
    std::string dataset;  // copied from the question; empty when unknown
    PromptKind prompt_kind = PromptKind::answer_only;
    std::string raw_text;
    std::string think_text;
    std::string final_text;
    bool reasoning_closed = false;
    std::vector<TokenStep> tokens;
    std::optional<Extraction> extracted;
    std::optional<bool> correct;
    GenParams gen_params;

    /// Replaces raw_text and re-derives the think/final segments.
    void set_raw_text(std::string text);

    const std::optional<std::string>& extracted_answer() const;
    std::optional<ParsedConfidence> extracted_confidence() const;

    bool operator==(const GenerationRecord&) const = default;
};

struct Verdict {
    std::string question_id;
    bool correct = false;
    std::string reason;

    bool operator==(const Verdict&) const = default;
};

// JSON mapping. Field names are the on-disk schema.
nlohmann::json to_json(const Question& q);
nlohmann::json to_json(const TokenStep& step);
nlohmann::json to_json(const GenerationRecord& record);
nlohmann::json to_json(const Verdict& verdict);

Question question_from_json(const nlohmann::json& j);
/// Validates logprobs (<= 0) and the prompt kind; sorts alternatives.
GenerationRecord generation_from_json(const nlohmann::json& j);
Verdict verdict_from_json(const nlohmann::json& j);

/// Reads a JSONL file. Blank lines and lines whose object carries a
/// "_meta" key (provenance headers) are skipped. Errors name the line.
std::vector<Question> load_questions(const std::filesystem::path& path);
std::vector<GenerationRecord> load_generations(const std::filesystem::path& path);
std::vector<Verdict> load_verdicts(const std::filesystem::path& path);

void write_questions(const std::filesystem::path& path, std::span<const Question> questions);
void write_generations(const std::filesystem::path& path,
                       std::span<const GenerationRecord> records,
                       const nlohmann::json& meta = nullptr);
void write_verdicts(const std::filesystem::path& path, std::span<const Verdict> verdicts,
                    const nlohmann::json& meta = nullptr);

/// Labels records from verdicts. Every verdict must name a known question id;
/// repeated verdicts for one id must agree. Unjudged records keep `correct`
/// absent.
std::vector<GenerationRecord> merge_verdicts(std::vector<GenerationRecord> records,
                                             std::span<const Verdict> verdicts);

/// Shared JSONL plumbing, exposed for the score and token-set files.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const nlohmann::json> lines);

}  // namespace traceconf
