#pragma once

// Per-record confidence scores. Every estimator is oriented so that a larger
// value predicts a correct answer: lengths, counts and entropies are negated,
// verbalized confidence and log-likelihood are used as is.

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "traceconf/extraction.hpp"
#include "traceconf/records.hpp"

namespace traceconf {

/// Identity of a score column, e.g. "TL", "FT(gsm8k)", "FUSED(VC,TL)".
struct EstimatorKind {
    enum class Family { TL, VC, SP, SUMENT, FT, EM, FUSED };

    Family family = Family::TL;
    std::string set_id;                  // FT token set / EM pattern set
    std::vector<EstimatorKind> members;  // FUSED only

    static EstimatorKind tl() { return {Family::TL, {}, {}}; }
    static EstimatorKind vc() { return {Family::VC, {}, {}}; }
    static EstimatorKind sp() { return {Family::SP, {}, {}}; }
    static EstimatorKind sument() { return {Family::SUMENT, {}, {}}; }
    static EstimatorKind ft(std::string set_id) { return {Family::FT, std::move(set_id), {}}; }
    static EstimatorKind em(std::string set_id) { return {Family::EM, std::move(set_id), {}}; }
    /// Throws DegenerateInputError unless there are >= 2 distinct members.
    static EstimatorKind fused(std::vector<EstimatorKind> members);

    std::string name() const;
    /// Parses the output of name(). "FT" / "EM" without a set id are allowed.
    static EstimatorKind parse(std::string_view text);

    bool operator==(const EstimatorKind&) const = default;
};

struct ConfidenceScore {
    std::string question_id;
    EstimatorKind estimator;
    double value = 0.0;
    bool missing = false;
    bool fallback = false;  // computed by a documented fallback path

    static ConfidenceScore absent(std::string question_id, EstimatorKind estimator) {
        return {std::move(question_id), std::move(estimator), 0.0, true, false};
    }
};

enum class LengthUnit { tokens, characters };

/// Token or code-point count of the reasoning plus final segments, negated.
/// Records without token steps fall back to whitespace-separated words and
/// are flagged.
ConfidenceScore trace_length(const GenerationRecord& record, LengthUnit unit = LengthUnit::tokens);

/// Parsed verbalized confidence in [0, 1]; missing when extraction failed or
/// the record was never extracted.
ConfidenceScore verbal_confidence(const GenerationRecord& record);

struct EntropyOptions {
    int k_top = 30;
    bool renormalize = true;  // false: use raw top-k masses (sub-distribution)
};

/// Entropy in nats of the distribution over the min(k_top, available) most
/// likely alternatives at a step. Throws DegenerateInputError when the step
/// carries no alternatives or k_top < 1.
double token_entropy(const TokenStep& step, const EntropyOptions& options = {});
double token_entropy(const TokenStep& step, int k_top);

/// Negated total entropy over all steps; missing without token steps.
ConfidenceScore sum_entropy(const GenerationRecord& record, const EntropyOptions& options = {});

/// Sum of sampled-token logprobs; missing without token steps.
ConfidenceScore sequence_probability(const GenerationRecord& record);

using TokenSet = std::set<std::string, std::less<>>;

/// Negated number of steps whose sampled token string is exactly a member.
ConfidenceScore forking_count(const GenerationRecord& record, const TokenSet& set,
                              std::string set_id = {});

enum class MarkerScope { whole_output, reasoning_only };

/// Negated epistemic-marker count over the output (or the reasoning segment).
ConfidenceScore marker_count(const GenerationRecord& record, const MarkerPatternSet& patterns,
                             MarkerScope scope = MarkerScope::whole_output);

struct FusionResult {
    std::vector<ConfidenceScore> scores;  // in the order of the first column
    std::size_t excluded = 0;             // rows dropped for a missing member
};

/// Standardizes each column (population mean / std over the rows present in
/// every column) and sums them. Columns are joined on question_id; rows
/// missing from any column are excluded. A zero-variance column contributes
/// 0. Throws DegenerateInputError for fewer than 2 columns or fewer than 2
/// usable rows.
FusionResult zscore_fuse(std::span<const std::vector<ConfidenceScore>> columns);

/// Score files: one {question_id, estimator, value|null, missing} object per
/// line, optionally preceded by a provenance header line.
nlohmann::json to_json(const ConfidenceScore& score);
ConfidenceScore score_from_json(const nlohmann::json& j);
void write_scores(const std::filesystem::path& path, std::span<const ConfidenceScore> scores,
                  const nlohmann::json& meta = nullptr);
std::vector<ConfidenceScore> load_scores(const std::filesystem::path& path);

/// Bundle of settings every estimator needs when scoring a whole corpus.
struct EstimatorSettings {
    LengthUnit unit = LengthUnit::tokens;
    EntropyOptions entropy;
    MarkerPatternSet markers = MarkerPatternSet::standard();
    MarkerScope marker_scope = MarkerScope::whole_output;
};

}  // namespace traceconf
