#pragma once

// Answer / verbalized-confidence grammars and epistemic-marker counting.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traceconf/records.hpp"

namespace traceconf {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

struct ReasoningSplit {
    std::string think;
    std::string final;
    bool closed = false;  // false when no closing tag was found
};

/// Splits at the first closing reasoning tag. The tag belongs to neither
/// segment, and an opening tag ahead of it is stripped from `think`.
/// Without a closing tag the whole text is reasoning and `final` is empty.
ReasoningSplit split_reasoning(std::string_view raw_text);

struct LinguisticBucket {
    std::string phrase;
    double low = 0.0;
    double high = 0.0;

    double midpoint() const { return (low + high) / 2.0; }
};

/// The ten-class phrase table of the linguistic prompt. Verbalized phrases
/// map to the middle of their bucket.
class LinguisticScale {
public:
    LinguisticScale() = default;
    /// Throws ParseError unless the buckets tile [0, 1] contiguously and
    /// phrases are distinct (case-insensitively).
    explicit LinguisticScale(std::vector<LinguisticBucket> buckets);

    static const LinguisticScale& standard();

    const std::vector<LinguisticBucket>& buckets() const { return buckets_; }

    /// Looks a phrase up after trimming; casing is ignored unless
    /// `exact_case` is set.
    const LinguisticBucket* find(std::string_view phrase, bool exact_case = false) const;

private:
    std::vector<LinguisticBucket> buckets_;
};

/// Words counted as epistemic markers. A match ignores case and must end at
/// a word boundary; with `leading_boundary` it must also start at one.
struct MarkerPatternSet {
    std::string id = "default";
    std::vector<std::string> words;
    bool leading_boundary = true;

    static MarkerPatternSet standard();
};

struct ExtractionOptions {
    bool exact_case = false;
    const LinguisticScale* scale = nullptr;  // null: standard scale
};

/// Text after the last "**Answer**:" up to the following "**Confidence**:"
/// (or end), trimmed. Absent when there is no marker or nothing follows it.
std::optional<std::string> extract_answer(std::string_view text);

struct ConfidenceExtraction {
    std::optional<ParsedConfidence> confidence;
    std::optional<std::string> raw;  // captured string, kept even on failure
    std::string failure;             // empty on success
};

/// Parses the value following the last "**Confidence**:" marker according to
/// the grammar of `kind`. Never throws; failures are reported in the result.
ConfidenceExtraction extract_confidence(std::string_view text, PromptKind kind,
                                        const ExtractionOptions& options = {});

/// Runs both grammars over a record. The post-reasoning segment is searched
/// first; when it is empty (e.g. truncated generations) the full raw text is
/// searched instead and the result is marked truncated.
Extraction extract_record(const GenerationRecord& record, const ExtractionOptions& options = {});

/// Total occurrences of all marker words in `text`.
std::size_t count_markers(std::string_view text, const MarkerPatternSet& patterns);

/// Loads {"markers": [...], "leading_boundary": bool, "id": str,
///        "linguistic_scale": [{"phrase", "low", "high"}]} from a JSON file.
/// Missing sections fall back to the standard tables.
struct ExtractionConfig {
    MarkerPatternSet markers = MarkerPatternSet::standard();
    LinguisticScale scale = LinguisticScale::standard();
};
ExtractionConfig load_extraction_config(const std::filesystem::path& path);

}  // namespace traceconf
