#pragma once

// Forking-token discovery: per-token mean entropy of the next-token
// distribution, the min-response filter, and AUROC of token-count scores
// (cumulative top-k curve, greedy working set, best single token).

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "traceconf/estimators.hpp"
#include "traceconf/records.hpp"

namespace traceconf {

struct DiscoveryConfig {
    int k_top = 30;
    int min_responses = 20;
    int top_n = 50;
    bool renormalize = true;
    // Generation settings recorded for provenance only.
    double temperature = 1.0;
    int max_tokens = 8192;

    bool operator==(const DiscoveryConfig&) const = default;
};

struct TokenEntropyStat {
    std::string token;
    double mean_entropy = 0.0;  // nats, averaged over occurrences
    std::size_t occurrence_count = 0;
    std::size_t response_count = 0;

    bool operator==(const TokenEntropyStat&) const = default;
};

struct ForkingTokenSet {
    std::string dataset;
    std::vector<TokenEntropyStat> tokens;  // descending mean_entropy
    DiscoveryConfig config;

    /// The first k members (all when k exceeds the size).
    TokenSet first(std::size_t k) const;
    TokenSet all() const { return first(tokens.size()); }

    bool operator==(const ForkingTokenSet&) const = default;
};

/// Mean entropy at every step whose sampled token equals the token, over all
/// records. Results are sorted by token string and do not depend on record
/// order or `threads`. Steps without alternatives use their cached entropy
/// when present and are skipped otherwise. Throws DegenerateInputError when
/// no record carries token steps.
std::vector<TokenEntropyStat> aggregate_token_entropy(std::span<const GenerationRecord> records,
                                                      const DiscoveryConfig& config,
                                                      unsigned threads = 1);

/// Keeps tokens seen in >= min_responses records, orders them by mean
/// entropy (ties: more responses, then lexicographic) and keeps top_n.
/// Throws DegenerateInputError when nothing survives the filter.
ForkingTokenSet select_forking_tokens(std::span<const TokenEntropyStat> stats, const DiscoveryConfig& config,
                                      std::string dataset = {});

struct CurvePoint {
    std::size_t k = 0;
    double auroc = 0.5;
};

/// AUROC of the count of any of the first k set tokens, for k = 0..|set|.
/// The k = 0 row is the 0.5 chance marker. Uses records that carry a label
/// and token steps; throws DegenerateInputError if those are single-class.
std::vector<CurvePoint> cumulative_auroc_curve(std::span<const GenerationRecord> records,
                                               const ForkingTokenSet& set);

struct GreedyResult {
    std::vector<std::string> tokens;  // in the order added
    std::vector<double> trajectory;   // AUROC after each addition
};

/// Grows a working set one token at a time, always adding the candidate
/// whose inclusion gives the highest AUROC (even when that is no
/// improvement). Ties go to the candidate listed first. Runs for
/// min(steps, |candidates|) steps.
GreedyResult greedy_working_set(std::span<const GenerationRecord> records,
                                std::span<const std::string> candidates, std::size_t steps);
GreedyResult greedy_working_set(std::span<const GenerationRecord> records, const ForkingTokenSet& set,
                                std::size_t steps);

struct BestToken {
    std::string token;
    double auroc = 0.5;
};

/// Set member whose single-token count has the highest AUROC; ties go to
/// the higher mean entropy (earlier in the set).
BestToken best_forking_token(std::span<const GenerationRecord> records, const ForkingTokenSet& set);

nlohmann::json to_json(const DiscoveryConfig& config);
DiscoveryConfig discovery_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ForkingTokenSet& set);
ForkingTokenSet forking_set_from_json(const nlohmann::json& j);

/// Token-set files hold one ForkingTokenSet object per line (one per dataset).
void write_forking_sets(const std::filesystem::path& path, std::span<const ForkingTokenSet> sets);
std::vector<ForkingTokenSet> load_forking_sets(const std::filesystem::path& path);

}  // namespace traceconf
