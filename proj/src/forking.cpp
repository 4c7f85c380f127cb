#include "traceconf/forking.hpp"

#include <algorithm>
#include <map>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "traceconf/error.hpp"
#include "traceconf/metrics.hpp"
#include "traceconf/summation.hpp"

namespace traceconf {

using nlohmann::json;

TokenSet ForkingTokenSet::first(std::size_t k) const {
    TokenSet out;
    for (std::size_t i = 0; i < std::min(k, tokens.size()); ++i) out.insert(tokens[i].token);
    return out;
}

namespace {

struct TokenAccumulator {
    std::vector<double> entropies;
    std::size_t occurrences = 0;
    std::size_t responses = 0;
};

using AccumulatorMap = std::unordered_map<std::string, TokenAccumulator>;

void accumulate(std::span<const GenerationRecord> records, const EntropyOptions& opts, AccumulatorMap& acc) {
    for (const auto& record : records) {
        std::unordered_set<std::string_view> in_record;
        for (const auto& step : record.tokens) {
            double h = 0.0;
            if (!step.top.empty()) {
                h = token_entropy(step, opts);
            } else if (step.entropy) {
                h = *step.entropy;
            } else {
                continue;
            }
            auto& a = acc[step.token];
            a.entropies.push_back(h);
            ++a.occurrences;
            if (in_record.insert(step.token).second) ++a.responses;
        }
    }
}

// Labeled records with token steps, and per-candidate occurrence counts.
struct CountTable {
    std::vector<bool> labels;
    std::vector<std::vector<double>> counts;  // [candidate][record]
};

CountTable count_table(std::span<const GenerationRecord> records, std::span<const std::string> candidates) {
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t c = 0; c < candidates.size(); ++c) index.emplace(candidates[c], c);
    CountTable t;
    t.counts.assign(candidates.size(), {});
    for (const auto& r : records) {
        if (!r.correct || r.tokens.empty()) continue;
        t.labels.push_back(*r.correct);
        for (auto& col : t.counts) col.push_back(0.0);
        for (const auto& step : r.tokens) {
            if (auto it = index.find(step.token); it != index.end()) t.counts[it->second].back() += 1.0;
        }
    }
    return t;
}

// AUROC of the negated count (more occurrences predicts incorrect).
double count_auroc(const std::vector<double>& totals, const std::vector<bool>& labels) {
    std::vector<EvalInstance> inst(totals.size());
    for (std::size_t i = 0; i < totals.size(); ++i) inst[i] = {-totals[i], labels[i], std::nullopt};
    return auroc(inst);
}

std::vector<std::string> token_names(const ForkingTokenSet& set) {
    std::vector<std::string> out;
    for (const auto& t : set.tokens) out.push_back(t.token);
    return out;
}

}  // namespace

std::vector<TokenEntropyStat> aggregate_token_entropy(std::span<const GenerationRecord> records,
                                                      const DiscoveryConfig& config, unsigned threads) {
    const bool any_tokens =
        std::any_of(records.begin(), records.end(), [](const GenerationRecord& r) { return !r.tokens.empty(); });
    if (!any_tokens) throw DegenerateInputError("no record carries token logprobs; discovery needs them");

    const EntropyOptions opts{config.k_top, config.renormalize};
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(records.size())));
    std::vector<AccumulatorMap> partial(threads);
    const std::size_t chunk = (records.size() + threads - 1) / threads;
    {
        std::vector<std::jthread> workers;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t begin = std::min(records.size(), t * chunk);
            const std::size_t end = std::min(records.size(), begin + chunk);
            workers.emplace_back([&, t, begin, end] { accumulate(records.subspan(begin, end - begin), opts, partial[t]); });
        }
    }

    std::map<std::string, TokenAccumulator> merged;
    for (auto& part : partial) {
        for (auto& [token, a] : part) {
            auto& m = merged[token];
            m.entropies.insert(m.entropies.end(), a.entropies.begin(), a.entropies.end());
            m.occurrences += a.occurrences;
            m.responses += a.responses;
        }
    }
    std::vector<TokenEntropyStat> out;
    out.reserve(merged.size());
    for (auto& [token, a] : merged) {
        out.push_back({token, stable_mean(std::move(a.entropies)), a.occurrences, a.responses});
    }
    return out;
}

ForkingTokenSet select_forking_tokens(std::span<const TokenEntropyStat> stats, const DiscoveryConfig& config,
                                      std::string dataset) {
    if (config.k_top < 1 || config.min_responses < 1 || config.top_n < 1) {
        throw DegenerateInputError("discovery config values must be positive");
    }
    ForkingTokenSet set{std::move(dataset), {}, config};
    for (const auto& s : stats) {
        if (s.response_count >= static_cast<std::size_t>(config.min_responses)) set.tokens.push_back(s);
    }
    if (set.tokens.empty()) {
        throw DegenerateInputError("no token appears in at least " + std::to_string(config.min_responses) +
                                   " responses; lower min_responses for small corpora");
    }
    std::sort(set.tokens.begin(), set.tokens.end(), [](const TokenEntropyStat& a, const TokenEntropyStat& b) {
        if (a.mean_entropy != b.mean_entropy) return a.mean_entropy > b.mean_entropy;
        if (a.response_count != b.response_count) return a.response_count > b.response_count;
        return a.token < b.token;
    });
    if (set.tokens.size() > static_cast<std::size_t>(config.top_n)) set.tokens.resize(config.top_n);
    return set;
}

std::vector<CurvePoint> cumulative_auroc_curve(std::span<const GenerationRecord> records,
                                               const ForkingTokenSet& set) {
    const auto names = token_names(set);
    const CountTable table = count_table(records, names);
    std::vector<CurvePoint> curve{{0, 0.5}};
    std::vector<double> totals(table.labels.size(), 0.0);
    if (names.empty()) {
        count_auroc(totals, table.labels);  // surfaces degenerate labels
        return curve;
    }
    for (std::size_t k = 1; k <= names.size(); ++k) {
        const auto& col = table.counts[k - 1];
        for (std::size_t i = 0; i < totals.size(); ++i) totals[i] += col[i];
        curve.push_back({k, count_auroc(totals, table.labels)});
    }
    return curve;
}

GreedyResult greedy_working_set(std::span<const GenerationRecord> records,
                                std::span<const std::string> candidates, std::size_t steps) {
    if (candidates.empty()) throw DegenerateInputError("greedy selection needs at least one candidate");
    const CountTable table = count_table(records, candidates);
    GreedyResult result;
    std::vector<double> totals(table.labels.size(), 0.0);
    std::vector<bool> used(candidates.size(), false);
    std::vector<double> trial(totals.size());
    steps = std::min(steps, candidates.size());
    for (std::size_t step = 0; step < steps; ++step) {
        std::size_t best = candidates.size();
        double best_auroc = -1.0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (used[c]) continue;
            for (std::size_t i = 0; i < totals.size(); ++i) trial[i] = totals[i] + table.counts[c][i];
            const double a = count_auroc(trial, table.labels);
            if (a > best_auroc) {
                best_auroc = a;
                best = c;
            }
        }
        used[best] = true;
        for (std::size_t i = 0; i < totals.size(); ++i) totals[i] += table.counts[best][i];
        result.tokens.push_back(candidates[best]);
        result.trajectory.push_back(best_auroc);
    }
    return result;
}

GreedyResult greedy_working_set(std::span<const GenerationRecord> records, const ForkingTokenSet& set,
                                std::size_t steps) {
    const auto names = token_names(set);
    return greedy_working_set(records, names, steps);
}

BestToken best_forking_token(std::span<const GenerationRecord> records, const ForkingTokenSet& set) {
    if (set.tokens.empty()) throw DegenerateInputError("best forking token of an empty set");
    const auto names = token_names(set);
    const CountTable table = count_table(records, names);
    BestToken best{{}, -1.0};
    for (std::size_t c = 0; c < names.size(); ++c) {
        const double a = count_auroc(table.counts[c], table.labels);
        if (a > best.auroc) best = {names[c], a};
    }
    return best;
}

json to_json(const DiscoveryConfig& c) {
    return {{"k_top", c.k_top},           {"min_responses", c.min_responses}, {"top_n", c.top_n},
            {"renormalize", c.renormalize}, {"temperature", c.temperature},     {"max_tokens", c.max_tokens}};
}

DiscoveryConfig discovery_config_from_json(const json& j) {
    DiscoveryConfig c;
    c.k_top = j.value("k_top", c.k_top);
    c.min_responses = j.value("min_responses", c.min_responses);
    c.top_n = j.value("top_n", c.top_n);
    c.renormalize = j.value("renormalize", c.renormalize);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    return c;
}

json to_json(const ForkingTokenSet& set) {
    json tokens = json::array();
    for (const auto& t : set.tokens) {
        tokens.push_back({{"token", t.token},
                          {"mean_entropy", t.mean_entropy},
                          {"occurrence_count", t.occurrence_count},
                          {"response_count", t.response_count}});
    }
    return {{"dataset", set.dataset}, {"config", to_json(set.config)}, {"tokens", std::move(tokens)}};
}

ForkingTokenSet forking_set_from_json(const json& j) {
    ForkingTokenSet set;
    set.dataset = j.value("dataset", "");
    if (auto it = j.find("config"); it != j.end()) set.config = discovery_config_from_json(*it);
    for (const auto& t : j.at("tokens")) {
        set.tokens.push_back({t.at("token").get<std::string>(), t.at("mean_entropy").get<double>(),
                              t.value("occurrence_count", std::size_t{0}), t.value("response_count", std::size_t{0})});
    }
    return set;
}

void write_forking_sets(const std::filesystem::path& path, std::span<const ForkingTokenSet> sets) {
    std::vector<json> lines;
    for (const auto& s : sets) lines.push_back(to_json(s));
    write_jsonl(path, lines);
}

std::vector<ForkingTokenSet> load_forking_sets(const std::filesystem::path& path) {
    std::vector<ForkingTokenSet> out;
    for (const auto& j : read_jsonl(path)) {
        try {
            out.push_back(forking_set_from_json(j));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace traceconf
