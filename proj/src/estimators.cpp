#include "traceconf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "traceconf/error.hpp"
#include "traceconf/summation.hpp"

namespace traceconf {

namespace {

std::size_t count_code_points(std::string_view s) {
    std::size_t n = 0;
    for (char c : s) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::size_t count_words(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::string family_name(EstimatorKind::Family f) {
    using F = EstimatorKind::Family;
    switch (f) {
        case F::TL: return "TL";
        case F::VC: return "VC";
        case F::SP: return "SP";
        case F::SUMENT: return "SUMENT";
        case F::FT: return "FT";
        case F::EM: return "EM";
        case F::FUSED: return "FUSED";
    }
    return "TL";
}

}  // namespace

EstimatorKind EstimatorKind::fused(std::vector<EstimatorKind> members) {
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (members[i] == members[j]) {
                throw DegenerateInputError("FUSED lists " + members[i].name() + " twice");
            }
        }
    }
    if (members.size() < 2) throw DegenerateInputError("FUSED needs at least two distinct members");
    return {Family::FUSED, {}, std::move(members)};
}

std::string EstimatorKind::name() const {
    std::string out = family_name(family);
    if (family == Family::FUSED) {
        out += '(';
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i) out += ',';
            out += members[i].name();
        }
        out += ')';
    } else if (!set_id.empty()) {
        out += '(' + set_id + ')';
    }
    return out;
}

EstimatorKind EstimatorKind::parse(std::string_view text) {
    auto fail = [&] { return ParseError("unknown estimator '" + std::string(text) + "'"); };
    const std::size_t paren = text.find('(');
    const std::string_view head = text.substr(0, paren);
    std::string_view inner;
    if (paren != std::string_view::npos) {
        if (!text.ends_with(')')) throw fail();
        inner = text.substr(paren + 1, text.size() - paren - 2);
    }
    if (head == "FUSED" || head == "FUSE") {
        std::vector<EstimatorKind> members;
        int depth = 0;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= inner.size(); ++i) {
            if (i == inner.size() || (inner[i] == ',' && depth == 0)) {
                members.push_back(parse(inner.substr(start, i - start)));
                start = i + 1;
            } else if (inner[i] == '(') {
                ++depth;
            } else if (inner[i] == ')') {
                --depth;
            }
        }
        return fused(std::move(members));
    }
    if (head == "FT") return ft(std::string(inner));
    if (head == "EM") return em(std::string(inner));
    if (!inner.empty()) throw fail();
    if (head == "TL") return tl();
    if (head == "VC") return vc();
    if (head == "SP") return sp();
    if (head == "SUMENT") return sument();
    throw fail();
}

ConfidenceScore trace_length(const GenerationRecord& record, LengthUnit unit) {
    ConfidenceScore s{record.question_id, EstimatorKind::tl(), 0.0, false, false};
    if (unit == LengthUnit::characters) {
        s.value = -static_cast<double>(count_code_points(record.think_text) +
                                       count_code_points(record.final_text));
    } else if (!record.tokens.empty()) {
        s.value = -static_cast<double>(record.tokens.size());
    } else {
        s.value = -static_cast<double>(count_words(record.think_text) + count_words(record.final_text));
        s.fallback = true;
    }
    return s;
}

ConfidenceScore verbal_confidence(const GenerationRecord& record) {
    if (auto c = record.extracted_confidence()) {
        return {record.question_id, EstimatorKind::vc(), c->value, false, false};
    }
    return ConfidenceScore::absent(record.question_id, EstimatorKind::vc());
}

double token_entropy(const TokenStep& step, const EntropyOptions& options) {
    if (options.k_top < 1) throw DegenerateInputError("k_top must be at least 1");
    if (step.top.empty()) throw DegenerateInputError("token step '" + step.token + "' has no alternatives");

    std::vector<double> lps;
    lps.reserve(step.top.size());
    for (const auto& alt : step.top) lps.push_back(alt.logprob);
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(options.k_top), lps.size());
    std::partial_sort(lps.begin(), lps.begin() + static_cast<std::ptrdiff_t>(m), lps.end(),
                      std::greater<>());
    lps.resize(m);

    std::vector<double> terms;
    terms.reserve(m);
    if (options.renormalize) {
        const double peak = lps.front();
        if (!std::isfinite(peak)) throw DegenerateInputError("token step has no finite alternative");
        std::vector<double> shifted;
        for (double lp : lps) shifted.push_back(std::exp(lp - peak));
        const double log_z = std::log(compensated_sum(shifted));
        for (std::size_t i = 0; i < m; ++i) {
            if (shifted[i] == 0.0) continue;
            const double log_p = lps[i] - peak - log_z;
            terms.push_back(-std::exp(log_p) * log_p);
        }
    } else {
        for (double lp : lps) {
            if (!std::isfinite(lp)) continue;
            terms.push_back(-std::exp(lp) * lp);
        }
    }
    return std::max(0.0, compensated_sum(terms));
}

double token_entropy(const TokenStep& step, int k_top) {
    return token_entropy(step, EntropyOptions{k_top, true});
}

ConfidenceScore sum_entropy(const GenerationRecord& record, const EntropyOptions& options) {
    if (record.tokens.empty()) return ConfidenceScore::absent(record.question_id, EstimatorKind::sument());
    std::vector<double> h;
    h.reserve(record.tokens.size());
    for (const auto& step : record.tokens) {
        if (!step.top.empty()) {
            h.push_back(token_entropy(step, options));
        } else if (step.entropy) {
            h.push_back(*step.entropy);
        }
    }
    return {record.question_id, EstimatorKind::sument(), -compensated_sum(h), false, false};
}

ConfidenceScore sequence_probability(const GenerationRecord& record) {
    if (record.tokens.empty()) return ConfidenceScore::absent(record.question_id, EstimatorKind::sp());
    std::vector<double> lps;
    lps.reserve(record.tokens.size());
    for (const auto& step : record.tokens) lps.push_back(step.logprob);
    return {record.question_id, EstimatorKind::sp(), compensated_sum(lps), false, false};
}

ConfidenceScore forking_count(const GenerationRecord& record, const TokenSet& set, std::string set_id) {
    EstimatorKind kind = EstimatorKind::ft(std::move(set_id));
    if (record.tokens.empty()) return ConfidenceScore::absent(record.question_id, std::move(kind));
    std::size_t count = 0;
    for (const auto& step : record.tokens) count += set.contains(step.token) ? 1 : 0;
    return {record.question_id, std::move(kind), -static_cast<double>(count), false, false};
}

ConfidenceScore marker_count(const GenerationRecord& record, const MarkerPatternSet& patterns,
                             MarkerScope scope) {
    const std::string_view text =
        scope == MarkerScope::whole_output ? std::string_view(record.raw_text) : std::string_view(record.think_text);
    return {record.question_id, EstimatorKind::em(patterns.id),
            -static_cast<double>(count_markers(text, patterns)), false, false};
}

FusionResult zscore_fuse(std::span<const std::vector<ConfidenceScore>> columns) {
    if (columns.size() < 2) throw DegenerateInputError("fusion needs at least two score columns");
    std::vector<EstimatorKind> kinds;
    for (const auto& col : columns) {
        if (col.empty()) throw DegenerateInputError("fusion received an empty score column");
        kinds.push_back(col.front().estimator);
    }
    const EstimatorKind fused_kind = EstimatorKind::fused(kinds);

    // Join on (question_id, occurrence ordinal) so repeated ids pair up in order.
    using Key = std::pair<std::string, std::size_t>;
    auto keyed = [](const std::vector<ConfidenceScore>& col) {
        std::map<Key, const ConfidenceScore*> out;
        std::map<std::string, std::size_t> seen;
        for (const auto& s : col) out[{s.question_id, seen[s.question_id]++}] = &s;
        return out;
    };
    std::vector<std::map<Key, const ConfidenceScore*>> index;
    for (std::size_t c = 1; c < columns.size(); ++c) index.push_back(keyed(columns[c]));

    struct Row {
        std::string id;
        std::vector<double> values;
    };
    std::vector<Row> rows;
    FusionResult result;
    std::map<std::string, std::size_t> seen;
    for (const auto& s : columns[0]) {
        const Key key{s.question_id, seen[s.question_id]++};
        Row row{s.question_id, {}};
        bool usable = !s.missing;
        row.values.push_back(s.value);
        for (const auto& idx : index) {
            auto it = idx.find(key);
            if (it == idx.end() || it->second->missing) {
                usable = false;
                break;
            }
            row.values.push_back(it->second->value);
        }
        if (usable) {
            rows.push_back(std::move(row));
        } else {
            ++result.excluded;
        }
    }
    if (rows.size() < 2) {
        throw DegenerateInputError("fusion needs at least 2 rows with every member present, got " +
                                   std::to_string(rows.size()));
    }

    const std::size_t n = rows.size();
    std::vector<double> fused(n, 0.0);
    std::vector<std::vector<double>> standardized(n);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = rows[i].values[c];
        const double mean = stable_mean(col);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (col[i] - mean) * (col[i] - mean);
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        const double sd = *lo == *hi ? 0.0 : std::sqrt(stable_sum(sq) / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            standardized[i].push_back(sd > 0.0 ? (col[i] - mean) / sd : 0.0);
        }
    }
    result.scores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        result.scores.push_back({rows[i].id, fused_kind, stable_sum(standardized[i]), false, false});
    }
    return result;
}

nlohmann::json to_json(const ConfidenceScore& s) {
    nlohmann::json j = {{"question_id", s.question_id},
                        {"estimator", s.estimator.name()},
                        {"value", s.missing ? nlohmann::json(nullptr) : nlohmann::json(s.value)},
                        {"missing", s.missing}};
    if (s.fallback) j["fallback"] = true;
    return j;
}

ConfidenceScore score_from_json(const nlohmann::json& j) {
    ConfidenceScore s;
    s.question_id = j.at("question_id").get<std::string>();
    s.estimator = EstimatorKind::parse(j.at("estimator").get<std::string>());
    s.missing = j.value("missing", false);
    const auto& v = j.at("value");
    if (v.is_null()) {
        s.missing = true;
    } else if (!s.missing) {
        s.value = v.get<double>();
    }
    s.fallback = j.value("fallback", false);
    return s;
}

void write_scores(const std::filesystem::path& path, std::span<const ConfidenceScore> scores,
                  const nlohmann::json& meta) {
    std::vector<nlohmann::json> lines;
    if (!meta.is_null()) lines.push_back({{"_meta", meta}});
    for (const auto& s : scores) lines.push_back(to_json(s));
    write_jsonl(path, lines);
}

std::vector<ConfidenceScore> load_scores(const std::filesystem::path& path) {
    std::vector<ConfidenceScore> out;
    for (const auto& j : read_jsonl(path)) {
        try {
            out.push_back(score_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace traceconf
