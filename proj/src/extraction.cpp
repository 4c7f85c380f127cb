#include "traceconf/extraction.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "traceconf/error.hpp"

namespace traceconf {

using nlohmann::json;

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Bytes of multi-byte UTF-8 sequences count as word characters, which keeps
// "ormás" from matching "or".
bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || u >= 0x80;
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = lower(c);
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

struct MarkerHit {
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the colon / closing asterisks
};

bool iequals_at(std::string_view text, std::size_t pos, std::string_view word) {
    if (pos + word.size() > text.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (lower(text[pos + i]) != lower(word[i])) return false;
    }
    return true;
}

// Accepts "**Label**:", "**Label** :" and "**Label:**", label case-insensitive.
std::optional<MarkerHit> match_marker(std::string_view text, std::size_t pos, std::string_view label) {
    if (text.compare(pos, 2, "**") != 0) return std::nullopt;
    std::size_t p = pos + 2;
    if (!iequals_at(text, p, label)) return std::nullopt;
    p += label.size();
    if (text.compare(p, 3, ":**") == 0) return MarkerHit{pos, p + 3};
    if (text.compare(p, 2, "**") != 0) return std::nullopt;
    p += 2;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    if (p < text.size() && text[p] == ':') return MarkerHit{pos, p + 1};
    return std::nullopt;
}

std::optional<MarkerHit> find_marker(std::string_view text, std::string_view label, bool last,
                                     std::size_t from = 0) {
    std::optional<MarkerHit> found;
    for (std::size_t pos = text.find("**", from); pos != std::string_view::npos;
         pos = text.find("**", pos + 1)) {
        if (auto hit = match_marker(text, pos, label)) {
            found = hit;
            if (!last) break;
        }
    }
    return found;
}

// Confidence value: rest of the marker's line, or the next non-blank line
// when the marker ends its line.
std::string_view capture_value(std::string_view text, std::size_t from) {
    std::size_t p = from;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    std::size_t eol = text.find('\n', p);
    std::string_view line = trim(text.substr(p, eol == std::string_view::npos ? std::string_view::npos : eol - p));
    while (line.empty() && eol != std::string_view::npos) {
        p = eol + 1;
        eol = text.find('\n', p);
        line = trim(text.substr(p, eol == std::string_view::npos ? std::string_view::npos : eol - p));
    }
    return line;
}

// Strips decoration models put around the value: quotes, emphasis, a trailing
// sentence punctuation mark.
std::string_view strip_decoration(std::string_view s) {
    auto is_deco = [](char c) {
        return c == '"' || c == '\'' || c == '*' || c == '`' || c == '$' || c == '.' ||
               c == ',' || c == ';' || c == '!' || c == '_' || is_space(c);
    };
    while (!s.empty() && is_deco(s.front()) && s.front() != '.') s.remove_prefix(1);
    while (!s.empty() && is_deco(s.back())) s.remove_suffix(1);
    // UTF-8 curly quotes
    for (std::string_view q : {"“", "”"}) {
        if (s.starts_with(q)) s.remove_prefix(q.size());
        if (s.ends_with(q)) s.remove_suffix(q.size());
    }
    return trim(s);
}

double snap_midpoint(double low, double high) {
    return std::round((low + high) / 2.0 * 1e12) / 1e12;
}

}  // namespace

ReasoningSplit split_reasoning(std::string_view raw_text) {
    ReasoningSplit out;
    const std::size_t close = raw_text.find(kThinkClose);
    std::string_view think = raw_text;
    if (close != std::string_view::npos) {
        think = raw_text.substr(0, close);
        out.final = std::string(raw_text.substr(close + kThinkClose.size()));
        out.closed = true;
    }
    out.think = std::string(think);
    if (auto open = out.think.find(kThinkOpen); open != std::string::npos) {
        out.think.erase(open, kThinkOpen.size());
    }
    return out;
}

LinguisticScale::LinguisticScale(std::vector<LinguisticBucket> buckets) : buckets_(std::move(buckets)) {
    if (buckets_.empty()) throw ParseError("linguistic scale has no buckets");
    constexpr double tol = 1e-9;
    double expected_low = 0.0;
    for (std::size_t i = 0; i < buckets_.size(); ++i) {
        const auto& b = buckets_[i];
        if (std::abs(b.low - expected_low) > tol || !(b.high > b.low)) {
            throw ParseError("linguistic buckets must tile [0,1] contiguously (bucket '" + b.phrase + "')");
        }
        expected_low = b.high;
        for (std::size_t j = 0; j < i; ++j) {
            if (to_lower(trim(buckets_[j].phrase)) == to_lower(trim(b.phrase))) {
                throw ParseError("duplicate linguistic phrase '" + b.phrase + "'");
            }
        }
    }
    if (std::abs(expected_low - 1.0) > tol) throw ParseError("linguistic buckets must end at 1");
}

const LinguisticScale& LinguisticScale::standard() {
    static const LinguisticScale scale({
        {"Almost no chance", 0.0, 0.1},
        {"Highly unlikely", 0.1, 0.2},
        {"Chances are slight", 0.2, 0.3},
        {"Unlikely", 0.3, 0.4},
        {"Less than even", 0.4, 0.5},
        {"Better than even", 0.5, 0.6},
        {"Likely", 0.6, 0.7},
        {"Very good chance", 0.7, 0.8},
        {"Highly likely", 0.8, 0.9},
        {"Almost certain", 0.9, 1.0},
    });
    return scale;
}

const LinguisticBucket* LinguisticScale::find(std::string_view phrase, bool exact_case) const {
    const std::string_view p = trim(phrase);
    for (const auto& b : buckets_) {
        const std::string_view candidate = trim(b.phrase);
        if (exact_case ? candidate == p : to_lower(candidate) == to_lower(p)) return &b;
    }
    return nullptr;
}

MarkerPatternSet MarkerPatternSet::standard() {
    return {"default", {"maybe", "perhaps", "possibly", "considering", "however", "or"}, true};
}

std::optional<std::string> extract_answer(std::string_view text) {
    auto answer = find_marker(text, "Answer", /*last=*/true);
    if (!answer) return std::nullopt;
    std::size_t stop = text.size();
    if (auto conf = find_marker(text, "Confidence", /*last=*/false, answer->end)) stop = conf->begin;
    std::string_view value = trim(text.substr(answer->end, stop - answer->end));
    if (value.empty()) return std::nullopt;
    return std::string(value);
}

ConfidenceExtraction extract_confidence(std::string_view text, PromptKind kind,
                                        const ExtractionOptions& options) {
    ConfidenceExtraction out;
    if (kind == PromptKind::answer_only) {
        out.failure = "confidence_not_applicable";
        return out;
    }
    auto marker = find_marker(text, "Confidence", /*last=*/true);
    if (!marker) {
        out.failure = "confidence_missing";
        return out;
    }
    const std::string_view raw = capture_value(text, marker->end);
    out.raw = std::string(raw);
    std::string_view value = strip_decoration(raw);
    if (value.empty()) {
        out.failure = "confidence_missing";
        return out;
    }

    if (kind == PromptKind::linguistic) {
        const LinguisticScale& scale = options.scale ? *options.scale : LinguisticScale::standard();
        const LinguisticBucket* bucket = scale.find(value, options.exact_case);
        if (!bucket) {
            // "Highly likely (0.8-0.9)": drop an echoed range
            if (auto paren = value.find('('); paren != std::string_view::npos) {
                bucket = scale.find(strip_decoration(value.substr(0, paren)), options.exact_case);
            }
        }
        if (!bucket) {
            out.failure = "confidence_unknown_phrase";
            return out;
        }
        out.confidence = ParsedConfidence{ConfidenceKind::linguistic_phrase, std::string(raw),
                                          snap_midpoint(bucket->low, bucket->high)};
        return out;
    }

    if (value.ends_with('%')) value = trim(value.substr(0, value.size() - 1));
    if (value.empty() || value.size() > 9 ||
        value.find_first_not_of("0123456789") != std::string_view::npos) {
        out.failure = "confidence_not_integer";
        return out;
    }
    const int n = std::stoi(std::string(value));
    if (n < 0 || n > 100) {
        out.failure = "confidence_out_of_range";
        return out;
    }
    out.confidence = ParsedConfidence{
        kind == PromptKind::topk ? ConfidenceKind::topk_numeric : ConfidenceKind::numeric_0_100,
        std::string(raw), n / 100.0};
    return out;
}

Extraction extract_record(const GenerationRecord& record, const ExtractionOptions& options) {
    Extraction out;
    std::string_view text = record.final_text;
    if (text.empty()) {
        text = record.raw_text;
        out.truncated = !record.reasoning_closed;
    }
    out.answer = extract_answer(text);
    if (!out.answer) out.failures.push_back("answer_missing");
    if (record.prompt_kind != PromptKind::answer_only) {
        auto conf = extract_confidence(text, record.prompt_kind, options);
        out.confidence = std::move(conf.confidence);
        out.confidence_raw = std::move(conf.raw);
        if (!conf.failure.empty()) out.failures.push_back(std::move(conf.failure));
    }
    return out;
}

std::size_t count_markers(std::string_view text, const MarkerPatternSet& patterns) {
    const std::string haystack = to_lower(text);
    std::size_t total = 0;
    for (const auto& word_raw : patterns.words) {
        const std::string word = to_lower(word_raw);
        if (word.empty()) continue;
        std::size_t pos = haystack.find(word);
        while (pos != std::string::npos) {
            const std::size_t end = pos + word.size();
            const bool ends_ok = end == haystack.size() || !is_word_char(haystack[end]);
            const bool starts_ok =
                !patterns.leading_boundary || pos == 0 || !is_word_char(haystack[pos - 1]);
            if (ends_ok && starts_ok) {
                ++total;
                pos = haystack.find(word, end);
            } else {
                pos = haystack.find(word, pos + 1);
            }
        }
    }
    return total;
}

ExtractionConfig load_extraction_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    ExtractionConfig cfg;
    if (auto it = j.find("markers"); it != j.end()) {
        cfg.markers.words = it->get<std::vector<std::string>>();
        cfg.markers.id = j.value("id", path.stem().string());
    }
    cfg.markers.leading_boundary = j.value("leading_boundary", cfg.markers.leading_boundary);
    if (auto it = j.find("linguistic_scale"); it != j.end()) {
        std::vector<LinguisticBucket> buckets;
        for (const auto& b : *it) {
            buckets.push_back({b.at("phrase").get<std::string>(), b.at("low").get<double>(),
                               b.at("high").get<double>()});
        }
        cfg.scale = LinguisticScale(std::move(buckets));
    }
    return cfg;
}

}  // namespace traceconf
