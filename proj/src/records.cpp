#include "traceconf/records.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "traceconf/error.hpp"
#include "traceconf/extraction.hpp"

namespace traceconf {

using nlohmann::json;

std::string_view to_string(PromptKind kind) {
    switch (kind) {
        case PromptKind::linguistic: return "linguistic";
        case PromptKind::numeric: return "numeric";
        case PromptKind::topk: return "topk";
        case PromptKind::answer_only: return "answer_only";
    }
    return "answer_only";
}

PromptKind parse_prompt_kind(std::string_view name) {
    if (name == "linguistic") return PromptKind::linguistic;
    if (name == "numeric") return PromptKind::numeric;
    if (name == "topk") return PromptKind::topk;
    if (name == "answer_only") return PromptKind::answer_only;
    throw ParseError("unknown prompt_kind '" + std::string(name) + "'");
}

std::string_view to_string(ConfidenceKind kind) {
    switch (kind) {
        case ConfidenceKind::linguistic_phrase: return "linguistic_phrase";
        case ConfidenceKind::numeric_0_100: return "numeric_0_100";
        case ConfidenceKind::topk_numeric: return "topk_numeric";
    }
    return "numeric_0_100";
}

ConfidenceKind parse_confidence_kind(std::string_view name) {
    if (name == "linguistic_phrase") return ConfidenceKind::linguistic_phrase;
    if (name == "numeric_0_100") return ConfidenceKind::numeric_0_100;
    if (name == "topk_numeric") return ConfidenceKind::topk_numeric;
    throw ParseError("unknown confidence kind '" + std::string(name) + "'");
}

void GenerationRecord::set_raw_text(std::string text) {
    raw_text = std::move(text);
    auto split = split_reasoning(raw_text);
    think_text = std::move(split.think);
    final_text = std::move(split.final);
    reasoning_closed = split.closed;
}

const std::optional<std::string>& GenerationRecord::extracted_answer() const {
    static const std::optional<std::string> none;
    return extracted ? extracted->answer : none;
}

std::optional<ParsedConfidence> GenerationRecord::extracted_confidence() const {
    return extracted ? extracted->confidence : std::nullopt;
}

namespace {

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'");
    return *it;
}

std::string require_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

double require_logprob(const json& j) {
    const json& v = require(j, "logprob");
    if (!v.is_number()) throw ParseError("field 'logprob' must be a number");
    const double lp = v.get<double>();
    if (lp > 0.0) {
        std::ostringstream msg;
        msg << "positive logprob " << lp;
        throw ParseError(msg.str());
    }
    return lp;
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return out;
    if (!it->is_array()) throw ParseError(std::string("field '") + key + "' must be a list");
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(std::string("field '") + key + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

json confidence_json(const ParsedConfidence& c) {
    return {{"kind", to_string(c.kind)}, {"raw", c.raw}, {"value", c.value}};
}

json extraction_json(const Extraction& e) {
    json j = json::object();
    j["answer"] = e.answer ? json(*e.answer) : json(nullptr);
    j["confidence"] = e.confidence ? confidence_json(*e.confidence) : json(nullptr);
    j["confidence_raw"] = e.confidence_raw ? json(*e.confidence_raw) : json(nullptr);
    j["failures"] = e.failures;
    j["truncated"] = e.truncated;
    return j;
}

Extraction extraction_from_json(const json& j) {
    Extraction e;
    if (auto it = j.find("answer"); it != j.end() && !it->is_null()) e.answer = it->get<std::string>();
    if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
        ParsedConfidence c;
        c.kind = parse_confidence_kind(require_string(*it, "kind"));
        c.raw = it->value("raw", "");
        c.value = require(*it, "value").get<double>();
        if (!(c.value >= 0.0 && c.value <= 1.0)) throw ParseError("confidence value outside [0,1]");
        e.confidence = std::move(c);
    }
    if (auto it = j.find("confidence_raw"); it != j.end() && !it->is_null()) {
        e.confidence_raw = it->get<std::string>();
    }
    e.failures = string_list(j, "failures");
    e.truncated = j.value("truncated", false);
    return e;
}

template <class F>
auto parse_lines(const std::filesystem::path& path, F&& parse) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<decltype(parse(json{}))> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw ParseError("expected a JSON object");
            if (j.contains("_meta")) continue;
            out.push_back(parse(j));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_lines(const std::filesystem::path& path, const json& meta,
                 const std::vector<json>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    if (!meta.is_null()) out << json{{"_meta", meta}}.dump() << '\n';
    for (const auto& j : lines) out << j.dump() << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

json to_json(const Question& q) {
    json j = {{"id", q.id}, {"dataset", q.dataset}, {"text", q.text}, {"gold", q.gold}};
    if (!q.choices.empty()) j["choices"] = q.choices;
    if (q.difficulty) j["difficulty"] = *q.difficulty;
    return j;
}

json to_json(const TokenStep& step) {
    json top = json::array();
    for (const auto& alt : step.top) top.push_back({{"token", alt.token}, {"logprob", alt.logprob}});
    json j = {{"token", step.token}, {"logprob", step.logprob}, {"top", std::move(top)}};
    if (step.entropy) j["entropy"] = *step.entropy;
    return j;
}

json to_json(const GenerationRecord& r) {
    json tokens = json::array();
    for (const auto& t : r.tokens) tokens.push_back(to_json(t));
    json j = {{"question_id", r.question_id},
              {"prompt_kind", to_string(r.prompt_kind)},
              {"raw_text", r.raw_text},
              {"tokens", std::move(tokens)},
              {"gen_params",
               {{"temperature", r.gen_params.temperature},
                {"max_tokens", r.gen_params.max_tokens},
                {"endpoint", r.gen_params.endpoint}}}};
    if (!r.dataset.empty()) j["dataset"] = r.dataset;
    if (r.extracted) j["extracted"] = extraction_json(*r.extracted);
    if (r.correct) j["correct"] = *r.correct;
    return j;
}

json to_json(const Verdict& v) {
    json j = {{"question_id", v.question_id}, {"correct", v.correct}};
    if (!v.reason.empty()) j["reason"] = v.reason;
    return j;
}

Question question_from_json(const json& j) {
    Question q;
    q.id = require_string(j, "id");
    if (q.id.empty()) throw ParseError("empty question id");
    q.dataset = j.value("dataset", "");
    q.text = require_string(j, "text");
    q.choices = string_list(j, "choices");
    q.gold = string_list(j, "gold");
    if (auto it = j.find("difficulty"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<int>() < 0) {
            throw ParseError("difficulty must be a non-negative integer");
        }
        q.difficulty = it->get<int>();
    }
    return q;
}

GenerationRecord generation_from_json(const json& j) {
    GenerationRecord r;
    r.question_id = require_string(j, "question_id");
    r.prompt_kind = parse_prompt_kind(require_string(j, "prompt_kind"));
    r.dataset = j.value("dataset", "");
    r.set_raw_text(require_string(j, "raw_text"));
    if (auto it = j.find("tokens"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw ParseError("field 'tokens' must be a list");
        r.tokens.reserve(it->size());
        for (const auto& tj : *it) {
            TokenStep step;
            step.token = require_string(tj, "token");
            step.logprob = require_logprob(tj);
            if (auto top = tj.find("top"); top != tj.end() && !top->is_null()) {
                for (const auto& aj : *top) {
                    step.top.push_back({require_string(aj, "token"), require_logprob(aj)});
                }
            }
            std::stable_sort(step.top.begin(), step.top.end(),
                             [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
            if (auto e = tj.find("entropy"); e != tj.end() && !e->is_null()) {
                step.entropy = e->get<double>();
            }
            r.tokens.push_back(std::move(step));
        }
    }
    if (auto gp = j.find("gen_params"); gp != j.end() && gp->is_object()) {
        r.gen_params.temperature = gp->value("temperature", 0.0);
        r.gen_params.max_tokens = gp->value("max_tokens", 0);
        r.gen_params.endpoint = gp->value("endpoint", "");
    }
    if (auto ex = j.find("extracted"); ex != j.end() && !ex->is_null()) {
        r.extracted = extraction_from_json(*ex);
    }
    if (auto c = j.find("correct"); c != j.end() && !c->is_null()) {
        if (!c->is_boolean()) throw ParseError("field 'correct' must be a boolean");
        r.correct = c->get<bool>();
    }
    return r;
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.question_id = require_string(j, "question_id");
    const json& c = require(j, "correct");
    if (!c.is_boolean()) throw ParseError("field 'correct' must be a boolean");
    v.correct = c.get<bool>();
    v.reason = j.value("reason", "");
    return v;
}

std::vector<Question> load_questions(const std::filesystem::path& path) {
    auto questions = parse_lines(path, question_from_json);
    std::set<std::string> seen;
    for (const auto& q : questions) {
        if (!seen.insert(q.id).second) throw ParseError("duplicate question id '" + q.id + "'");
    }
    return questions;
}

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
    return parse_lines(path, generation_from_json);
}

std::vector<Verdict> load_verdicts(const std::filesystem::path& path) {
    return parse_lines(path, verdict_from_json);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    return parse_lines(path, [](const json& j) { return j; });
}

void write_jsonl(const std::filesystem::path& path, std::span<const json> lines) {
    write_lines(path, nullptr, {lines.begin(), lines.end()});
}

void write_questions(const std::filesystem::path& path, std::span<const Question> questions) {
    std::vector<json> lines;
    for (const auto& q : questions) lines.push_back(to_json(q));
    write_lines(path, nullptr, lines);
}

void write_generations(const std::filesystem::path& path,
                       std::span<const GenerationRecord> records, const json& meta) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(to_json(r));
    write_lines(path, meta, lines);
}

void write_verdicts(const std::filesystem::path& path, std::span<const Verdict> verdicts,
                    const json& meta) {
    std::vector<json> lines;
    for (const auto& v : verdicts) lines.push_back(to_json(v));
    write_lines(path, meta, lines);
}

std::vector<GenerationRecord> merge_verdicts(std::vector<GenerationRecord> records,
                                             std::span<const Verdict> verdicts) {
    std::map<std::string, bool> label;
    for (const auto& v : verdicts) {
        auto [it, inserted] = label.emplace(v.question_id, v.correct);
        if (!inserted && it->second != v.correct) {
            throw ParseError("conflicting verdicts for question id '" + v.question_id + "'");
        }
    }
    std::set<std::string> known;
    for (const auto& r : records) known.insert(r.question_id);
    std::string unknown;
    for (const auto& [id, _] : label) {
        if (!known.count(id)) unknown += (unknown.empty() ? "" : ", ") + id;
    }
    if (!unknown.empty()) throw ParseError("verdicts for unknown question ids: " + unknown);

    for (auto& r : records) {
        if (auto it = label.find(r.question_id); it != label.end()) r.correct = it->second;
    }
    return records;
}

}  // namespace traceconf
