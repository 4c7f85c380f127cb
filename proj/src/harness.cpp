#include "traceconf/harness.hpp"

#include <atomic>
#include <cctype>
#include <exception>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

namespace traceconf {

using nlohmann::json;

namespace {

// Runs job(i) for i in [0, n) on up to `width` threads.
template <class Job>
void run_bounded(std::size_t n, int width, Job&& job) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, width))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    std::atomic<bool> stop{false};
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n && !stop; i = next++) {
                    try {
                        job(i);
                    } catch (...) {
                        std::lock_guard lock(fatal_mutex);
                        if (!fatal) fatal = std::current_exception();
                        stop = true;
                    }
                }
            });
        }
    }
    if (fatal) std::rethrow_exception(fatal);
}

std::string lower_trimmed(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

json to_json(const FailureEntry& f) {
    return {{"question_id", f.question_id}, {"stage", f.stage}, {"error", f.error}, {"attempts", f.attempts}};
}

RunSettings run_settings(const EndpointConfig& c) {
    return {c.max_concurrent, c.attempts, c.backoff_ms, c.temperature, c.max_tokens};
}

GenerateResult generate(std::span<const Question> questions, const PromptTemplate& tmpl, ChatEndpoint& endpoint,
                        const RunSettings& settings, const ExtractionOptions& extraction) {
    struct Slot {
        std::optional<GenerationRecord> record;
        std::optional<FailureEntry> failure;
        bool missing_logprobs = false;
    };
    std::vector<Slot> slots(questions.size());
    const std::string identity = endpoint.identity();

    run_bounded(questions.size(), settings.max_concurrent, [&](std::size_t i) {
        const Question& q = questions[i];
        const std::string prompt = render_prompt(q, tmpl);
        int used = 0;
        try {
            ChatResponse resp = with_retry(
                settings.attempts, settings.backoff_ms, [&] { return endpoint.complete(prompt); }, &used);
            GenerationRecord r;
            r.question_id = q.id;
            r.dataset = q.dataset;
            r.prompt_kind = tmpl.kind;
            r.set_raw_text(resp.raw_text());
            r.tokens = std::move(resp.tokens);
            r.gen_params = {settings.temperature, settings.max_tokens, identity};
            r.extracted = extract_record(r, extraction);
            slots[i].missing_logprobs = !resp.has_logprobs;
            slots[i].record = std::move(r);
        } catch (const TransientError& e) {
            slots[i].failure = FailureEntry{q.id, "generate", e.what(), used};
        } catch (const RequestRejected& e) {
            slots[i].failure = FailureEntry{q.id, "generate", e.what(), used};
        }
    });

    GenerateResult out;
    for (auto& s : slots) {
        if (s.record) out.records.push_back(std::move(*s.record));
        if (s.failure) out.failures.push_back(std::move(*s.failure));
        out.missing_logprobs += s.missing_logprobs ? 1 : 0;
    }
    if (out.missing_logprobs) {
        std::cerr << "warning: " << out.missing_logprobs
                  << " responses carried no logprobs; their token lists are empty\n";
    }
    return out;
}

std::optional<bool> parse_judge_reply(std::string_view reply) {
    if (auto close = reply.find(kThinkClose); close != std::string_view::npos) {
        reply = reply.substr(close + kThinkClose.size());
    }
    std::string word;
    for (char c : reply) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!word.empty()) {
            break;
        }
    }
    if (word == "yes") return true;
    if (word == "no") return false;
    return std::nullopt;
}

bool exact_match(std::string_view answer, std::span<const std::string> gold) {
    const std::string a = lower_trimmed(answer);
    if (a.empty()) return false;
    return std::any_of(gold.begin(), gold.end(), [&](const std::string& g) { return lower_trimmed(g) == a; });
}

JudgeResult judge(std::span<const GenerationRecord> records, std::span<const Question> questions,
                  ChatEndpoint& judge_endpoint, const std::string& judge_template, const RunSettings& settings) {
    std::map<std::string, const Question*> by_id;
    for (const auto& q : questions) by_id.emplace(q.id, &q);

    struct Slot {
        std::optional<Verdict> verdict;
        std::optional<FailureEntry> failure;
        bool exact = false;
        bool called = false;
    };
    std::vector<Slot> slots(records.size());

    run_bounded(records.size(), settings.max_concurrent, [&](std::size_t i) {
        const GenerationRecord& r = records[i];
        const auto& answer = r.extracted ? r.extracted->answer : extract_record(r).answer;
        if (!answer) {
            slots[i].verdict = Verdict{r.question_id, false, "no answer extracted"};
            return;
        }
        auto q = by_id.find(r.question_id);
        if (q == by_id.end()) {
            slots[i].failure = FailureEntry{r.question_id, "judge", "question id not in question file", 0};
            return;
        }
        if (exact_match(*answer, q->second->gold)) {
            slots[i].verdict = Verdict{r.question_id, true, "exact match"};
            slots[i].exact = true;
            return;
        }
        const std::string prompt = render_judge_prompt(judge_template, *q->second, *answer);
        slots[i].called = true;
        int used = 0;
        try {
            const bool ok = with_retry(
                settings.attempts, settings.backoff_ms,
                [&] {
                    const ChatResponse resp = judge_endpoint.complete(prompt);
                    auto parsed = parse_judge_reply(resp.raw_text());
                    if (!parsed) throw TransientError("unparseable judge reply: " + resp.content.substr(0, 80));
                    return *parsed;
                },
                &used);
            slots[i].verdict = Verdict{r.question_id, ok, "judge"};
        } catch (const TransientError& e) {
            slots[i].failure = FailureEntry{r.question_id, "judge", e.what(), used};
        } catch (const RequestRejected& e) {
            slots[i].failure = FailureEntry{r.question_id, "judge", e.what(), used};
        }
    });

    JudgeResult out;
    for (auto& s : slots) {
        if (s.verdict) out.verdicts.push_back(std::move(*s.verdict));
        if (s.failure) out.failures.push_back(std::move(*s.failure));
        out.exact_matches += s.exact ? 1 : 0;
        out.judge_calls += s.called ? 1 : 0;
    }
    return out;
}

void write_failures(const std::filesystem::path& path, std::span<const FailureEntry> failures) {
    std::vector<json> lines;
    for (const auto& f : failures) lines.push_back(to_json(f));
    write_jsonl(path, lines);
}

}  // namespace traceconf
