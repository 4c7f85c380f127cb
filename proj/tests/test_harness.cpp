#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "test_support.hpp"
#include "traceconf/client.hpp"
#include "traceconf/error.hpp"
#include "traceconf/estimators.hpp"
#include "traceconf/harness.hpp"
#include "traceconf/prompts.hpp"
#include "traceconf/synth.hpp"

using namespace traceconf;
using nlohmann::json;

namespace {

/// Scripted endpoint: replies per prompt substring, optional failures.
class MockEndpoint : public ChatEndpoint {
public:
    std::string reply = "<think>r</think>\n**Answer**: 42\n**Confidence**: 80";
    std::vector<TokenStep> tokens;
    bool with_logprobs = true;
    std::map<std::string, int> transient_failures;  // prompt substring -> failures before success
    std::set<std::string> rejected;                 // prompt substrings answered with a 4xx
    std::set<std::string> protocol;                 // prompt substrings answered with garbage
    std::map<std::string, std::string> replies;     // prompt substring -> reply

    ChatResponse complete(const std::string& prompt) override {
        calls++;
        std::lock_guard lock(mutex_);
        for (auto& [key, left] : transient_failures) {
            if (prompt.find(key) != std::string::npos && left > 0) {
                --left;
                throw TransientError("HTTP 503");
            }
        }
        for (const auto& key : rejected) {
            if (prompt.find(key) != std::string::npos) throw RequestRejected("HTTP 400");
        }
        for (const auto& key : protocol) {
            if (prompt.find(key) != std::string::npos) throw ProtocolError("no choices");
        }
        ChatResponse r;
        r.content = reply;
        for (const auto& [key, text] : replies) {
            if (prompt.find(key) != std::string::npos) r.content = text;
        }
        if (with_logprobs) {
            r.tokens = tokens;
            r.has_logprobs = true;
        }
        return r;
    }
    std::string identity() const override { return "mock"; }

    std::atomic<int> calls{0};

private:
    std::mutex mutex_;
};

std::vector<Question> questions(int n) {
    std::vector<Question> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({"q" + std::to_string(i), "d", "Question number " + std::to_string(i) + "?", {}, {"42"}, 1});
    }
    return out;
}

RunSettings fast() {
    RunSettings s;
    s.backoff_ms = 1;
    s.max_concurrent = 3;
    return s;
}

json chat_body(const std::string& content, bool logprobs, const char* reasoning = nullptr) {
    json message = {{"role", "assistant"}, {"content", content}};
    if (reasoning) message["reasoning_content"] = reasoning;
    json choice = {{"index", 0}, {"message", message}};
    if (logprobs) {
        choice["logprobs"] = {{"content",
                               {{{"token", "4"},
                                 {"logprob", -0.1},
                                 {"top_logprobs", {{{"token", "5"}, {"logprob", -2.5}}, {{"token", "4"}, {"logprob", -0.1}}}}},
                                {{"token", "2"}, {"logprob", 0.0}, {"top_logprobs", json::array()}}}}};
    }
    return {{"choices", {choice}}};
}

}  // namespace

TEST_SUITE("harness") {
    TEST_CASE("prompt rendering") {
        const Question q{"q", "d", "What is 6*7?", {}, {"42"}, std::nullopt};
        const std::string numeric = render_prompt(q, PromptTemplate::standard(PromptKind::numeric));
        CHECK(numeric.find("integer between 0 and 100") != std::string::npos);
        CHECK(numeric.find("What is 6*7?") != std::string::npos);
        CHECK(numeric.find("{question}") == std::string::npos);

        const std::string answer_only = render_prompt(q, PromptTemplate::standard(PromptKind::answer_only));
        CHECK(answer_only.find("Confidence") == std::string::npos);
        CHECK(answer_only.find("**Answer**") != std::string::npos);

        for (auto kind : {PromptKind::linguistic, PromptKind::numeric, PromptKind::topk, PromptKind::answer_only}) {
            const std::string stripped = render_prompt(q, PromptTemplate::standard(kind, false));
            CHECK(stripped.find("<think>") == std::string::npos);
            CHECK(stripped.find("</think>") == std::string::npos);
            CHECK(stripped.find("What is 6*7?") != std::string::npos);
            const std::string full = render_prompt(q, PromptTemplate::standard(kind, true));
            std::size_t count = 0;
            for (auto p = full.find(q.text); p != std::string::npos; p = full.find(q.text, p + 1)) ++count;
            CHECK(count == 1);
        }
        CHECK(render_prompt(q, PromptTemplate::standard(PromptKind::topk)).find("K = 5 best guesses") != std::string::npos);
        CHECK(render_prompt(q, PromptTemplate::standard(PromptKind::linguistic)).find("\"Very good chance\" (0.7–0.8)") !=
              std::string::npos);
    }

    TEST_CASE("choices are lettered") {
        const Question q{"q", "d", "Pick one.", {"red", "blue"}, {"A"}, std::nullopt};
        const std::string p = render_prompt(q, PromptTemplate::standard(PromptKind::answer_only));
        CHECK(p.find("Pick one.\nA. red\nB. blue") != std::string::npos);
    }

    TEST_CASE("template files") {
        testing::TempDir dir;
        testing::spit(dir / "t.txt", "Solve: {question}\nAnswer with **Answer**:");
        const auto t = PromptTemplate::load(dir / "t.txt", PromptKind::answer_only);
        CHECK(render_prompt({"q", "", "1+1", {}, {}, std::nullopt}, t) == "Solve: 1+1\nAnswer with **Answer**:");
        testing::spit(dir / "bad.txt", "{question} {question}");
        CHECK_THROWS_AS(PromptTemplate::load(dir / "bad.txt", PromptKind::numeric), ParseError);
    }

    TEST_CASE("judge template rendering and reply parsing") {
        const Question q{"q", "d", "Capital of France?", {}, {"Paris", "paris, France"}, std::nullopt};
        const std::string p = render_judge_prompt(standard_judge_template(), q, "Lyon");
        CHECK(p.find("Capital of France?") != std::string::npos);
        CHECK(p.find("- Paris\n- paris, France") != std::string::npos);
        CHECK(p.find("Candidate answer: Lyon") != std::string::npos);

        CHECK(parse_judge_reply("yes") == true);
        CHECK(parse_judge_reply("  No.") == false);
        CHECK(parse_judge_reply("YES, it matches") == true);
        CHECK(parse_judge_reply("<think>no wait</think>\nyes") == true);
        CHECK_FALSE(parse_judge_reply("maybe").has_value());
        CHECK_FALSE(parse_judge_reply("").has_value());
        CHECK_FALSE(parse_judge_reply("yesno").has_value());
    }

    TEST_CASE("exact match is trimmed and case-insensitive") {
        const std::vector<std::string> gold = {"Paris", "42"};
        CHECK(exact_match(" paris ", gold));
        CHECK(exact_match("42", gold));
        CHECK_FALSE(exact_match("42.0", gold));
        CHECK_FALSE(exact_match("", gold));
    }

    TEST_CASE("request and response mapping") {
        EndpointConfig cfg;
        cfg.model = "m";
        cfg.top_logprobs = 30;
        const json req = build_chat_request(cfg, "hello");
        CHECK(req["model"] == "m");
        CHECK(req["messages"][0]["content"] == "hello");
        CHECK(req["logprobs"] == true);
        CHECK(req["top_logprobs"] == 30);
        cfg.top_logprobs = 0;
        CHECK_FALSE(build_chat_request(cfg, "x").contains("logprobs"));

        const auto r = parse_chat_response(chat_body("**Answer**: 42", true, "thinking"));
        CHECK(r.raw_text() == "<think>thinking</think>**Answer**: 42");
        REQUIRE(r.tokens.size() == 2);
        CHECK(r.tokens[0].top[0].token == "4");
        CHECK(r.has_logprobs);
        CHECK_FALSE(parse_chat_response(chat_body("x", false)).has_logprobs);

        CHECK_THROWS_AS(parse_chat_response(json{{"error", "x"}}), ProtocolError);
        CHECK_THROWS_AS(parse_chat_response(json::array()), ProtocolError);
        CHECK_THROWS_AS(parse_chat_response(json{{"choices", {{{"message", {{"role", "assistant"}}}}}}}), ProtocolError);
    }

    TEST_CASE("retry helper") {
        int calls = 0;
        int used = 0;
        const int v = with_retry(
            3, 1,
            [&] {
                if (++calls < 3) throw TransientError("again");
                return 7;
            },
            &used);
        CHECK(v == 7);
        CHECK(used == 3);
        calls = 0;
        CHECK_THROWS_AS(with_retry(2, 1, [&]() -> int { ++calls; throw TransientError("x"); }), TransientError);
        CHECK(calls == 2);
        calls = 0;
        CHECK_THROWS_AS(with_retry(5, 1, [&]() -> int { ++calls; throw RequestRejected("x"); }), RequestRejected);
        CHECK(calls == 1);
    }

    TEST_CASE("generate echoes the completion into a record") {
        MockEndpoint ep;
        ep.tokens = {testing::step("4"), testing::step("2")};
        const auto qs = questions(1);
        const auto res = generate(qs, PromptTemplate::standard(PromptKind::numeric), ep, fast());
        REQUIRE(res.records.size() == 1);
        const auto& r = res.records[0];
        CHECK(r.raw_text == ep.reply);
        CHECK(r.final_text == "\n**Answer**: 42\n**Confidence**: 80");
        CHECK(r.dataset == "d");
        CHECK(r.gen_params.endpoint == "mock");
        CHECK(r.tokens.size() == 2);
        REQUIRE(r.extracted);
        CHECK(r.extracted_answer() == "42");
        CHECK(r.extracted_confidence()->value == doctest::Approx(0.8));
        CHECK(res.missing_logprobs == 0);
    }

    TEST_CASE("generate degrades without logprobs") {
        MockEndpoint ep;
        ep.with_logprobs = false;
        const auto qs = questions(2);
        const auto res = generate(qs, PromptTemplate::standard(PromptKind::numeric), ep, fast());
        CHECK(res.records.size() == 2);
        CHECK(res.records[0].tokens.empty());
        CHECK(res.missing_logprobs == 2);
    }

    TEST_CASE("generate reports permanent failures and keeps order") {
        MockEndpoint ep;
        ep.transient_failures["number 0?"] = 2;  // recovers on the third attempt
        ep.transient_failures["number 1?"] = 99;
        ep.rejected.insert("number 3?");
        const auto qs = questions(5);
        const auto res = generate(qs, PromptTemplate::standard(PromptKind::numeric), ep, fast());
        CHECK(res.records.size() + res.failures.size() == qs.size());
        REQUIRE(res.failures.size() == 2);
        CHECK(res.failures[0].question_id == "q1");
        CHECK(res.failures[0].attempts == 3);
        CHECK(res.failures[0].stage == "generate");
        CHECK(res.failures[1].question_id == "q3");
        CHECK(res.failures[1].attempts == 1);
        std::vector<std::string> ids;
        for (const auto& r : res.records) ids.push_back(r.question_id);
        CHECK(ids == std::vector<std::string>{"q0", "q2", "q4"});
    }

    TEST_CASE("three questions with one permanent failure") {
        MockEndpoint ep;
        ep.rejected.insert("number 1?");
        const auto res = generate(questions(3), PromptTemplate::standard(PromptKind::numeric), ep, fast());
        CHECK(res.records.size() == 2);
        CHECK(res.failures.size() == 1);
    }

    TEST_CASE("protocol mismatch aborts generation") {
        MockEndpoint ep;
        ep.protocol.insert("number 2?");
        CHECK_THROWS_AS(generate(questions(4), PromptTemplate::standard(PromptKind::numeric), ep, fast()), ProtocolError);
    }

    TEST_CASE("judge short-circuits exact matches and missing answers") {
        auto qs = questions(4);
        qs[0].gold = {"Paris"};
        std::vector<GenerationRecord> rs;
        auto add = [&](const std::string& id, const std::string& text) {
            GenerationRecord r;
            r.question_id = id;
            r.prompt_kind = PromptKind::answer_only;
            r.set_raw_text(text);
            r.extracted = extract_record(r);
            rs.push_back(r);
        };
        add("q0", "</think>**Answer**: Paris");
        add("q1", "</think>no answer here");
        add("q2", "</think>**Answer**: forty-two");
        add("q3", "</think>**Answer**: 41");

        MockEndpoint judge_ep;
        judge_ep.replies["forty-two"] = "yes";
        judge_ep.replies["Candidate answer: 41"] = "No";
        const auto res = judge(rs, qs, judge_ep, standard_judge_template(), fast());
        REQUIRE(res.verdicts.size() == 4);
        CHECK(res.verdicts[0].correct);
        CHECK(res.verdicts[0].reason == "exact match");
        CHECK_FALSE(res.verdicts[1].correct);
        CHECK(res.verdicts[1].reason == "no answer extracted");
        CHECK(res.verdicts[2].correct);
        CHECK_FALSE(res.verdicts[3].correct);
        CHECK(res.exact_matches == 1);
        CHECK(res.judge_calls == 2);
        CHECK(judge_ep.calls == 2);
    }

    TEST_CASE("unparseable judge output is retried then reported") {
        auto qs = questions(1);
        GenerationRecord r;
        r.question_id = "q0";
        r.set_raw_text("</think>**Answer**: 7");
        MockEndpoint judge_ep;
        judge_ep.reply = "it depends";
        const auto res = judge(std::vector{r}, qs, judge_ep, standard_judge_template(), fast());
        CHECK(res.verdicts.empty());
        REQUIRE(res.failures.size() == 1);
        CHECK(res.failures[0].attempts == 3);
        CHECK(res.failures[0].stage == "judge");
        CHECK(judge_ep.calls == 3);
    }

    TEST_CASE("judge is deterministic for a deterministic endpoint") {
        SyntheticSpec spec;
        spec.n = 60;
        const auto corpus = synth_generate(spec);
        MockEndpoint ep;
        ep.reply = "no";
        const auto a = judge(corpus.records, corpus.questions, ep, standard_judge_template(), fast());
        const auto b = judge(corpus.records, corpus.questions, ep, standard_judge_template(), fast());
        REQUIRE(a.verdicts.size() == b.verdicts.size());
        for (std::size_t i = 0; i < a.verdicts.size(); ++i) CHECK(a.verdicts[i] == b.verdicts[i]);
        // Synthetic labels agree with the exact-match pass.
        for (std::size_t i = 0; i < a.verdicts.size(); ++i) CHECK(a.verdicts[i].correct == *corpus.records[i].correct);
    }

    TEST_CASE("HTTP endpoint against a local server") {
        httplib::Server server;
        std::atomic<int> hits{0};
        json last_request;
        std::mutex m;
        server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(m);
                last_request = json::parse(req.body);
            }
            if (hits++ == 0) {
                res.status = 503;
                return;
            }
            res.set_content(chat_body("**Answer**: 42\n**Confidence**: 90", true, "hmm").dump(), "application/json");
        });
        server.Post("/bad/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
            res.status = 400;
            res.set_content("bad request", "text/plain");
        });
        server.Post("/garbage/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"ok\":true}", "application/json");
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        std::thread t([&] { server.listen_after_bind(); });
        server.wait_until_ready();

        EndpointConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
        cfg.model = "test-model";
        cfg.backoff_ms = 1;
        cfg.timeout_seconds = 10;
        HttpChatEndpoint ep(cfg);
        const auto res = generate(questions(1), PromptTemplate::standard(PromptKind::numeric), ep, run_settings(cfg));
        REQUIRE(res.records.size() == 1);
        CHECK(hits == 2);
        CHECK(res.records[0].raw_text == "<think>hmm</think>**Answer**: 42\n**Confidence**: 90");
        CHECK(res.records[0].think_text == "hmm");
        CHECK(res.records[0].tokens.size() == 2);
        CHECK(res.records[0].extracted_confidence()->value == doctest::Approx(0.9));
        CHECK(last_request["model"] == "test-model");
        CHECK(last_request["top_logprobs"] == 30);

        EndpointConfig bad = cfg;
        bad.base_url = "http://127.0.0.1:" + std::to_string(port) + "/bad/v1";
        HttpChatEndpoint bad_ep(bad);
        CHECK_THROWS_AS(bad_ep.complete("x"), RequestRejected);

        EndpointConfig garbage = cfg;
        garbage.base_url = "http://127.0.0.1:" + std::to_string(port) + "/garbage/v1";
        HttpChatEndpoint garbage_ep(garbage);
        CHECK_THROWS_AS(garbage_ep.complete("x"), ProtocolError);

        server.stop();
        t.join();

        EndpointConfig down = cfg;
        down.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
        down.timeout_seconds = 2;
        HttpChatEndpoint down_ep(down);
        CHECK_THROWS_AS(down_ep.complete("x"), TransientError);
    }

    TEST_CASE("synthetic corpus") {
        SyntheticSpec spec;
        spec.n = 200;
        const auto a = synth_generate(spec);
        const auto b = synth_generate(spec);
        CHECK(a.records == b.records);
        CHECK(a.questions == b.questions);
        REQUIRE(a.records.size() == 200);

        testing::TempDir dir;
        write_generations(dir / "g.jsonl", a.records);
        CHECK(load_generations(dir / "g.jsonl") == a.records);

        std::size_t correct = 0;
        for (const auto& r : a.records) {
            std::string concat;
            for (const auto& s : r.tokens) concat += s.token;
            CHECK(concat == r.raw_text);
            CHECK(r.correct.has_value());
            correct += *r.correct;
        }
        CHECK(correct > 100);
        CHECK(correct < 180);

        spec.marker_rate_correct = 0;
        spec.marker_rate_incorrect = 0;
        for (const auto& r : synth_generate(spec).records) {
            CHECK(count_markers(r.raw_text, MarkerPatternSet::standard()) == 0);
        }

        spec.accuracy = 1.0;
        CHECK_THROWS_AS(synth_generate(spec), DegenerateInputError);
    }

    TEST_CASE("synthetic trace length separates classes") {
        SyntheticSpec spec;
        const auto corpus = synth_generate(spec);
        std::vector<double> tl;
        std::vector<int> y;
        for (const auto& r : corpus.records) {
            tl.push_back(trace_length(r).value);
            y.push_back(*r.correct);
        }
        // Normal means 200 vs 400 with sd 100: Phi(200 / (100 sqrt 2)) ~ 0.92.
        CHECK(testing::pairwise_auroc(tl, y) > 0.9);
    }
}
