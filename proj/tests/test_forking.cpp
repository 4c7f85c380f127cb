#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "traceconf/error.hpp"
#include "traceconf/forking.hpp"
#include "traceconf/synth.hpp"

using namespace traceconf;
using testing::record;
using testing::step;

namespace {

const TokenEntropyStat& stat_of(const std::vector<TokenEntropyStat>& stats, const std::string& token) {
    for (const auto& s : stats) {
        if (s.token == token) return s;
    }
    throw std::runtime_error("token missing: " + token);
}

ForkingTokenSet set_of(const std::vector<std::string>& tokens) {
    ForkingTokenSet set;
    double h = 10.0;
    for (const auto& t : tokens) set.tokens.push_back({t, h -= 1.0, 1, 1});
    return set;
}

std::vector<TokenEntropyStat> uniform_stats(int n, std::size_t responses) {
    std::vector<TokenEntropyStat> out;
    for (int i = 0; i < n; ++i) out.push_back({"t" + std::to_string(100 + i), 0.01 * i, responses, responses});
    return out;
}

}  // namespace

TEST_SUITE("forking") {
    TEST_CASE("aggregation examples") {
        GenerationRecord a = record("a", {"x", "y", "y"});
        a.tokens[0] = step("x", {0.5, 0.5});
        GenerationRecord b = record("b", {"z"});
        b.tokens[0] = step("z", {1.0});
        GenerationRecord c = record("c", {"z"});
        c.tokens[0] = step("z", {0.5, 0.5});
        const std::vector<GenerationRecord> rs = {a, b, c};
        const auto stats = aggregate_token_entropy(rs, DiscoveryConfig{});

        CHECK(stat_of(stats, "x").mean_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-14));
        CHECK(stat_of(stats, "z").mean_entropy == doctest::Approx(std::log(2.0) / 2).epsilon(1e-14));
        CHECK(stat_of(stats, "z").response_count == 2);
        CHECK(stat_of(stats, "y").response_count == 1);
        CHECK(stat_of(stats, "y").occurrence_count == 2);
        for (const auto& s : stats) {
            CHECK(s.response_count <= s.occurrence_count);
            CHECK(s.mean_entropy >= 0.0);
        }
        CHECK(std::is_sorted(stats.begin(), stats.end(), [](auto& l, auto& r) { return l.token < r.token; }));
    }

    TEST_CASE("aggregation needs token steps") {
        std::vector<GenerationRecord> rs(3);
        CHECK_THROWS_AS(aggregate_token_entropy(rs, DiscoveryConfig{}), DegenerateInputError);
    }

    TEST_CASE("aggregation ignores record order and thread count") {
        std::mt19937_64 rng(17);
        auto corpus = testing::random_corpus(rng, {"a", "b", "c", "d", " maybe", "\n"}, 300, 30);
        const auto base = aggregate_token_entropy(corpus, DiscoveryConfig{}, 1);
        for (unsigned threads : {2u, 3u, 8u}) {
            std::shuffle(corpus.begin(), corpus.end(), rng);
            CHECK(aggregate_token_entropy(corpus, DiscoveryConfig{}, threads) == base);
        }
    }

    TEST_CASE("selection filters, orders and truncates") {
        auto stats = uniform_stats(60, 25);
        DiscoveryConfig cfg;
        const auto set = select_forking_tokens(stats, cfg, "d");
        CHECK(set.tokens.size() == 50);
        CHECK(set.dataset == "d");
        CHECK(std::is_sorted(set.tokens.begin(), set.tokens.end(),
                             [](auto& l, auto& r) { return l.mean_entropy > r.mean_entropy; }));
        CHECK(set.tokens.front().token == "t159");

        stats = {{"rare", 5.0, 19, 19}, {"common", 1.0, 20, 20}};
        const auto filtered = select_forking_tokens(stats, cfg);
        REQUIRE(filtered.tokens.size() == 1);
        CHECK(filtered.tokens[0].token == "common");

        stats = {{"only", 1.0, 5, 5}};
        CHECK_THROWS_WITH_AS(select_forking_tokens(stats, cfg), doctest::Contains("lower min_responses"),
                             DegenerateInputError);
    }

    TEST_CASE("selection tie rule") {
        const std::vector<TokenEntropyStat> stats = {
            {"b", 1.0, 30, 30}, {"a", 1.0, 30, 30}, {"c", 1.0, 40, 40}, {"d", 2.0, 20, 20}};
        const auto set = select_forking_tokens(stats, DiscoveryConfig{});
        std::vector<std::string> order;
        for (const auto& t : set.tokens) order.push_back(t.token);
        CHECK(order == std::vector<std::string>{"d", "c", "a", "b"});
    }

    TEST_CASE("raising the threshold never adds tokens") {
        std::mt19937_64 rng(4);
        std::vector<TokenEntropyStat> stats;
        for (int i = 0; i < 80; ++i) {
            const std::size_t r = 1 + rng() % 50;
            stats.push_back({"t" + std::to_string(i), static_cast<double>(rng() % 1000) / 100.0, r + rng() % 5, r});
        }
        DiscoveryConfig cfg;
        cfg.top_n = 1000;
        TokenSet prev;
        for (int m = 1; m <= 50; ++m) {
            cfg.min_responses = m;
            TokenSet cur;
            try {
                cur = select_forking_tokens(stats, cfg).all();
            } catch (const DegenerateInputError&) {
            }
            if (m > 1) CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            prev = cur;
        }
    }

    TEST_CASE("engineered high-entropy token is ranked first") {
        SyntheticSpec spec;
        spec.n = 300;
        spec.engineered_token = " hmm";
        spec.engineered_rate = 0.02;
        const auto corpus = synth_generate(spec);
        const auto stats = aggregate_token_entropy(corpus.records, DiscoveryConfig{}, 2);
        const auto set = select_forking_tokens(stats, DiscoveryConfig{});
        CHECK(set.tokens.front().token == " hmm");
    }

    TEST_CASE("cumulative curve") {
        const std::vector<GenerationRecord> rs = {record("a", {"x", "y"}, true), record("b", {"x", "x", "z"}, false),
                                                  record("c", {"y"}, true), record("d", {"z", "z"}, false)};
        const auto one = cumulative_auroc_curve(rs, set_of({"x"}));
        REQUIRE(one.size() == 2);
        CHECK(one[0].k == 0);
        CHECK(one[0].auroc == 0.5);
        CHECK(one[1].auroc == testing::recount_auroc(rs, {"x"}));

        // Every token in the set: curve end equals trace length AUROC.
        const auto full = cumulative_auroc_curve(rs, set_of({"x", "y", "z"}));
        std::vector<double> tl;
        std::vector<int> y;
        for (const auto& r : rs) {
            tl.push_back(-static_cast<double>(r.tokens.size()));
            y.push_back(*r.correct);
        }
        CHECK(full.back().auroc == testing::pairwise_auroc(tl, y));

        std::vector<GenerationRecord> same_label = {record("a", {"x"}, true), record("b", {"y"}, true)};
        CHECK_THROWS_AS(cumulative_auroc_curve(same_label, set_of({"x"})), DegenerateInputError);
    }

    TEST_CASE("cumulative curve matches per-k recount") {
        std::mt19937_64 rng(23);
        const std::vector<std::string> vocab = {"p", "q", "r", "s", "t", "u", "v"};
        for (int trial = 0; trial < 50; ++trial) {
            const auto rs = testing::random_corpus(rng, vocab, 2 + rng() % 49, 12);
            std::vector<std::string> members = {"q", "s", "p", "v", "r"};
            members.resize(1 + rng() % 5);
            const auto curve = cumulative_auroc_curve(rs, set_of(members));
            REQUIRE(curve.size() == members.size() + 1);
            for (std::size_t k = 1; k <= members.size(); ++k) {
                const std::vector<std::string> prefix(members.begin(), members.begin() + k);
                CHECK(std::abs(curve[k].auroc - testing::recount_auroc(rs, prefix)) <= 1e-12);
            }
        }
    }

    TEST_CASE("greedy working set") {
        const std::vector<GenerationRecord> rs = {record("a", {"x", "y"}, true), record("b", {"x", "x", "z"}, false),
                                                  record("c", {"y"}, true), record("d", {"z", "z"}, false)};
        const std::vector<std::string> single = {"z"};
        const auto g1 = greedy_working_set(rs, single, 5);
        REQUIRE(g1.trajectory.size() == 1);
        CHECK(g1.trajectory[0] == testing::recount_auroc(rs, {"z"}));

        const auto set = set_of({"x", "y", "z"});
        const auto g = greedy_working_set(rs, set, 3);
        const auto best = best_forking_token(rs, set);
        CHECK(g.tokens.front() == best.token);
        CHECK(g.trajectory.front() == best.auroc);
    }

    TEST_CASE("greedy matches exhaustive per-step search") {
        std::mt19937_64 rng(31);
        const std::vector<std::string> vocab = {"w", "x", "y", "z", "o"};
        for (int trial = 0; trial < 60; ++trial) {
            const auto rs = testing::random_corpus(rng, vocab, 4 + rng() % 40, 10);
            const std::vector<std::string> candidates = {"w", "x", "y", "z"};
            const auto g = greedy_working_set(rs, candidates, 4);
            std::vector<std::string> chosen;
            std::vector<std::string> left = candidates;
            for (std::size_t stepi = 0; stepi < 4; ++stepi) {
                double best = -1;
                std::size_t arg = 0;
                for (std::size_t c = 0; c < left.size(); ++c) {
                    auto trial_set = chosen;
                    trial_set.push_back(left[c]);
                    const double a = testing::recount_auroc(rs, trial_set);
                    if (a > best + 1e-12) {
                        best = a;
                        arg = c;
                    }
                }
                chosen.push_back(left[arg]);
                left.erase(left.begin() + static_cast<long>(arg));
                CHECK(g.tokens[stepi] == chosen.back());
                CHECK(std::abs(g.trajectory[stepi] - best) <= 1e-12);
            }
        }
    }

    TEST_CASE("best forking token") {
        // "maybe" only in incorrect traces separates perfectly.
        const std::vector<GenerationRecord> rs = {record("a", {"so", "x"}, true), record("b", {"maybe", "x"}, false),
                                                  record("c", {"so"}, true), record("d", {"maybe", "maybe"}, false)};
        const auto best = best_forking_token(rs, set_of({"so", "maybe"}));
        CHECK(best.token == "maybe");
        CHECK(best.auroc == 1.0);

        const auto absent = best_forking_token(rs, set_of({"q1", "q2"}));
        CHECK(absent.token == "q1");
        CHECK(absent.auroc == 0.5);

        CHECK(best_forking_token(rs, set_of({"x"})).token == "x");
    }

    TEST_CASE("token-set files round-trip") {
        testing::TempDir dir;
        ForkingTokenSet a = set_of({"x", "y"});
        a.dataset = "one";
        a.config.min_responses = 3;
        ForkingTokenSet b = set_of({"z"});
        b.dataset = "two";
        write_forking_sets(dir / "t.jsonl", std::vector{a, b});
        const auto loaded = load_forking_sets(dir / "t.jsonl");
        REQUIRE(loaded.size() == 2);
        CHECK(loaded[0] == a);
        CHECK(loaded[1] == b);
        CHECK(loaded[0].first(1) == TokenSet{"x"});
        CHECK(loaded[0].first(10) == TokenSet{"x", "y"});
    }
}
