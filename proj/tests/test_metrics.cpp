#include <cmath>
#include <limits>

#include "doctest.h"
#include "test_support.hpp"
#include "traceconf/error.hpp"
#include "traceconf/metrics.hpp"

using namespace traceconf;
using testing::instances;
using testing::pairwise_auroc;

namespace {

std::vector<EvalInstance> probs(const std::vector<double>& p, const std::vector<int>& y) {
    std::vector<EvalInstance> out;
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back({p[i], y[i] != 0, p[i]});
    return out;
}

// 70% accurate corpus of ten.
std::vector<int> seventy() { return {1, 1, 1, 1, 1, 1, 1, 0, 0, 0}; }

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("accuracy") {
        CHECK(accuracy(instances({0, 0, 0, 0}, {1, 1, 0, 0})) == 0.5);
        CHECK(accuracy(instances({0, 0}, {1, 1})) == 1.0);
        CHECK(accuracy(instances(std::vector<double>(10, 0.0), seventy())) == doctest::Approx(0.7));
        CHECK_THROWS_AS(accuracy(std::vector<EvalInstance>{}), DegenerateInputError);
    }

    TEST_CASE("brier") {
        CHECK(brier(probs({1, 0, 1}, {1, 0, 1})) == 0.0);
        CHECK(brier(probs({0.5}, {1})) == 0.25);
        CHECK(brier(probs({0.8, 0.4}, {1, 0})) == doctest::Approx(0.1).epsilon(1e-15));
        CHECK_THROWS_AS(brier(instances({0.5}, {1})), DegenerateInputError);
    }

    TEST_CASE("ECE reproduces the worked cases") {
        CHECK(ece(probs(std::vector<double>(10, 0.7), seventy())) == 0.0);
        std::vector<double> p;
        for (int y : seventy()) p.push_back(y ? 0.6 : 0.5);
        CHECK(std::abs(ece(probs(p, seventy())) - 0.43) <= 1e-9);
        CHECK(ece(probs({0, 1, 1, 0}, {0, 1, 1, 0})) == 0.0);
        CHECK_THROWS_AS(ece(instances({0.5}, {1})), DegenerateInputError);
    }

    TEST_CASE("ECE snaps to the grid half-up") {
        CHECK(snap_to_grid(0.85, 10) == 0.9);
        CHECK(snap_to_grid(0.84, 10) == 0.8);
        CHECK(snap_to_grid(0.05, 10) == 0.1);
        CHECK(snap_to_grid(0.0, 10) == 0.0);
        CHECK(snap_to_grid(1.0, 10) == 1.0);
        for (int n = 0; n <= 100; ++n) {
            const double expected = std::floor(n / 10.0 + 0.5 + 1e-9) / 10.0;
            CHECK(snap_to_grid(n / 100.0, 10) == doctest::Approx(expected).epsilon(1e-15));
        }
        // 0.64 and 0.56 both land on 0.6 and pool their deviations.
        CHECK(ece(probs({0.64, 0.56}, {1, 0})) == doctest::Approx(std::abs((0.6 - 1 + 0.6) / 2)));
    }

    TEST_CASE("binned ECE variant") {
        // Bin [0.6,0.7): confidences 0.6,0.6 with one hit -> |0.5-0.6| * 2/4.
        // Bin [0.9,1.0]: confidences 0.95,1.0 both hits -> |1-0.975| * 2/4.
        const auto inst = probs({0.6, 0.6, 0.95, 1.0}, {1, 0, 1, 1});
        const EceOptions binned{10, EceVariant::binned};
        CHECK(ece(inst, binned) == doctest::Approx(0.1 * 0.5 + 0.025 * 0.5).epsilon(1e-12));
    }

    TEST_CASE("ROC curve") {
        auto roc = roc_curve(instances({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}));
        bool through_corner = false;
        for (const auto& p : roc) through_corner |= (p.fpr == 0.0 && p.tpr == 1.0);
        CHECK(through_corner);

        roc = roc_curve(instances({0.5, 0.5, 0.5}, {1, 0, 1}));
        REQUIRE(roc.size() == 2);
        CHECK(roc.front().fpr == 0.0);
        CHECK(roc.front().tpr == 0.0);
        CHECK(roc.back().fpr == 1.0);
        CHECK(roc.back().tpr == 1.0);

        // Hand sweep of scores 4,3,2,1 with labels 1,0,1,0.
        roc = roc_curve(instances({4, 3, 2, 1}, {1, 0, 1, 0}));
        const std::vector<std::pair<double, double>> expected = {{0, 0}, {0, 0.5}, {0.5, 0.5}, {0.5, 1}, {1, 1}};
        REQUIRE(roc.size() == expected.size());
        for (std::size_t i = 0; i < roc.size(); ++i) {
            CHECK(roc[i].fpr == expected[i].first);
            CHECK(roc[i].tpr == expected[i].second);
        }
        CHECK(std::isinf(roc.front().threshold));
        CHECK(roc[1].threshold == 4.0);

        CHECK_THROWS_WITH_AS(roc_curve(instances({1, 2}, {1, 1})), doctest::Contains("both classes"), DegenerateInputError);
    }

    TEST_CASE("ROC curve is monotone") {
        std::mt19937_64 rng(2);
        std::uniform_int_distribution<int> score(0, 9);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> s(40);
            std::vector<int> y(40);
            for (int i = 0; i < 40; ++i) {
                s[i] = score(rng);
                y[i] = i < 2 ? i : static_cast<int>(rng() & 1);
            }
            const auto roc = roc_curve(instances(s, y));
            for (std::size_t i = 1; i < roc.size(); ++i) {
                CHECK(roc[i].fpr >= roc[i - 1].fpr);
                CHECK(roc[i].tpr >= roc[i - 1].tpr);
            }
        }
    }

    TEST_CASE("AUROC examples") {
        CHECK(auroc(instances({0.9, 0.1}, {1, 0})) == 1.0);
        CHECK(auroc(instances({0.8, 0.4, 0.6}, {1, 1, 0})) == 0.5);
        CHECK(auroc(instances({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0})) == 0.5);
        CHECK_THROWS_AS(auroc(instances({1, 2}, {0, 0})), DegenerateInputError);
        const double s[] = {3.0, 1.0, 2.0};
        const bool y[] = {true, false, false};
        CHECK(auroc(std::span<const double>(s), std::span<const bool>(y)) == 1.0);
    }

    TEST_CASE("AUROC equals the pairwise form") {
        std::mt19937_64 rng(42);
        for (int t = 0; t < 300; ++t) {
            const std::size_t n = 2 + rng() % 150;
            std::vector<double> s(n);
            std::vector<int> y(n);
            const int levels = 1 + static_cast<int>(rng() % 20);
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = static_cast<double>(rng() % levels) - 7.5;
                y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng() & 1);
            }
            CHECK(std::abs(auroc(instances(s, y)) - pairwise_auroc(s, y)) <= 1e-12);
        }
    }

    TEST_CASE("AUROC rank invariance and sign symmetry") {
        std::mt19937_64 rng(8);
        std::normal_distribution<double> n(0, 1);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> s(60), mapped(60), neg(60);
            std::vector<int> y(60);
            for (int i = 0; i < 60; ++i) {
                s[i] = n(rng);
                mapped[i] = std::exp(s[i]) * 3.0 + 1.0;
                neg[i] = -s[i];
                y[i] = i < 2 ? i : static_cast<int>(rng() & 1);
            }
            const double a = auroc(instances(s, y));
            CHECK(auroc(instances(mapped, y)) == a);
            CHECK(a + auroc(instances(neg, y)) == doctest::Approx(1.0).epsilon(1e-14));
        }
    }

    TEST_CASE("order insensitivity of accuracy and Brier") {
        std::vector<double> p = {0.1, 0.9, 0.35, 0.7, 0.5, 0.05};
        std::vector<int> y = {0, 1, 1, 0, 1, 0};
        const double acc = accuracy(probs(p, y));
        const double b = brier(probs(p, y));
        std::mt19937_64 rng(1);
        for (int t = 0; t < 20; ++t) {
            std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
            std::shuffle(idx.begin(), idx.end(), rng);
            std::vector<double> p2;
            std::vector<int> y2;
            for (auto i : idx) {
                p2.push_back(p[i]);
                y2.push_back(y[i]);
            }
            CHECK(accuracy(probs(p2, y2)) == acc);
            CHECK(brier(probs(p2, y2)) == b);
        }
    }

    TEST_CASE("spearman") {
        const std::vector<double> a = {1, 2, 3, 4}, b = {10, 20, 30, 40}, r = {4, 3, 2, 1};
        CHECK(spearman(a, b) == doctest::Approx(1.0));
        CHECK(spearman(a, r) == doctest::Approx(-1.0));
        const std::vector<double> x = {1, 2, 2}, y = {1, 2, 3};
        CHECK(spearman(x, y) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
        CHECK(std::abs(spearman(x, y) - 0.866) < 1e-3);
        const std::vector<double> c = {5, 5, 5};
        CHECK_THROWS_AS(spearman(c, y), DegenerateInputError);
        const std::vector<double> one = {1};
        CHECK_THROWS_AS(spearman(one, one), DegenerateInputError);
        const std::vector<double> tied = {3, 1, 1, 2};
        CHECK(spearman(tied, tied) == doctest::Approx(1.0));
        CHECK(average_ranks(tied) == std::vector<double>{4, 1.5, 1.5, 3});
    }

    TEST_CASE("heatmap single cell and split cells") {
        const std::vector<double> vc = {0.55, 0.52, 0.58};
        const std::vector<double> tl = {10, 10, 10};
        const bool y[] = {true, false, true};
        auto h = correctness_heatmap(vc, tl, y, 10, 10);
        int populated = 0;
        for (const auto& row : h.cells) {
            for (const auto& c : row) {
                if (c.empty) continue;
                ++populated;
                CHECK(c.count == 3);
                CHECK(c.mean_correct == doctest::Approx(2.0 / 3.0));
            }
        }
        CHECK(populated == 1);

        const std::vector<double> vc2 = {0.05, 0.05, 0.95, 0.95};
        const std::vector<double> tl2 = {1, 1, 100, 100};
        const bool y2[] = {true, true, false, false};
        h = correctness_heatmap(vc2, tl2, y2, 2, 2);
        CHECK(h.cells[0][0].mean_correct == 1.0);
        CHECK(h.cells[1][1].mean_correct == 0.0);
        CHECK(h.cells[0][1].empty);
        CHECK(h.cells[1][0].empty);
    }

    TEST_CASE("heatmap equals per-cell brute force") {
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> u(0, 1);
        std::vector<double> vc(20), tl(20);
        bool y[20];
        for (int i = 0; i < 20; ++i) {
            vc[i] = u(rng);
            tl[i] = std::floor(u(rng) * 500);
            y[i] = u(rng) < 0.6;
        }
        const int vb = 4, tb = 3;
        const auto h = correctness_heatmap(vc, tl, y, vb, tb);
        // Quantile edges by linear interpolation on the sorted sample.
        std::vector<double> sorted(tl);
        std::sort(sorted.begin(), sorted.end());
        for (int j = 0; j <= tb; ++j) {
            const double pos = j * 19.0 / tb;
            const int lo = static_cast<int>(pos);
            const double edge = sorted[lo] + (pos - lo) * (sorted[std::min(lo + 1, 19)] - sorted[lo]);
            CHECK(h.tl_edges[j] == doctest::Approx(edge));
        }
        for (int a = 0; a < vb; ++a) {
            for (int b = 0; b < tb; ++b) {
                int count = 0, hits = 0;
                for (int i = 0; i < 20; ++i) {
                    const bool in_vc = vc[i] >= a / double(vb) && (vc[i] < (a + 1) / double(vb) || a == vb - 1);
                    const bool in_tl = (b == 0 || tl[i] >= h.tl_edges[b]) && (b == tb - 1 || tl[i] < h.tl_edges[b + 1]);
                    if (in_vc && in_tl) {
                        ++count;
                        hits += y[i];
                    }
                }
                CHECK(h.cells[a][b].count == static_cast<std::size_t>(count));
                CHECK(h.cells[a][b].empty == (count == 0));
                if (count) CHECK(h.cells[a][b].mean_correct == doctest::Approx(double(hits) / count));
            }
        }
    }

    TEST_CASE("evaluate bundles metrics and flags single-class AUROC") {
        const auto inst = probs({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0});
        const auto r = evaluate(inst);
        CHECK(r.n == 4);
        CHECK(r.accuracy == 0.5);
        REQUIRE(r.auroc);
        CHECK(*r.auroc == 1.0);
        REQUIRE(r.brier);
        REQUIRE(r.ece);
        CHECK_FALSE(r.roc.empty());

        const auto single = evaluate(probs({0.9, 0.8}, {1, 1}));
        CHECK_FALSE(single.auroc);
        CHECK_FALSE(single.auroc_error.empty());
        CHECK(single.accuracy == 1.0);

        const auto no_prob = evaluate(instances({1, 2}, {1, 0}));
        CHECK_FALSE(no_prob.brier);
        CHECK_FALSE(no_prob.ece);
        CHECK_THROWS_AS(evaluate(std::vector<EvalInstance>{}), DegenerateInputError);
    }

    TEST_CASE("stratified report equals subset evaluation") {
        const auto inst = probs({0.9, 0.1, 0.6, 0.4, 0.7, 0.2, 0.8}, {1, 0, 0, 1, 1, 1, 1});
        const std::vector<std::string> strata = {"a", "a", "b", "b", "a", "b", "c"};
        const auto rep = stratified_report(inst, strata);
        REQUIRE(rep.size() == 3);
        for (const std::string key : {"a", "b"}) {
            std::vector<EvalInstance> subset;
            for (std::size_t i = 0; i < inst.size(); ++i) {
                if (strata[i] == key) subset.push_back(inst[i]);
            }
            const auto direct = evaluate(subset);
            CHECK(rep.at(key).n == direct.n);
            CHECK(rep.at(key).accuracy == direct.accuracy);
            CHECK(rep.at(key).auroc == direct.auroc);
            CHECK(rep.at(key).brier == direct.brier);
            CHECK(rep.at(key).ece == direct.ece);
        }
        CHECK_FALSE(rep.at("c").auroc);
        CHECK(rep.at("c").accuracy == 1.0);

        const std::vector<std::string> one(inst.size(), "all");
        const auto whole = stratified_report(inst, one).at("all");
        CHECK(whole.auroc == evaluate(inst).auroc);
        CHECK(whole.ece == evaluate(inst).ece);
    }

    TEST_CASE("report JSON round-trips") {
        auto r = evaluate(probs({0.9, 0.8, 0.3, 0.2, 0.5}, {1, 0, 1, 0, 1}));
        r.estimator = "VC";
        r.strata = stratified_report(probs({0.9, 0.8, 0.3, 0.2, 0.5}, {1, 0, 1, 0, 1}),
                                     std::vector<std::string>{"x", "x", "y", "y", "y"});
        const auto back = eval_report_from_json(to_json(r));
        CHECK(back.estimator == "VC");
        CHECK(back.auroc == r.auroc);
        CHECK(back.ece == r.ece);
        REQUIRE(back.roc.size() == r.roc.size());
        CHECK(std::isinf(back.roc.front().threshold));
        CHECK(back.strata.size() == 2);
    }
}
