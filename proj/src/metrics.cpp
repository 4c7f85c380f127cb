#include "traceconf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>

#include "traceconf/error.hpp"
#include "traceconf/summation.hpp"

namespace traceconf {

using nlohmann::json;

namespace {

void require_nonempty(std::span<const EvalInstance> instances, const char* metric) {
    if (instances.empty()) throw DegenerateInputError(std::string(metric) + " of an empty instance set");
}

double require_prob(const EvalInstance& inst, const char* metric) {
    if (!inst.confidence_prob) {
        throw DegenerateInputError(std::string(metric) + " needs a confidence probability on every instance");
    }
    const double p = *inst.confidence_prob;
    if (!(p >= 0.0 && p <= 1.0)) throw DegenerateInputError(std::string(metric) + ": probability outside [0,1]");
    return p;
}

struct ClassCounts {
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
};

ClassCounts count_classes(std::span<const EvalInstance> instances) {
    ClassCounts c;
    for (const auto& inst : instances) {
        if (std::isnan(inst.score)) throw DegenerateInputError("NaN score in ROC input");
        (inst.label ? c.pos : c.neg) += 1;
    }
    if (c.pos == 0 || c.neg == 0) {
        throw DegenerateInputError("ROC needs both classes (correct=" + std::to_string(c.pos) +
                                   ", incorrect=" + std::to_string(c.neg) + ")");
    }
    return c;
}

// Cumulative (fp, tp) counts after each group of tied scores, descending.
struct SweepStep {
    double threshold;
    std::uint64_t fp;
    std::uint64_t tp;
};

std::vector<SweepStep> sweep(std::span<const EvalInstance> instances) {
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return instances[a].score > instances[b].score; });
    std::vector<SweepStep> steps;
    steps.push_back({std::numeric_limits<double>::infinity(), 0, 0});
    std::uint64_t fp = 0;
    std::uint64_t tp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = instances[order[i]].score;
        while (i < order.size() && instances[order[i]].score == s) {
            (instances[order[i]].label ? tp : fp) += 1;
            ++i;
        }
        steps.push_back({s, fp, tp});
    }
    return steps;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

}  // namespace

double accuracy(std::span<const EvalInstance> instances) {
    require_nonempty(instances, "accuracy");
    std::size_t correct = 0;
    for (const auto& inst : instances) correct += inst.label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(instances.size());
}

double brier(std::span<const EvalInstance> instances) {
    require_nonempty(instances, "Brier score");
    std::vector<double> sq;
    sq.reserve(instances.size());
    for (const auto& inst : instances) {
        const double d = (inst.label ? 1.0 : 0.0) - require_prob(inst, "Brier score");
        sq.push_back(d * d);
    }
    return stable_mean(std::move(sq));
}

double snap_to_grid(double p, int intervals) {
    const double k = std::floor(p * intervals + 0.5 + 1e-9);
    return std::clamp(k, 0.0, static_cast<double>(intervals)) / intervals;
}

double ece(std::span<const EvalInstance> instances, const EceOptions& options) {
    require_nonempty(instances, "ECE");
    if (options.intervals < 1) throw DegenerateInputError("ECE grid needs at least one interval");
    const auto n = static_cast<double>(instances.size());
    const auto bins = static_cast<std::size_t>(options.intervals) + 1;

    if (options.variant == EceVariant::mass_weighted) {
        // Per grid point g/I the summed deviation is (count*g - hits*I)/I, so
        // the whole sum is an integer over I*n and evaluates exactly.
        std::vector<long long> count(bins, 0), hits(bins, 0);
        for (const auto& inst : instances) {
            const double p = snap_to_grid(require_prob(inst, "ECE"), options.intervals);
            const auto g = static_cast<std::size_t>(std::lround(p * options.intervals));
            ++count[g];
            if (inst.label) ++hits[g];
        }
        long long numerator = 0;
        for (std::size_t g = 0; g < bins; ++g) {
            numerator += std::llabs(count[g] * static_cast<long long>(g) - hits[g] * options.intervals);
        }
        return static_cast<double>(numerator) / (static_cast<double>(options.intervals) * n);
    }

    std::vector<std::vector<double>> conf(bins - 1);
    std::vector<std::vector<double>> hits(bins - 1);
    for (const auto& inst : instances) {
        const double p = require_prob(inst, "ECE");
        const auto b = std::min<std::size_t>(static_cast<std::size_t>(p * options.intervals), bins - 2);
        conf[b].push_back(p);
        hits[b].push_back(inst.label ? 1.0 : 0.0);
    }
    std::vector<double> terms;
    for (std::size_t b = 0; b + 1 < bins; ++b) {
        if (conf[b].empty()) continue;
        const double weight = static_cast<double>(conf[b].size()) / n;
        terms.push_back(weight * std::abs(stable_mean(hits[b]) - stable_mean(conf[b])));
    }
    return stable_sum(std::move(terms));
}

std::vector<RocPoint> roc_curve(std::span<const EvalInstance> instances) {
    const ClassCounts c = count_classes(instances);
    std::vector<RocPoint> curve;
    for (const auto& s : sweep(instances)) {
        curve.push_back({s.threshold, static_cast<double>(s.fp) / static_cast<double>(c.neg),
                         static_cast<double>(s.tp) / static_cast<double>(c.pos)});
    }
    return curve;
}

double auroc(std::span<const EvalInstance> instances) {
    const ClassCounts c = count_classes(instances);
    // Twice the trapezoid area in count units; exact in integers.
    std::uint64_t twice_area = 0;
    const auto steps = sweep(instances);
    for (std::size_t i = 1; i < steps.size(); ++i) {
        twice_area += (steps[i].fp - steps[i - 1].fp) * (steps[i].tp + steps[i - 1].tp);
    }
    return static_cast<double>(twice_area) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double auroc(std::span<const double> scores, std::span<const bool> labels) {
    if (scores.size() != labels.size()) throw DegenerateInputError("AUROC inputs are not aligned");
    std::vector<EvalInstance> inst(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) inst[i] = {scores[i], labels[i], std::nullopt};
    return auroc(inst);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw DegenerateInputError("correlation inputs are not aligned");
    if (xs.size() < 2) throw DegenerateInputError("correlation needs at least 2 points");
    const double mx = stable_mean({xs.begin(), xs.end()});
    const double my = stable_mean({ys.begin(), ys.end()});
    std::vector<double> sxy, sxx, syy;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy.push_back(dx * dy);
        sxx.push_back(dx * dx);
        syy.push_back(dy * dy);
    }
    const double vx = stable_sum(std::move(sxx));
    const double vy = stable_sum(std::move(syy));
    if (vx == 0.0 || vy == 0.0) throw DegenerateInputError("correlation of a constant vector");
    return std::clamp(stable_sum(std::move(sxy)) / std::sqrt(vx * vy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw DegenerateInputError("correlation inputs are not aligned");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    return pearson(rx, ry);
}

Heatmap correctness_heatmap(std::span<const double> vc, std::span<const double> tl,
                            std::span<const bool> labels, int vc_bins, int tl_bins) {
    if (vc.size() != tl.size() || vc.size() != labels.size()) {
        throw DegenerateInputError("heatmap inputs are not aligned");
    }
    if (vc_bins < 1 || tl_bins < 1) throw DegenerateInputError("heatmap needs at least one bin per axis");
    Heatmap h;
    for (int i = 0; i <= vc_bins; ++i) h.vc_edges.push_back(static_cast<double>(i) / vc_bins);

    std::vector<double> sorted(tl.begin(), tl.end());
    std::sort(sorted.begin(), sorted.end());
    for (int j = 0; j <= tl_bins; ++j) {
        if (sorted.empty()) {
            h.tl_edges.push_back(0.0);
            continue;
        }
        const double pos = static_cast<double>(j) / tl_bins * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        h.tl_edges.push_back(sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
    }

    std::vector<std::vector<std::size_t>> hits(vc_bins, std::vector<std::size_t>(tl_bins, 0));
    h.cells.assign(vc_bins, std::vector<HeatmapCell>(tl_bins));
    for (std::size_t i = 0; i < vc.size(); ++i) {
        const double v = std::clamp(vc[i], 0.0, 1.0);
        const int a = std::min(static_cast<int>(v * vc_bins), vc_bins - 1);
        const auto interior_end = h.tl_edges.end() - 1;
        const int b = std::min(
            static_cast<int>(std::upper_bound(h.tl_edges.begin() + 1, interior_end, tl[i]) - (h.tl_edges.begin() + 1)),
            tl_bins - 1);
        auto& cell = h.cells[a][b];
        ++cell.count;
        hits[a][b] += labels[i] ? 1 : 0;
    }
    for (int a = 0; a < vc_bins; ++a) {
        for (int b = 0; b < tl_bins; ++b) {
            auto& cell = h.cells[a][b];
            cell.empty = cell.count == 0;
            if (!cell.empty) cell.mean_correct = static_cast<double>(hits[a][b]) / static_cast<double>(cell.count);
        }
    }
    return h;
}

EvalReport evaluate(std::span<const EvalInstance> instances, const EvalOptions& options) {
    EvalReport r;
    r.n = instances.size();
    r.accuracy = accuracy(instances);
    const bool have_probs = std::all_of(instances.begin(), instances.end(),
                                        [](const EvalInstance& i) { return i.confidence_prob.has_value(); });
    if (have_probs) {
        r.brier = brier(instances);
        r.ece = ece(instances, options.ece);
    }
    try {
        r.auroc = auroc(instances);
        if (options.keep_roc) r.roc = roc_curve(instances);
    } catch (const DegenerateInputError& e) {
        r.auroc_error = e.what();
    }
    return r;
}

std::map<std::string, EvalReport> stratified_report(std::span<const EvalInstance> instances,
                                                    std::span<const std::string> strata,
                                                    const EvalOptions& options) {
    if (instances.size() != strata.size()) throw DegenerateInputError("stratum labels are not aligned");
    std::map<std::string, std::vector<EvalInstance>> groups;
    for (std::size_t i = 0; i < instances.size(); ++i) groups[strata[i]].push_back(instances[i]);
    std::map<std::string, EvalReport> out;
    for (const auto& [label, group] : groups) out.emplace(label, evaluate(group, options));
    return out;
}

json to_json(const EvalReport& r) {
    json roc = json::array();
    for (const auto& p : r.roc) {
        roc.push_back({std::isinf(p.threshold) ? json(nullptr) : json(p.threshold), p.fpr, p.tpr});
    }
    json strata = json::object();
    for (const auto& [k, v] : r.strata) strata[k] = to_json(v);
    json j = {{"estimator", r.estimator},
              {"n", r.n},
              {"n_dropped_missing", r.n_dropped_missing},
              {"accuracy", r.accuracy},
              {"brier", optional_number(r.brier)},
              {"ece", optional_number(r.ece)},
              {"auroc", optional_number(r.auroc)},
              {"roc", std::move(roc)}};
    if (!r.auroc_error.empty()) j["auroc_error"] = r.auroc_error;
    if (!r.strata.empty()) j["strata"] = std::move(strata);
    return j;
}

EvalReport eval_report_from_json(const json& j) {
    EvalReport r;
    r.estimator = j.value("estimator", "");
    r.n = j.value("n", std::size_t{0});
    r.n_dropped_missing = j.value("n_dropped_missing", std::size_t{0});
    r.accuracy = j.value("accuracy", 0.0);
    r.brier = number_or_null(j, "brier");
    r.ece = number_or_null(j, "ece");
    r.auroc = number_or_null(j, "auroc");
    r.auroc_error = j.value("auroc_error", "");
    if (auto it = j.find("roc"); it != j.end()) {
        for (const auto& p : *it) {
            r.roc.push_back({p[0].is_null() ? std::numeric_limits<double>::infinity() : p[0].get<double>(),
                             p[1].get<double>(), p[2].get<double>()});
        }
    }
    if (auto it = j.find("strata"); it != j.end()) {
        for (const auto& [k, v] : it->items()) r.strata.emplace(k, eval_report_from_json(v));
    }
    return r;
}

}  // namespace traceconf
