#pragma once

// Evaluation metrics for confidence scores: accuracy, Brier, ECE, ROC/AUROC,
// Spearman correlation, the VC x TL correctness heatmap and per-stratum
// reports.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace traceconf {

struct EvalInstance {
    double score = 0.0;                     // oriented: higher => more likely correct
    bool label = false;                     // y_i
    std::optional<double> confidence_prob;  // p_i in [0,1], needed by Brier/ECE
};

struct RocPoint {
    double threshold = 0.0;  // predicted correct iff score >= threshold
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Throws DegenerateInputError on an empty input.
double accuracy(std::span<const EvalInstance> instances);

/// Mean of (y - p)^2. Throws DegenerateInputError when any p is missing or
/// the input is empty.
double brier(std::span<const EvalInstance> instances);

enum class EceVariant {
    /// sum over grid points g of |(1/n) * sum_{i: p_i snaps to g} (p_i - y_i)|
    mass_weighted,
    /// Equal-width bins over the unsnapped confidences, weighted |acc - conf|.
    binned,
};

struct EceOptions {
    int intervals = 10;  // grid {0, 1/intervals, ..., 1}
    EceVariant variant = EceVariant::mass_weighted;
};

/// Nearest grid point with ties rounded up.
double snap_to_grid(double p, int intervals);

double ece(std::span<const EvalInstance> instances, const EceOptions& options = {});

/// Threshold sweep over the distinct observed scores, from (0,0) to (1,1).
/// Throws DegenerateInputError unless both classes are present.
std::vector<RocPoint> roc_curve(std::span<const EvalInstance> instances);

/// Trapezoidal area under roc_curve (ties contribute one half).
double auroc(std::span<const EvalInstance> instances);

/// Convenience overload over parallel arrays.
double auroc(std::span<const double> scores, std::span<const bool> labels);

/// Ranks with ties sharing their average rank (1-based).
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation of average ranks. Throws DegenerateInputError for
/// misaligned input, n < 2, or a constant rank vector.
double spearman(std::span<const double> xs, std::span<const double> ys);

struct HeatmapCell {
    double mean_correct = 0.0;
    std::size_t count = 0;
    bool empty = true;
};

struct Heatmap {
    std::vector<double> vc_edges;  // vc_bins + 1 edges over [0, 1]
    std::vector<double> tl_edges;  // tl_bins + 1 corpus-quantile edges
    std::vector<std::vector<HeatmapCell>> cells;  // [vc_bin][tl_bin]
};

/// Bins VC on a fixed [0,1] grid and trace length on corpus quantiles; each
/// cell holds the mean label and the sample count. `tl` is the raw
/// (positive) trace length.
Heatmap correctness_heatmap(std::span<const double> vc, std::span<const double> tl,
                            std::span<const bool> labels, int vc_bins = 10, int tl_bins = 10);

struct EvalReport {
    std::string estimator;
    std::size_t n = 0;
    std::size_t n_dropped_missing = 0;
    double accuracy = 0.0;
    std::optional<double> brier;
    std::optional<double> ece;
    std::optional<double> auroc;
    std::string auroc_error;  // set when AUROC was skipped (e.g. single class)
    std::vector<RocPoint> roc;
    std::map<std::string, EvalReport> strata;
};

struct EvalOptions {
    EceOptions ece;
    bool keep_roc = true;
};

/// Full metric bundle. Brier/ECE are computed only when every instance has a
/// probability. A single-class input records `auroc_error` rather than
/// throwing; an empty input throws.
EvalReport evaluate(std::span<const EvalInstance> instances, const EvalOptions& options = {});

/// One sub-report per distinct stratum label (sorted by label); strata whose
/// AUROC is undefined are kept with `auroc_error` set.
std::map<std::string, EvalReport> stratified_report(std::span<const EvalInstance> instances,
                                                    std::span<const std::string> strata,
                                                    const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace traceconf
