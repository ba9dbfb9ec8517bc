#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sirentrack {

struct Scored {
    double score;  // predicted probability in [0, 1]
    int label;     // 0 or 1
};

using ScoredSet = std::vector<Scored>;

struct EvalReport {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
    double f1 = 0.0;
    double auprc = 0.0;
    std::uint64_t n = 0;
    // Set when F1 fell back to the no-positives-anywhere convention (1.0).
    bool degenerate_f1 = false;
};

// F1 at the given threshold with the strict-greater siren rule. When no
// positive exists in either labels or predictions the score is defined as
// 1.0 and *degenerate (if given) is set.
double f1_score(const ScoredSet& scored, double threshold = 0.5,
                bool* degenerate = nullptr);

// Step-wise average precision over descending unique score thresholds with
// ties grouped; no trapezoidal interpolation. Requires at least one positive
// and one negative example (UndefinedMetricError otherwise).
double auprc(const ScoredSet& scored);

// Confusion counts at threshold 0.5 plus both metrics.
EvalReport evaluate(const ScoredSet& scored);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population convention (divide by n)
};

MeanStd mean_std(std::span<const double> values);

struct MetricSummary {
    MeanStd f1;
    MeanStd auprc;
    std::size_t n_folds = 0;
};

// Per-fold aggregation across reports.
MetricSummary aggregate(std::span<const EvalReport> reports);

std::string format_report(const EvalReport& report);

}  // namespace sirentrack
