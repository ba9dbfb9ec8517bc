#include "sirentrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sirentrack/errors.hpp"

namespace sirentrack {

namespace {

void validate(const ScoredSet& scored) {
    if (scored.empty()) {
        throw InputSizeError("metrics: empty scored set");
    }
    for (const Scored& s : scored) {
        if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
            throw NumericalInputError("metrics: score outside [0, 1]");
        }
        if (s.label != 0 && s.label != 1) {
            throw NumericalInputError("metrics: label must be 0 or 1");
        }
    }
}

}  // namespace

double f1_score(const ScoredSet& scored, double threshold, bool* degenerate) {
    validate(scored);
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (const Scored& s : scored) {
        const bool pred = s.score > threshold;
        if (pred && s.label == 1) ++tp;
        if (pred && s.label == 0) ++fp;
        if (!pred && s.label == 1) ++fn;
    }
    if (degenerate) *degenerate = false;
    if (tp + fp + fn == 0) {
        // No positives anywhere; total function by convention.
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    return 2.0 * static_cast<double>(tp) /
           static_cast<double>(2 * tp + fp + fn);
}

double auprc(const ScoredSet& scored) {
    validate(scored);
    std::uint64_t positives = 0;
    for (const Scored& s : scored) positives += s.label;
    if (positives == 0 || positives == scored.size()) {
        throw UndefinedMetricError("auprc: needs both classes in the set");
    }

    ScoredSet sorted = scored;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Scored& a, const Scored& b) { return a.score > b.score; });

    const double total_pos = static_cast<double>(positives);
    double ap = 0.0;
    double recall_prev = 0.0;
    std::uint64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        // Equal scores form one threshold step.
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            tp += static_cast<std::uint64_t>(sorted[j].label);
            fp += static_cast<std::uint64_t>(1 - sorted[j].label);
            ++j;
        }
        const double recall = static_cast<double>(tp) / total_pos;
        const double precision =
            static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - recall_prev) * precision;
        recall_prev = recall;
        i = j;
    }
    return ap;
}

EvalReport evaluate(const ScoredSet& scored) {
    validate(scored);
    EvalReport r;
    r.n = scored.size();
    for (const Scored& s : scored) {
        const bool pred = s.score > 0.5;
        if (pred && s.label == 1) ++r.tp;
        if (pred && s.label == 0) ++r.fp;
        if (!pred && s.label == 1) ++r.fn;
        if (!pred && s.label == 0) ++r.tn;
    }
    r.f1 = f1_score(scored, 0.5, &r.degenerate_f1);
    r.auprc = auprc(scored);
    return r;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) {
        throw InputSizeError("aggregate: no values");
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return MeanStd{mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

MetricSummary aggregate(std::span<const EvalReport> reports) {
    if (reports.empty()) {
        throw InputSizeError("aggregate: no reports");
    }
    std::vector<double> f1s, aps;
    f1s.reserve(reports.size());
    aps.reserve(reports.size());
    for (const EvalReport& r : reports) {
        f1s.push_back(r.f1);
        aps.push_back(r.auprc);
    }
    MetricSummary s;
    s.f1 = mean_std(f1s);
    s.auprc = mean_std(aps);
    s.n_folds = reports.size();
    return s;
}

std::string format_report(const EvalReport& r) {
    std::ostringstream os;
    os << "n " << r.n << "\n"
       << "tp " << r.tp << "\n"
       << "fp " << r.fp << "\n"
       << "tn " << r.tn << "\n"
       << "fn " << r.fn << "\n"
       << "f1 " << r.f1 << "\n"
       << "auprc " << r.auprc << "\n";
    if (r.degenerate_f1) os << "degenerate_f1 1\n";
    return os.str();
}

}  // namespace sirentrack
