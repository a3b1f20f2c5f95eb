#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mldist/align.hpp"
#include "mldist/human_dist.hpp"

namespace mldist {

inline constexpr double kDefaultNllEpsilonFloor = 1e-7;
inline constexpr double kDefaultF1Threshold = 0.5;
inline constexpr int kMetricsSchemaVersion = 1;

// -sum_{g in gold} ln max(P(g), epsilon_floor). Empty gold gives 0; the
// caller tracks emptiness separately.
double nll(const AlignedDistribution& dist, const std::set<std::string>& gold,
           double epsilon_floor = kDefaultNllEpsilonFloor);

// sum_l |P(l) - H(l)| over the label space.
double l1(const AlignedDistribution& dist, const HumanDistribution& href, const LabelSpace& ls);

// 2|pred ∩ gold| / (|pred| + |gold|); 1 when both are empty.
double example_f1(const std::set<std::string>& pred, const std::set<std::string>& gold);
// Same, thresholding the distribution first (pred = labels with P >= threshold).
double example_f1(const AlignedDistribution& dist, const std::set<std::string>& gold,
                  double threshold = kDefaultF1Threshold);

std::set<std::string> threshold_labels(const AlignedDistribution& dist, double threshold);

struct MicroF1Result {
    double value = 0.0;
    long tp = 0, fp = 0, fn = 0;
    bool degenerate = false;  // no positives in predictions or golds anywhere
};

// Pooled TP/FP/FN over all (doc, label) decisions.
MicroF1Result micro_f1(const std::vector<std::pair<std::set<std::string>, std::set<std::string>>>&
                           pred_gold_rows);

struct MetricsRow {
    std::string method_id;
    std::string doc_id;
    double nll = 0.0;
    std::optional<double> l1;  // absent when no human distribution exists
    double example_f1 = 0.0;
    bool empty_gold = false;
};

struct MethodAggregate {
    int count = 0;
    int count_l1 = 0;
    int n_empty_gold = 0;
    double nll_mean = 0.0, nll_std = 0.0;
    std::optional<double> l1_mean, l1_std;
    double example_f1_mean = 0.0, example_f1_std = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    std::map<std::string, MethodAggregate> aggregates;  // method_id -> aggregate
    double epsilon_floor = kDefaultNllEpsilonFloor;
    double threshold = kDefaultF1Threshold;
    std::string gold_rule = "provided-else-majority";
};

// Joins distributions with golds (and human distributions where available)
// and computes one row per (method, doc). Aggregates are recomputed from the
// rows. Throws JoinError when nothing joins.
MetricsReport evaluate_distributions(
    const std::vector<AlignedDistribution>& dists,
    const std::map<std::string, std::set<std::string>>& golds,
    const std::map<std::string, HumanDistribution>& human_dists, const LabelSpace& ls,
    double epsilon_floor = kDefaultNllEpsilonFloor, double threshold = kDefaultF1Threshold);

// Recomputes `aggregates` from `rows` (population std).
void recompute_aggregates(MetricsReport& report);

// Report emission: rows as a TSV table, aggregates as a JSON summary.
void write_metrics_tsv(const MetricsReport& report, const std::string& path);
void write_metrics_summary(const MetricsReport& report, const std::string& path);

std::string format_double(double v);  // shortest round-trip decimal form

}  // namespace mldist
