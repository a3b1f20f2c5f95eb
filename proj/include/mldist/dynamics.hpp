#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mldist/label_core.hpp"
#include "mldist/trace.hpp"

namespace mldist {

inline constexpr int kDynamicsSchemaVersion = 1;

// Labels of one step ordered by descending probability, ties broken by
// prompt_order position.
std::vector<std::string> rank_labels(const StepDistribution& step, const LabelSpace& ls);

// A step is "last" iff it is the trace's final label step, else
// "intermediate".
struct StepProfile {
    std::vector<double> top1_intermediate, top1_last;
    std::vector<double> top2_intermediate, top2_last;
    std::vector<double> entropy_intermediate, entropy_last;
};

// Per-step top-1/top-2/entropy samples split by partition. Key is the step
// index r.
std::map<int, StepProfile> step_rank_profile(const std::vector<GenerationTrace>& traces,
                                             const LabelSpace& ls);

// One record per intermediate step: what the step-r runner-up label did next.
struct ConsistencySample {
    std::string doc_id;
    int step = 0;
    std::string second_label;       // runner-up at step r
    std::string next_predicted;     // prediction at step r+1
    bool same = false;              // runner-up was predicted next
    bool predicted_later = false;   // runner-up predicted at some step > r+1
    double next_pred_prob_at_current = 0.0;  // P_r of the label predicted at r+1
    double second_prob_at_next = 0.0;        // P_{r+1} of the step-r runner-up
};

struct ConsistencyRecord {
    std::vector<ConsistencySample> samples;
    long n_intermediate = 0;
    // The three shares partition the intermediate steps and sum to 100.
    double same_pct = 0.0;
    double later_not_next_pct = 0.0;
    double never_predicted_pct = 0.0;
    // Conditional rate among steps where the runner-up was not predicted
    // next (the usual way this number is quoted).
    std::optional<double> never_predicted_given_not_next_pct;
    std::map<int, double> same_pct_per_step;
};

ConsistencyRecord ranking_consistency(const std::vector<GenerationTrace>& traces,
                                      const LabelSpace& ls);

struct SpikinessProfile {
    std::vector<std::string> doc_ids;
    std::vector<std::vector<double>> sorted_probs;  // one descending row per doc, aligned
    // Per-rank quantiles over documents: [rank] -> {min, q25, median, q75, max, mean}.
    std::vector<std::array<double, 6>> rank_quantiles;
};

// Descending first-step label probabilities per document.
SpikinessProfile spikiness_profile(const std::vector<GenerationTrace>& traces);

struct MultilabelRatePoint {
    double ratio = 0.0;
    int n = 0;
    int n_multilabel = 0;  // >= 2 distinct predicted labels
    double pct = 0.0;
};

// Multi-label output rate per in-context multi-label demo ratio bucket.
std::vector<MultilabelRatePoint> multilabel_rate(const std::vector<GenerationTrace>& traces);

struct PositionalAccuracyPoint {
    int index = 0;  // 0-based generation position
    int n = 0;
    int n_correct = 0;
    double accuracy = 0.0;
};

// Accuracy of the generated label at each position against the gold set;
// only traces with enough labels contribute to a position.
std::vector<PositionalAccuracyPoint> positional_accuracy(
    const std::vector<GenerationTrace>& traces,
    const std::map<std::string, std::set<std::string>>& golds);

struct OrderAdherence {
    int n_multilabel_traces = 0;  // >= 2 distinct predicted labels
    double alphabetical_pct = 0.0;
    double prompt_order_pct = 0.0;
};

OrderAdherence order_adherence(const std::vector<GenerationTrace>& traces, const LabelSpace& ls);

struct DynamicsResult {
    std::map<int, StepProfile> steps;
    ConsistencyRecord consistency;
    SpikinessProfile spikiness;
    std::vector<MultilabelRatePoint> multilabel;
    std::vector<PositionalAccuracyPoint> positional;
    OrderAdherence order;
    long n_traces = 0;
};

DynamicsResult run_dynamics(const std::vector<GenerationTrace>& traces,
                            const std::map<std::string, std::set<std::string>>& golds,
                            const LabelSpace& ls);

// Emits summary.json plus plot-ready sample tables under `dir`
// (see docs/formats.md).
void write_dynamics_report(const DynamicsResult& result, const std::string& dir);

}  // namespace mldist
