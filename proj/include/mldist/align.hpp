#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mldist/bradley_terry.hpp"
#include "mldist/gateway.hpp"
#include "mldist/label_core.hpp"
#include "mldist/prompts.hpp"
#include "mldist/trace.hpp"

namespace mldist {

inline constexpr int kDistributionSchemaVersion = 1;

// A method's output: one independent probability per label, no sum
// constraint.
struct AlignedDistribution {
    std::string method_id;
    std::string doc_id;
    std::map<std::string, double> probs;

    void validate(const LabelSpace& ls) const;
};

// probs[l] = sigmoid(label_logit[l] - none_logit) on the first label step.
// Throws DataError when the step carries no none logit.
AlignedDistribution compare_to_none(const StepDistribution& step0, const std::string& doc_id,
                                    const LabelSpace& ls);

// Predicted labels get 1 - epsilon, all others epsilon. Duplicates collapse.
AlignedDistribution hard_predictions(const GenerationTrace& trace, const LabelSpace& ls,
                                     double epsilon = 0.01);

// Every label gets the constant c: the degenerate reference baseline.
AlignedDistribution fixed_distribution(double c, const std::string& doc_id, const LabelSpace& ls);

// Elementwise max of label_probs across all label steps; all zeros for an
// empty generation.
AlignedDistribution max_over_generations(const GenerationTrace& trace, const LabelSpace& ls);

struct UnaryOptions {
    std::vector<UnaryDemo> demos;
    bool allow_floor_fallback = false;  // floor a missing option logit instead of erroring
};

// Two-way softmax share of the "reasonable" option for one label; one
// gateway call.
double unary_probability(const std::string& doc_text, const std::string& label,
                         const LabelSpace& ls, CompletionBackend& backend,
                         const UnaryOptions& opts = {});

// One unary run per label.
AlignedDistribution unary_distribution(const std::string& doc_text, const std::string& doc_id,
                                       const LabelSpace& ls, CompletionBackend& backend,
                                       const UnaryOptions& opts = {});

struct BinaryOptions {
    std::vector<BinaryDemo> demos;
    // Average both presentation orders; default is the single canonical
    // (alphabetical) order.
    bool symmetrize = false;
    BTMode mode = BTMode::kProb;
};

// P(label_i preferred over label_j) from the option-token logits, label_i
// presented as option a.
double pairwise_preference(const std::string& doc_text, const std::string& label_i,
                           const std::string& label_j, const LabelSpace& ls,
                           CompletionBackend& backend, const BinaryOptions& opts = {});

// All C(|L|+1, 2) pairwise preferences for one document, each unordered pair
// queried in alphabetical presentation order (or both orders when
// symmetrizing).
PairwiseTable collect_pairwise_table(const std::string& doc_text, const LabelSpace& ls,
                                     CompletionBackend& backend, const BinaryOptions& opts = {});

// Bradley-Terry scores from the pairwise table, then
// probs[l] = sigmoid(scores[l] - scores[none]) = sigmoid(scores[l]).
AlignedDistribution binary_breakdown(const std::string& doc_text, const std::string& doc_id,
                                     const LabelSpace& ls, CompletionBackend& backend,
                                     const BinaryOptions& opts = {});

// Same conversion applied to an already-fitted table (exposed for tests and
// for replay pipelines that batch the gateway calls).
AlignedDistribution breakdown_from_table(const PairwiseTable& table, const std::string& doc_id,
                                         const LabelSpace& ls, BTMode mode,
                                         BTScores* fitted = nullptr);

// Distributions file I/O (line-delimited JSON; see docs/formats.md).
nlohmann::json aligned_to_json(const AlignedDistribution& dist);
AlignedDistribution aligned_from_json(const nlohmann::json& j);
std::vector<AlignedDistribution> read_distributions(const std::string& path);

}  // namespace mldist
