#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mldist {

// Sentinel standing in for minus infinity when a label's surface form is not
// among the endpoint's returned top-k logprobs. Finite so downstream
// arithmetic stays total; restricted_softmax treats it as zero mass.
inline constexpr double kLogitFloor = -1e9;

// The ordered label set, per-label surface-form variants, and the reserved
// null option. Surface forms are the first-token strings reported by the
// gateway (capitalization / leading-whitespace variants); they are matched
// as plain strings, never re-tokenized.
struct LabelSpace {
    std::vector<std::string> labels;                         // canonical names, ordered
    std::map<std::string, std::set<std::string>> variants;   // canonical -> surface forms
    std::string none_label;
    std::vector<std::string> prompt_order;                   // permutation of labels

    bool contains(const std::string& label) const;
    // Position of a canonical label in prompt_order.
    std::size_t prompt_position(const std::string& label) const;
    // Canonical label for a generated surface string (exact variant match,
    // then exact canonical, then case-insensitive canonical). nullopt if the
    // string matches nothing, including the none label, which is resolved
    // separately.
    std::optional<std::string> canonicalize(const std::string& surface) const;

    // Throws DataError if any structural invariant is violated.
    void validate() const;

    static LabelSpace from_json_text(const std::string& text);
    static LabelSpace load(const std::string& path);
};

// Per-label-step snapshot of the model's distribution, restricted to the
// label set. `label_probs` is the restricted softmax of `label_logits`; the
// none logit is stored when observed but excluded from the normalization.
struct StepDistribution {
    int step_index = 0;
    std::map<std::string, double> label_logits;
    std::optional<double> none_logit;
    std::map<std::string, double> label_probs;
    double entropy_nats = 0.0;
    std::string argmax_label;
    std::vector<std::string> floored_labels;  // surfaces missing from top-k
};

// Max over same-concept surface-form logits. Throws DataError on an empty map.
double aggregate_concept_logit(const std::map<std::string, double>& surface_logits);

// Softmax over exactly the given labels, max-subtracted for overflow safety.
// Throws DataError if the map is empty or every logit sits at the floor.
std::map<std::string, double> restricted_softmax(const std::map<std::string, double>& label_logits);

// Shannon entropy in nats, 0*ln 0 := 0. Throws DataError on a negative
// probability or if the values do not sum to 1 within 1e-6.
double entropy(const std::map<std::string, double>& dist);

// Assembles a StepDistribution from aggregated per-label logits: restricted
// softmax, entropy, argmax with ties broken by prompt_order position.
StepDistribution make_step_distribution(int step_index,
                                        std::map<std::string, double> label_logits,
                                        std::optional<double> none_logit,
                                        const LabelSpace& ls);

}  // namespace mldist
