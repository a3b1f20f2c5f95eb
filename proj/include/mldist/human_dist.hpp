#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mldist/label_core.hpp"

namespace mldist {

// Per-annotator label selections for one document.
struct AnnotationSet {
    std::string doc_id;
    std::map<std::string, std::set<std::string>> annotations;  // annotator id -> labels

    void validate(const LabelSpace& ls) const;
};

// Empirical annotator-selection fractions. Counts are kept so every fraction
// is exactly k / n_annotators.
struct HumanDistribution {
    std::string doc_id;
    std::map<std::string, int> counts;  // label -> number of annotators selecting it
    int n_annotators = 0;

    double fraction(const std::string& label) const {
        auto it = counts.find(label);
        const int k = it == counts.end() ? 0 : it->second;
        return static_cast<double>(k) / static_cast<double>(n_annotators);
    }
    // Some label chosen by a strict subset of annotators.
    bool has_disagreement() const {
        for (const auto& [_, k] : counts) {
            if (k > 0 && k < n_annotators) return true;
        }
        return false;
    }
};

// One corpus record: text, annotator labels, optional dataset-provided gold.
struct Document {
    std::string doc_id;
    std::string text;
    std::map<std::string, std::set<std::string>> annotations;
    std::optional<std::set<std::string>> provided_gold;

    bool has_annotations() const { return !annotations.empty(); }
};

enum class GoldRule { kMajority, kUnion, kProvided };

GoldRule parse_gold_rule(const std::string& name);

// Fraction of annotators selecting each label (every label in the space gets
// an entry, possibly 0). Throws DataError on an unknown label, naming it.
HumanDistribution estimate_human_distribution(const AnnotationSet& ann, const LabelSpace& ls);

// majority: fraction > 1/2 (strict, so a 50/50 label is excluded);
// union: fraction > 0; provided: passthrough of the attached gold set.
std::set<std::string> aggregate_gold(const AnnotationSet& ann, const LabelSpace& ls, GoldRule rule,
                                     const std::optional<std::set<std::string>>& provided = std::nullopt);

// Gold set for a corpus document: provided where available, else majority.
// `rule` forces a specific aggregation.
std::set<std::string> document_gold(const Document& doc, const LabelSpace& ls, GoldRule rule);
std::set<std::string> document_gold_default(const Document& doc, const LabelSpace& ls);

struct AnnotationStats {
    int n_documents = 0;
    int total_annotators = 0;       // distinct annotator ids
    double mean_annotators_per_doc = 0.0;
    // Percentage of documents whose majority gold set has 0 / 1 / 2 / 3+ labels.
    double pct_0_labels = 0.0;
    double pct_1_label = 0.0;
    double pct_2_labels = 0.0;
    double pct_3plus_labels = 0.0;
    // Mean per-label Cohen's kappa over pooled co-annotations; absent when no
    // annotator pair shares >= 2 documents or every label is degenerate.
    std::optional<double> mean_cohens_kappa;
    std::string kappa_pooling =
        "per-label kappa over pooled co-annotating pairs, unweighted mean across labels "
        "(pooling across pairs is a toolkit choice; degenerate zero-variance labels excluded)";
};

AnnotationStats annotation_stats(const std::vector<AnnotationSet>& corpus, const LabelSpace& ls);

// Cohen's kappa for one label from a pooled, symmetrized 2x2 co-annotation
// table. nullopt when chance agreement is 1 and observed agreement is not
// (degenerate). Exposed for tests.
std::optional<double> pooled_label_kappa(const std::vector<AnnotationSet>& corpus,
                                         const std::string& label);

// Stratified evaluation split over the 3x2 grid
// {no label, single label, multi-label} x {no disagreement, has disagreement}.
// Deterministic given seed; throws DataError naming any deficient stratum.
std::vector<std::string> make_eval_split(const std::vector<Document>& corpus, const LabelSpace& ls,
                                         int n, std::uint64_t seed);

// Corpus file I/O (line-delimited JSON, one document per line; see
// docs/formats.md).
std::vector<Document> read_corpus(const std::string& path);
AnnotationSet annotation_set_of(const Document& doc);

}  // namespace mldist
