#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mldist/label_core.hpp"
#include "mldist/metrics.hpp"
#include "mldist/trace.hpp"

namespace mldist {

struct EmbeddingMatrix {
    std::vector<std::string> doc_ids;  // aligned with rows
    Eigen::MatrixXd values;

    void validate() const;  // finite entries, unique ids, shape agreement
};

// Per-feature standardization followed by projection onto the top ceil(d/4)
// right singular vectors of the (standardized) training matrix. The fitted
// operator is reused verbatim on evaluation data.
struct Reduction {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;            // 1/std, 0 for zero-variance features
    std::optional<Eigen::MatrixXd> basis;  // d x t, orthonormal columns; absent when skipped
    bool skipped = false;             // d < 4: standardization only
    bool rank_capped = false;         // target dim exceeded available singular vectors

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
    int output_dim() const;
};

Reduction fit_reduction(const EmbeddingMatrix& X);

struct LabelProbe {
    Eigen::VectorXd weights;
    double bias = 0.0;
    bool degenerate = false;      // single-class training targets
    bool degenerate_positive = false;

    bool predict(const Eigen::VectorXd& x) const;
    double probability(const Eigen::VectorXd& x) const;
};

struct ProbeModel {
    Reduction reduction;
    std::map<std::string, LabelProbe> probes;  // one per label
    std::vector<std::string> degenerate_labels;
};

// L2-regularized logistic regression per label (strength 1.0, bias
// unpenalized), Newton iterations to gradient norm < 1e-8. Labels with
// single-class targets get a flagged constant probe.
ProbeModel train_probe(const Eigen::MatrixXd& X_reduced, const Reduction& reduction,
                       const std::vector<std::set<std::string>>& targets, const LabelSpace& ls);

// Regularized objective value at (weights, bias); exposed so tests can pit
// the trainer against an independent optimizer.
double logistic_objective(const Eigen::MatrixXd& X, const std::vector<int>& y01,
                          const Eigen::VectorXd& weights, double bias, double l2_strength);

std::vector<std::set<std::string>> predict_sets(const ProbeModel& model,
                                                const Eigen::MatrixXd& X_reduced,
                                                const LabelSpace& ls);

enum class ProbeEvalMode { kGold, kPred, kPred2Plus };

ProbeEvalMode parse_probe_mode(const std::string& name);
std::string probe_mode_name(ProbeEvalMode mode);

// Evaluation targets per document for a mode: gold sets, full predicted
// sets, or predicted sets restricted to labels generated at step >= 1.
std::vector<std::set<std::string>> probe_targets(
    ProbeEvalMode mode, const std::vector<std::string>& doc_ids,
    const std::map<std::string, std::set<std::string>>& golds,
    const std::map<std::string, const GenerationTrace*>& traces);

// Micro-F1 of probe predictions against the mode's targets.
MicroF1Result eval_probe(const ProbeModel& model, const Eigen::MatrixXd& X_reduced,
                         const std::vector<std::set<std::string>>& targets, const LabelSpace& ls);

// Sidecar I/O: line-delimited records keyed by (doc_id, prompt_fingerprint).
struct EmbeddingRecord {
    std::string doc_id;
    std::string prompt_fingerprint;
    std::vector<double> values;
};

std::vector<EmbeddingRecord> read_embedding_sidecar(const std::string& path);
void write_embedding_sidecar(const std::vector<EmbeddingRecord>& records, const std::string& path);

}  // namespace mldist
