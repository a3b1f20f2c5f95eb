#include "mldist/align.hpp"

#include <algorithm>
#include <fstream>

#include "mldist/errors.hpp"
#include "mldist/prompts.hpp"

namespace mldist {

void AlignedDistribution::validate(const LabelSpace& ls) const {
    if (probs.size() != ls.labels.size())
        throw DataError("aligned distribution for " + doc_id + " does not cover the label space");
    for (const auto& l : ls.labels) {
        auto it = probs.find(l);
        if (it == probs.end())
            throw DataError("aligned distribution for " + doc_id + " is missing label " + l);
        if (it->second < 0.0 || it->second > 1.0)
            throw DataError("aligned distribution for " + doc_id + " has probability outside "
                            "[0,1] for label " + l);
    }
}

AlignedDistribution compare_to_none(const StepDistribution& step0, const std::string& doc_id,
                                    const LabelSpace& ls) {
    if (!step0.none_logit)
        throw DataError("compare_to_none needs the none logit at the first label step; include "
                        "the none surface forms in the top-k watch list");
    AlignedDistribution out;
    out.method_id = "compare_to_none";
    out.doc_id = doc_id;
    for (const auto& l : ls.labels) {
        out.probs[l] = sigmoid(step0.label_logits.at(l) - *step0.none_logit);
    }
    return out;
}

AlignedDistribution hard_predictions(const GenerationTrace& trace, const LabelSpace& ls,
                                     double epsilon) {
    if (epsilon <= 0.0 || epsilon >= 0.5)
        throw ConfigError("hard_predictions: epsilon must be in (0, 0.5)");
    AlignedDistribution out;
    out.method_id = "hard";
    out.doc_id = trace.doc_id;
    for (const auto& l : ls.labels) out.probs[l] = epsilon;
    for (const auto& l : trace.predicted_labels) out.probs.at(l) = 1.0 - epsilon;
    return out;
}

AlignedDistribution fixed_distribution(double c, const std::string& doc_id, const LabelSpace& ls) {
    if (c < 0.0 || c > 1.0) throw ConfigError("fixed_distribution: constant must be in [0,1]");
    AlignedDistribution out;
    out.method_id = "fixed";
    out.doc_id = doc_id;
    for (const auto& l : ls.labels) out.probs[l] = c;
    return out;
}

AlignedDistribution max_over_generations(const GenerationTrace& trace, const LabelSpace& ls) {
    AlignedDistribution out;
    out.method_id = "max";
    out.doc_id = trace.doc_id;
    for (const auto& l : ls.labels) out.probs[l] = 0.0;
    for (const auto& step : trace.steps) {
        for (const auto& l : ls.labels) {
            out.probs[l] = std::max(out.probs[l], step.label_probs.at(l));
        }
    }
    return out;
}

namespace {

double two_option_share(const std::optional<double>& favored, const std::optional<double>& other,
                        bool allow_floor_fallback, const std::string& what) {
    if (!favored || !other) {
        if (!allow_floor_fallback)
            throw DataError(what + " option token missing from top-k logprobs; raise the "
                            "logprobs k or enable the floor fallback");
        const double f = favored.value_or(kLogitFloor);
        const double o = other.value_or(kLogitFloor);
        if (!favored && !other)
            throw DataError(what + ": both option tokens missing from top-k logprobs");
        return sigmoid(f - o);
    }
    return sigmoid(*favored - *other);
}

}  // namespace

double unary_probability(const std::string& doc_text, const std::string& label,
                         const LabelSpace& ls, CompletionBackend& backend,
                         const UnaryOptions& opts) {
    const std::string prompt = build_unary_prompt(doc_text, label, ls, opts.demos);
    const Completion completion = backend.complete(prompt);
    const auto reasonable = option_logit(completion, kReasonableSurfaces);
    const auto unreasonable = option_logit(completion, kUnreasonableSurfaces);
    return two_option_share(reasonable, unreasonable, opts.allow_floor_fallback,
                            "unary 'reasonable'");
}

AlignedDistribution unary_distribution(const std::string& doc_text, const std::string& doc_id,
                                       const LabelSpace& ls, CompletionBackend& backend,
                                       const UnaryOptions& opts) {
    AlignedDistribution out;
    out.method_id = "unary";
    out.doc_id = doc_id;
    for (const auto& l : ls.labels) {
        out.probs[l] = unary_probability(doc_text, l, ls, backend, opts);
    }
    return out;
}

double pairwise_preference(const std::string& doc_text, const std::string& label_i,
                           const std::string& label_j, const LabelSpace& ls,
                           CompletionBackend& backend, const BinaryOptions& opts) {
    const std::string prompt = build_binary_prompt(doc_text, label_i, label_j, ls, opts.demos);
    const Completion completion = backend.complete(prompt);
    const auto logit_a = option_logit(completion, kOptionASurfaces);
    const auto logit_b = option_logit(completion, kOptionBSurfaces);
    if (!logit_a || !logit_b)
        throw DataError("binary option token missing from top-k logprobs for pair (" + label_i +
                        ", " + label_j + ")");
    return sigmoid(*logit_a - *logit_b);
}

PairwiseTable collect_pairwise_table(const std::string& doc_text, const LabelSpace& ls,
                                     CompletionBackend& backend, const BinaryOptions& opts) {
    std::vector<std::string> items = ls.labels;
    items.push_back(ls.none_label);
    std::sort(items.begin(), items.end());
    PairwiseTable table;
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            double p = pairwise_preference(doc_text, items[i], items[j], ls, backend, opts);
            if (opts.symmetrize) {
                const double swapped =
                    pairwise_preference(doc_text, items[j], items[i], ls, backend, opts);
                p = 0.5 * (p + (1.0 - swapped));
            }
            set_preference(table, items[i], items[j], p);
        }
    }
    return table;
}

AlignedDistribution breakdown_from_table(const PairwiseTable& table, const std::string& doc_id,
                                         const LabelSpace& ls, BTMode mode, BTScores* fitted) {
    const BTScores scores = fit_bradley_terry(table, ls, mode);
    if (fitted) *fitted = scores;
    AlignedDistribution out;
    out.method_id = mode == BTMode::kProb ? "binary" : "binary_outcome";
    out.doc_id = doc_id;
    for (const auto& l : ls.labels) {
        out.probs[l] = sigmoid(scores.scores.at(l));  // none pinned at zero
    }
    return out;
}

AlignedDistribution binary_breakdown(const std::string& doc_text, const std::string& doc_id,
                                     const LabelSpace& ls, CompletionBackend& backend,
                                     const BinaryOptions& opts) {
    const PairwiseTable table = collect_pairwise_table(doc_text, ls, backend, opts);
    return breakdown_from_table(table, doc_id, ls, opts.mode);
}

nlohmann::json aligned_to_json(const AlignedDistribution& dist) {
    nlohmann::json j;
    j["schema_version"] = kDistributionSchemaVersion;
    j["method_id"] = dist.method_id;
    j["doc_id"] = dist.doc_id;
    j["probs"] = dist.probs;
    return j;
}

AlignedDistribution aligned_from_json(const nlohmann::json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kDistributionSchemaVersion)
        throw DataError("unsupported distributions schema version: " + std::to_string(version));
    AlignedDistribution d;
    d.method_id = j.at("method_id").get<std::string>();
    d.doc_id = j.at("doc_id").get<std::string>();
    d.probs = j.at("probs").get<std::map<std::string, double>>();
    return d;
}

std::vector<AlignedDistribution> read_distributions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open distributions file: " + path);
    std::vector<AlignedDistribution> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(aligned_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("distributions file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace mldist
