#include "mldist/human_dist.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mldist/errors.hpp"
#include "mldist/rng.hpp"

namespace mldist {

void AnnotationSet::validate(const LabelSpace& ls) const {
    if (annotations.empty())
        throw DataError("document " + doc_id + " has no annotators");
    for (const auto& [annotator, labels] : annotations) {
        for (const auto& l : labels) {
            if (!ls.contains(l))
                throw DataError("unknown label '" + l + "' in annotation by " + annotator +
                                " on document " + doc_id);
        }
    }
}

GoldRule parse_gold_rule(const std::string& name) {
    if (name == "majority") return GoldRule::kMajority;
    if (name == "union") return GoldRule::kUnion;
    if (name == "provided") return GoldRule::kProvided;
    throw ConfigError("unknown gold rule: " + name);
}

HumanDistribution estimate_human_distribution(const AnnotationSet& ann, const LabelSpace& ls) {
    ann.validate(ls);
    HumanDistribution h;
    h.doc_id = ann.doc_id;
    h.n_annotators = static_cast<int>(ann.annotations.size());
    for (const auto& l : ls.labels) h.counts[l] = 0;
    for (const auto& [_, labels] : ann.annotations) {
        for (const auto& l : labels) h.counts[l] += 1;
    }
    return h;
}

std::set<std::string> aggregate_gold(const AnnotationSet& ann, const LabelSpace& ls, GoldRule rule,
                                     const std::optional<std::set<std::string>>& provided) {
    if (rule == GoldRule::kProvided) {
        if (!provided)
            throw DataError("document " + ann.doc_id + " has no provided gold set");
        return *provided;
    }
    const HumanDistribution h = estimate_human_distribution(ann, ls);
    std::set<std::string> gold;
    for (const auto& [label, k] : h.counts) {
        if (rule == GoldRule::kMajority) {
            if (2 * k > h.n_annotators) gold.insert(label);
        } else {
            if (k > 0) gold.insert(label);
        }
    }
    return gold;
}

std::set<std::string> document_gold(const Document& doc, const LabelSpace& ls, GoldRule rule) {
    if (rule == GoldRule::kProvided) {
        if (!doc.provided_gold)
            throw DataError("document " + doc.doc_id + " has no provided gold set");
        return *doc.provided_gold;
    }
    return aggregate_gold(annotation_set_of(doc), ls, rule);
}

std::set<std::string> document_gold_default(const Document& doc, const LabelSpace& ls) {
    if (doc.provided_gold) return *doc.provided_gold;
    return document_gold(doc, ls, GoldRule::kMajority);
}

std::optional<double> pooled_label_kappa(const std::vector<AnnotationSet>& corpus,
                                         const std::string& label) {
    // Symmetrized 2x2 table pooled over all co-annotating pairs and documents.
    std::array<std::array<double, 2>, 2> t{{{0.0, 0.0}, {0.0, 0.0}}};
    double n = 0.0;
    for (const auto& ann : corpus) {
        std::vector<int> marks;
        marks.reserve(ann.annotations.size());
        for (const auto& [_, labels] : ann.annotations) marks.push_back(labels.count(label) ? 1 : 0);
        for (std::size_t i = 0; i < marks.size(); ++i) {
            for (std::size_t j = i + 1; j < marks.size(); ++j) {
                t[marks[i]][marks[j]] += 1.0;
                t[marks[j]][marks[i]] += 1.0;
                n += 2.0;
            }
        }
    }
    if (n == 0.0) return std::nullopt;
    const double po = (t[0][0] + t[1][1]) / n;
    const double r0 = (t[0][0] + t[0][1]) / n;
    const double r1 = (t[1][0] + t[1][1]) / n;
    const double pe = r0 * r0 + r1 * r1;  // symmetrized table: row and column marginals match
    if (1.0 - pe < 1e-12) return std::nullopt;  // zero-variance label, chance-corrected agreement undefined
    return (po - pe) / (1.0 - pe);
}

namespace {

bool any_pair_shares_two_docs(const std::vector<AnnotationSet>& corpus) {
    std::map<std::pair<std::string, std::string>, int> shared;
    for (const auto& ann : corpus) {
        std::vector<std::string> ids;
        ids.reserve(ann.annotations.size());
        for (const auto& [a, _] : ann.annotations) ids.push_back(a);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                auto key = ids[i] < ids[j] ? std::make_pair(ids[i], ids[j])
                                           : std::make_pair(ids[j], ids[i]);
                if (++shared[key] >= 2) return true;
            }
        }
    }
    return false;
}

}  // namespace

AnnotationStats annotation_stats(const std::vector<AnnotationSet>& corpus, const LabelSpace& ls) {
    if (corpus.empty()) throw DataError("annotation_stats: empty corpus");
    AnnotationStats stats;
    stats.n_documents = static_cast<int>(corpus.size());
    std::set<std::string> annotators;
    long total_assignments = 0;
    int count_by_size[4] = {0, 0, 0, 0};
    for (const auto& ann : corpus) {
        ann.validate(ls);
        for (const auto& [a, _] : ann.annotations) annotators.insert(a);
        total_assignments += static_cast<long>(ann.annotations.size());
        const auto gold = aggregate_gold(ann, ls, GoldRule::kMajority);
        const std::size_t sz = std::min<std::size_t>(gold.size(), 3);
        count_by_size[sz] += 1;
    }
    stats.total_annotators = static_cast<int>(annotators.size());
    stats.mean_annotators_per_doc =
        static_cast<double>(total_assignments) / static_cast<double>(corpus.size());
    const double denom = static_cast<double>(corpus.size());
    stats.pct_0_labels = 100.0 * count_by_size[0] / denom;
    stats.pct_1_label = 100.0 * count_by_size[1] / denom;
    stats.pct_2_labels = 100.0 * count_by_size[2] / denom;
    stats.pct_3plus_labels = 100.0 * count_by_size[3] / denom;

    if (any_pair_shares_two_docs(corpus)) {
        double sum = 0.0;
        int defined = 0;
        for (const auto& l : ls.labels) {
            if (auto k = pooled_label_kappa(corpus, l)) {
                sum += *k;
                defined += 1;
            }
        }
        if (defined > 0) stats.mean_cohens_kappa = sum / defined;
    }
    return stats;
}

namespace {

// Stratum index: label-count class (0 none, 1 single, 2 multi) * 2 + disagreement.
int stratum_of(const Document& doc, const LabelSpace& ls) {
    const auto gold = document_gold_default(doc, ls);
    const int label_class = gold.empty() ? 0 : (gold.size() == 1 ? 1 : 2);
    bool disagreement = false;
    if (doc.has_annotations()) {
        disagreement = estimate_human_distribution(annotation_set_of(doc), ls).has_disagreement();
    }
    return label_class * 2 + (disagreement ? 1 : 0);
}

const char* kStratumNames[6] = {
    "no-label/no-disagreement",    "no-label/has-disagreement",
    "single-label/no-disagreement", "single-label/has-disagreement",
    "multi-label/no-disagreement",  "multi-label/has-disagreement",
};

}  // namespace

std::vector<std::string> make_eval_split(const std::vector<Document>& corpus, const LabelSpace& ls,
                                         int n, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("make_eval_split: n must be positive");
    std::array<std::vector<std::string>, 6> strata;
    for (const auto& doc : corpus) strata[stratum_of(doc, ls)].push_back(doc.doc_id);

    const int base = n / 6;
    const int rem = n % 6;
    Rng rng(seed);
    std::vector<std::string> selected;
    selected.reserve(n);
    for (int s = 0; s < 6; ++s) {
        const int quota = base + (s < rem ? 1 : 0);
        auto& pool = strata[s];
        if (static_cast<int>(pool.size()) < quota)
            throw DataError("insufficient stratum population for " + std::string(kStratumNames[s]) +
                            ": need " + std::to_string(quota) + ", have " +
                            std::to_string(pool.size()));
        // Partial Fisher-Yates: the first `quota` entries after shuffling.
        for (int i = 0; i < quota; ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            selected.push_back(pool[i]);
        }
    }
    return selected;
}

std::vector<Document> read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus file: " + path);
    std::vector<Document> docs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus line " + std::to_string(lineno) + " is not valid JSON: " +
                            e.what());
        }
        Document doc;
        try {
            doc.doc_id = j.at("doc_id").get<std::string>();
            doc.text = j.value("text", std::string());
            if (j.contains("annotations")) {
                for (const auto& [a, labels] : j.at("annotations").items()) {
                    doc.annotations[a] = labels.get<std::set<std::string>>();
                }
            }
            if (j.contains("gold")) {
                doc.provided_gold = j.at("gold").get<std::set<std::string>>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus line " + std::to_string(lineno) + " schema error: " + e.what());
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

AnnotationSet annotation_set_of(const Document& doc) {
    AnnotationSet ann;
    ann.doc_id = doc.doc_id;
    ann.annotations = doc.annotations;
    return ann;
}

}  // namespace mldist
