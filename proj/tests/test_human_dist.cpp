#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mldist/errors.hpp"
#include "mldist/human_dist.hpp"
#include "mldist/rng.hpp"

using namespace mldist;

namespace {

LabelSpace space() {
    LabelSpace ls;
    ls.labels = {"anger", "fear", "joy"};
    ls.none_label = "none";
    for (const auto& l : ls.labels) ls.variants[l] = {l};
    ls.variants["none"] = {"none"};
    ls.prompt_order = ls.labels;
    return ls;
}

}  // namespace

TEST_CASE("human distribution counts annotator fractions") {
    const auto ls = space();
    AnnotationSet ann;
    ann.doc_id = "d1";
    ann.annotations = {{"a1", {"joy"}}, {"a2", {"joy", "fear"}}, {"a3", {}}};
    const auto h = estimate_human_distribution(ann, ls);
    CHECK(h.n_annotators == 3);
    CHECK(h.fraction("joy") == doctest::Approx(2.0 / 3.0));
    CHECK(h.fraction("fear") == doctest::Approx(1.0 / 3.0));
    CHECK(h.fraction("anger") == 0.0);
    CHECK(h.has_disagreement());
}

TEST_CASE("full agreement gives fraction 1 and no disagreement") {
    const auto ls = space();
    AnnotationSet ann{"d1", {{"a1", {"joy"}}, {"a2", {"joy"}}}};
    const auto h = estimate_human_distribution(ann, ls);
    CHECK(h.fraction("joy") == 1.0);
    CHECK_FALSE(h.has_disagreement());
}

TEST_CASE("unknown labels are rejected by name") {
    const auto ls = space();
    AnnotationSet ann{"d1", {{"a1", {"delight"}}}};
    CHECK_THROWS_WITH_AS(estimate_human_distribution(ann, ls),
                         doctest::Contains("delight"), DataError);
}

TEST_CASE("gold aggregation rules") {
    const auto ls = space();
    AnnotationSet ann{"d1", {{"a1", {"joy"}}, {"a2", {"joy"}}, {"a3", {"anger"}}}};
    CHECK(aggregate_gold(ann, ls, GoldRule::kMajority) == std::set<std::string>{"joy"});
    CHECK(aggregate_gold(ann, ls, GoldRule::kUnion) == std::set<std::string>{"anger", "joy"});
    const std::set<std::string> provided{"fear"};
    CHECK(aggregate_gold(ann, ls, GoldRule::kProvided, provided) == provided);
    CHECK_THROWS_AS(aggregate_gold(ann, ls, GoldRule::kProvided), DataError);
}

TEST_CASE("majority with even counts is strict: a 50/50 label is excluded") {
    const auto ls = space();
    AnnotationSet ann{"d1", {{"a1", {"joy"}}, {"a2", {"anger"}}}};
    CHECK(aggregate_gold(ann, ls, GoldRule::kMajority).empty());
}

TEST_CASE("all-zero fractions give a legal empty majority gold set") {
    const auto ls = space();
    AnnotationSet ann{"d1", {{"a1", {}}, {"a2", {}}}};
    CHECK(aggregate_gold(ann, ls, GoldRule::kMajority).empty());
    CHECK(aggregate_gold(ann, ls, GoldRule::kUnion).empty());
}

TEST_CASE("majority gold is always a subset of union gold") {
    const auto ls = space();
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        AnnotationSet ann;
        ann.doc_id = "d";
        const int n_annotators = 1 + static_cast<int>(rng.below(5));
        for (int a = 0; a < n_annotators; ++a) {
            std::set<std::string> chosen;
            for (const auto& l : ls.labels) {
                if (rng.uniform() < 0.4) chosen.insert(l);
            }
            ann.annotations["a" + std::to_string(a)] = chosen;
        }
        const auto majority = aggregate_gold(ann, ls, GoldRule::kMajority);
        const auto unioned = aggregate_gold(ann, ls, GoldRule::kUnion);
        CHECK(std::includes(unioned.begin(), unioned.end(), majority.begin(), majority.end()));
    }
}

TEST_CASE("annotation fractions are invariant under annotator relabeling") {
    const auto ls = space();
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        AnnotationSet ann;
        ann.doc_id = "d";
        const int n = 2 + static_cast<int>(rng.below(6));
        std::vector<std::set<std::string>> selections;
        for (int a = 0; a < n; ++a) {
            std::set<std::string> chosen;
            for (const auto& l : ls.labels) {
                if (rng.uniform() < 0.5) chosen.insert(l);
            }
            selections.push_back(chosen);
            ann.annotations["orig" + std::to_string(a)] = chosen;
        }
        rng.shuffle(selections);
        AnnotationSet permuted;
        permuted.doc_id = "d";
        for (int a = 0; a < n; ++a) {
            permuted.annotations["renamed" + std::to_string(a)] = selections[a];
        }
        const auto h1 = estimate_human_distribution(ann, ls);
        const auto h2 = estimate_human_distribution(permuted, ls);
        for (const auto& l : ls.labels) CHECK(h1.fraction(l) == h2.fraction(l));
    }
}

TEST_CASE("perfect agreement over 10 docs gives kappa 1") {
    const auto ls = space();
    std::vector<AnnotationSet> corpus;
    Rng rng(5);
    for (int d = 0; d < 10; ++d) {
        std::set<std::string> chosen;
        for (const auto& l : ls.labels) {
            if (rng.uniform() < 0.5) chosen.insert(l);
        }
        corpus.push_back({"d" + std::to_string(d), {{"a1", chosen}, {"a2", chosen}}});
    }
    const auto stats = annotation_stats(corpus, ls);
    REQUIRE(stats.mean_cohens_kappa.has_value());
    CHECK(*stats.mean_cohens_kappa == doctest::Approx(1.0));
    CHECK(stats.total_annotators == 2);
    CHECK(stats.mean_annotators_per_doc == doctest::Approx(2.0));
}

TEST_CASE("kappa is symmetric in the annotator pair") {
    const auto ls = space();
    std::vector<AnnotationSet> corpus = {
        {"d0", {{"a1", {"joy"}}, {"a2", {"joy", "fear"}}}},
        {"d1", {{"a1", {"anger"}}, {"a2", {}}}},
        {"d2", {{"a1", {"joy", "anger"}}, {"a2", {"anger"}}}},
        {"d3", {{"a1", {}}, {"a2", {"fear"}}}},
    };
    std::vector<AnnotationSet> swapped;
    for (const auto& ann : corpus) {
        AnnotationSet s;
        s.doc_id = ann.doc_id;
        s.annotations["a1"] = ann.annotations.at("a2");
        s.annotations["a2"] = ann.annotations.at("a1");
        swapped.push_back(s);
    }
    for (const auto& l : ls.labels) {
        const auto k1 = pooled_label_kappa(corpus, l);
        const auto k2 = pooled_label_kappa(swapped, l);
        CHECK(k1.has_value() == k2.has_value());
        if (k1) CHECK(*k1 == doctest::Approx(*k2));
    }
}

TEST_CASE("single-annotator corpus reports kappa as absent, not 0") {
    const auto ls = space();
    std::vector<AnnotationSet> corpus = {
        {"d0", {{"a1", {"joy"}}}},
        {"d1", {{"a1", {"anger"}}}},
    };
    const auto stats = annotation_stats(corpus, ls);
    CHECK_FALSE(stats.mean_cohens_kappa.has_value());
}

TEST_CASE("no pair sharing two documents reports kappa as absent") {
    const auto ls = space();
    std::vector<AnnotationSet> corpus = {
        {"d0", {{"a1", {"joy"}}, {"a2", {"joy"}}}},
        {"d1", {{"a3", {"anger"}}, {"a4", {"anger"}}}},
    };
    CHECK_FALSE(annotation_stats(corpus, ls).mean_cohens_kappa.has_value());
}

TEST_CASE("label count percentages come from the majority gold sets") {
    const auto ls = space();
    std::vector<AnnotationSet> corpus = {
        {"d0", {{"a1", {}}, {"a2", {}}}},                                  // 0 labels
        {"d1", {{"a1", {"joy"}}, {"a2", {"joy"}}}},                        // 1 label
        {"d2", {{"a1", {"joy", "fear"}}, {"a2", {"joy", "fear"}}}},        // 2 labels
        {"d3", {{"a1", {"joy", "fear", "anger"}}, {"a2", {"joy", "fear", "anger"}}}},  // 3+
    };
    const auto stats = annotation_stats(corpus, ls);
    CHECK(stats.pct_0_labels == doctest::Approx(25.0));
    CHECK(stats.pct_1_label == doctest::Approx(25.0));
    CHECK(stats.pct_2_labels == doctest::Approx(25.0));
    CHECK(stats.pct_3plus_labels == doctest::Approx(25.0));
}

namespace {

std::vector<Document> split_corpus(int per_stratum) {
    // per_stratum docs in each of the six strata
    std::vector<Document> corpus;
    int id = 0;
    auto push = [&corpus, &id](std::set<std::string> a1, std::set<std::string> a2,
                               std::set<std::string> a3) {
        Document doc;
        doc.doc_id = "d" + std::to_string(id++);
        doc.text = "text";
        doc.annotations = {{"a1", a1}, {"a2", a2}, {"a3", a3}};
        corpus.push_back(doc);
    };
    for (int i = 0; i < per_stratum; ++i) {
        push({}, {}, {});                                      // none, agree
        push({"joy"}, {}, {});                                 // none (no majority), disagree
        push({"joy"}, {"joy"}, {"joy"});                       // single, agree
        push({"joy"}, {"joy"}, {});                            // single, disagree
        push({"joy", "fear"}, {"joy", "fear"}, {"joy", "fear"});  // multi, agree
        push({"joy", "fear"}, {"joy", "fear"}, {"joy"});       // multi, disagree
    }
    return corpus;
}

}  // namespace

TEST_CASE("eval split is stratified within one of the even quota") {
    const auto ls = space();
    const auto corpus = split_corpus(40);
    const auto ids = make_eval_split(corpus, ls, 200, 42);
    CHECK(ids.size() == 200);
    // With 200/6 quotas the per-stratum counts are 34 or 33.
    std::map<int, int> per_stratum;
    std::map<std::string, const Document*> by_id;
    for (const auto& d : corpus) by_id[d.doc_id] = &d;
    for (const auto& id : ids) {
        const auto& doc = *by_id.at(id);
        const auto gold = document_gold_default(doc, ls);
        const int label_class = gold.empty() ? 0 : (gold.size() == 1 ? 1 : 2);
        const bool dis =
            estimate_human_distribution(annotation_set_of(doc), ls).has_disagreement();
        per_stratum[label_class * 2 + (dis ? 1 : 0)] += 1;
    }
    const double target = 200.0 / 6.0;
    for (const auto& [_, count] : per_stratum) {
        CHECK(std::abs(count - target) <= 1.0);
    }
}

TEST_CASE("eval split n=6 takes exactly one per stratum and repeats with the seed") {
    const auto ls = space();
    const auto corpus = split_corpus(3);
    const auto a = make_eval_split(corpus, ls, 6, 7);
    const auto b = make_eval_split(corpus, ls, 6, 7);
    CHECK(a.size() == 6);
    CHECK(a == b);
    const auto c = make_eval_split(corpus, ls, 6, 8);
    CHECK(c.size() == 6);
}

TEST_CASE("eval split names the deficient stratum") {
    const auto ls = space();
    std::vector<Document> corpus;
    Document doc;
    doc.doc_id = "only";
    doc.annotations = {{"a1", {"joy"}}, {"a2", {"joy"}}};
    corpus.push_back(doc);
    CHECK_THROWS_WITH_AS(make_eval_split(corpus, ls, 6, 1),
                         doctest::Contains("no-label/no-disagreement"), DataError);
}
