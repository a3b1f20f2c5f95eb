#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mldist/align.hpp"
#include "mldist/errors.hpp"
#include "mldist/rng.hpp"

using namespace mldist;

namespace {

LabelSpace space() {
    LabelSpace ls;
    ls.labels = {"a", "b", "c"};
    ls.none_label = "none";
    for (const auto& l : ls.labels) ls.variants[l] = {l};
    ls.variants["none"] = {"none"};
    ls.prompt_order = ls.labels;
    return ls;
}

GenerationTrace trace_with_steps(const LabelSpace& ls,
                                 const std::vector<std::map<std::string, double>>& logits,
                                 const std::vector<std::string>& predicted,
                                 std::optional<double> none_logit = std::nullopt) {
    GenerationTrace t;
    t.doc_id = "doc";
    t.model_id = "m";
    t.predicted_labels = predicted;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        t.steps.push_back(
            make_step_distribution(static_cast<int>(i), logits[i], none_logit, ls));
    }
    t.stopped_after = static_cast<int>(t.steps.size()) - 1;
    return t;
}

}  // namespace

TEST_CASE("compare_to_none closed forms") {
    const auto ls = space();
    auto step = make_step_distribution(0, {{"a", 1.5}, {"b", 1.5 + std::log(3.0)}, {"c", -2.0}},
                                       1.5, ls);
    const auto dist = compare_to_none(step, "doc", ls);
    CHECK(dist.probs.at("a") == doctest::Approx(0.5));            // equal logits
    CHECK(dist.probs.at("b") == doctest::Approx(0.75));           // gap ln 3
    CHECK(dist.method_id == "compare_to_none");
}

TEST_CASE("compare_to_none is shift invariant") {
    const auto ls = space();
    const auto a = make_step_distribution(0, {{"a", 0.2}, {"b", -1.0}, {"c", 2.0}}, 0.7, ls);
    const auto b = make_step_distribution(0, {{"a", 7.2}, {"b", 6.0}, {"c", 9.0}}, 7.7, ls);
    const auto da = compare_to_none(a, "doc", ls);
    const auto db = compare_to_none(b, "doc", ls);
    for (const auto& l : ls.labels) CHECK(da.probs.at(l) == doctest::Approx(db.probs.at(l)));
}

TEST_CASE("compare_to_none is strictly increasing in the logit gap") {
    const auto ls = space();
    Rng rng(5150);
    double previous = -1.0;
    for (double gap = -6.0; gap <= 6.0; gap += 0.25) {
        const double none = rng.uniform(-2.0, 2.0);
        const auto step = make_step_distribution(
            0, {{"a", none + gap}, {"b", 0.0}, {"c", 0.4}}, none, ls);
        const double p = compare_to_none(step, "doc", ls).probs.at("a");
        CHECK(p > previous);
        previous = p;
    }
}

TEST_CASE("compare_to_none requires the none logit") {
    const auto ls = space();
    const auto step = make_step_distribution(0, {{"a", 0.0}, {"b", 0.0}, {"c", 0.0}},
                                             std::nullopt, ls);
    CHECK_THROWS_WITH_AS(compare_to_none(step, "doc", ls), doctest::Contains("none"), DataError);
}

TEST_CASE("hard predictions assign 1-eps to predicted labels") {
    const auto ls = space();
    auto t = trace_with_steps(ls, {{{"a", 3.0}, {"b", 0.0}, {"c", 0.0}}}, {"a"});
    const auto dist = hard_predictions(t, ls, 0.01);
    CHECK(dist.probs.at("a") == doctest::Approx(0.99));
    CHECK(dist.probs.at("b") == doctest::Approx(0.01));
    CHECK(dist.probs.at("c") == doctest::Approx(0.01));
}

TEST_CASE("hard predictions: empty prediction gives all epsilon") {
    const auto ls = space();
    GenerationTrace t;
    t.doc_id = "doc";
    const auto dist = hard_predictions(t, ls, 0.05);
    for (const auto& l : ls.labels) CHECK(dist.probs.at(l) == doctest::Approx(0.05));
}

TEST_CASE("hard predictions: duplicates collapse to one assignment") {
    const auto ls = space();
    auto t = trace_with_steps(ls,
                              {{{"a", 3.0}, {"b", 0.0}, {"c", 0.0}},
                               {{"a", 3.0}, {"b", 0.0}, {"c", 0.0}}},
                              {"a", "a"});
    const auto dist = hard_predictions(t, ls, 0.01);
    CHECK(dist.probs.at("a") == doctest::Approx(0.99));
    CHECK_THROWS_AS(hard_predictions(t, ls, 0.6), ConfigError);
}

TEST_CASE("fixed distribution is constant") {
    const auto ls = space();
    const auto dist = fixed_distribution(0.1, "doc", ls);
    for (const auto& l : ls.labels) CHECK(dist.probs.at(l) == 0.1);
    const auto zero = fixed_distribution(0.0, "doc", ls);
    for (const auto& l : ls.labels) CHECK(zero.probs.at(l) == 0.0);
    const auto one = fixed_distribution(1.0, "doc", ls);
    for (const auto& l : ls.labels) CHECK(one.probs.at(l) == 1.0);
    CHECK_THROWS_AS(fixed_distribution(1.5, "doc", ls), ConfigError);
}

TEST_CASE("max over generations: single step equals that step") {
    const auto ls = space();
    auto t = trace_with_steps(ls, {{{"a", 2.0}, {"b", 0.0}, {"c", -1.0}}}, {"a"});
    const auto dist = max_over_generations(t, ls);
    for (const auto& l : ls.labels) {
        CHECK(dist.probs.at(l) == doctest::Approx(t.steps[0].label_probs.at(l)));
    }
}

TEST_CASE("max over generations: elementwise max and zero-step traces") {
    const auto ls = space();
    GenerationTrace empty;
    empty.doc_id = "doc";
    const auto zeros = max_over_generations(empty, ls);
    for (const auto& l : ls.labels) CHECK(zeros.probs.at(l) == 0.0);

    // Fixture trace: expected values from an independent brute-force pass.
    Rng rng(31337);
    for (int trial = 0; trial < 50; ++trial) {
        const int n_steps = 1 + static_cast<int>(rng.below(4));
        std::vector<std::map<std::string, double>> logits(n_steps);
        std::vector<std::string> predicted(n_steps, "a");
        for (auto& step : logits) {
            for (const auto& l : ls.labels) step[l] = rng.uniform(-4.0, 4.0);
        }
        auto t = trace_with_steps(ls, logits, predicted);
        const auto dist = max_over_generations(t, ls);
        for (const auto& l : ls.labels) {
            double brute = 0.0;
            for (const auto& step : t.steps) brute = std::max(brute, step.label_probs.at(l));
            CHECK(dist.probs.at(l) == brute);
            CHECK(dist.probs.at(l) >= t.steps[0].label_probs.at(l));  // dominance
        }
        // every predicted label keeps at least its own-step probability
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            const auto& l = t.predicted_labels[i];
            CHECK(dist.probs.at(l) >= t.steps[i].label_probs.at(l));
        }
    }
}

TEST_CASE("breakdown_from_table: all-0.5 input gives all probs 0.5") {
    const auto ls = space();
    PairwiseTable table;
    std::vector<std::string> items = ls.labels;
    items.push_back("none");
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            set_preference(table, items[i], items[j], 0.5);
        }
    }
    const auto dist = breakdown_from_table(table, "doc", ls, BTMode::kProb);
    for (const auto& l : ls.labels) CHECK(dist.probs.at(l) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("breakdown_from_table: a dominant label outranks the others") {
    const auto ls = space();
    PairwiseTable table;
    std::vector<std::string> items = ls.labels;
    items.push_back("none");
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            double p = 0.5;
            if (items[i] == "b") p = 0.9;
            if (items[j] == "b") p = 0.1;
            set_preference(table, items[i], items[j], p);
        }
    }
    const auto dist = breakdown_from_table(table, "doc", ls, BTMode::kProb);
    CHECK(dist.probs.at("b") > dist.probs.at("a"));
    CHECK(dist.probs.at("b") > dist.probs.at("c"));
}

TEST_CASE("breakdown_from_table matches a grid-search oracle on 2 labels") {
    LabelSpace ls;
    ls.labels = {"a", "b"};
    ls.none_label = "none";
    for (const auto& l : ls.labels) ls.variants[l] = {l};
    ls.variants["none"] = {"none"};
    ls.prompt_order = ls.labels;

    PairwiseTable table;
    set_preference(table, "a", "b", 0.7);
    set_preference(table, "a", "none", 0.6);
    set_preference(table, "b", "none", 0.45);

    // Independent route: coarse-to-fine grid over the two free scores.
    const auto prob = BTProblem::build(table, ls, BTMode::kProb);
    double best_a = 0.0, best_b = 0.0, radius = 8.0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int round = 0; round < 8; ++round) {
        double ra = best_a, rb = best_b;
        for (int ia = 0; ia <= 40; ++ia) {
            for (int ib = 0; ib <= 40; ++ib) {
                const double a = best_a - radius + 2.0 * radius * ia / 40.0;
                const double b = best_b - radius + 2.0 * radius * ib / 40.0;
                const double loss = prob.loss({a, b, 0.0});
                if (loss < best_loss) {
                    best_loss = loss;
                    ra = a;
                    rb = b;
                }
            }
        }
        best_a = ra;
        best_b = rb;
        radius /= 10.0;
    }
    const auto dist = breakdown_from_table(table, "doc", ls, BTMode::kProb);
    CHECK(std::abs(dist.probs.at("a") - sigmoid(best_a)) < 1e-3);
    CHECK(std::abs(dist.probs.at("b") - sigmoid(best_b)) < 1e-3);
}

TEST_CASE("aligned distribution serialization round-trips") {
    const auto ls = space();
    const auto dist = fixed_distribution(0.375, "doc-17", ls);
    const auto j = aligned_to_json(dist);
    const auto back = aligned_from_json(j);
    CHECK(back.method_id == dist.method_id);
    CHECK(back.doc_id == dist.doc_id);
    CHECK(back.probs == dist.probs);
    CHECK(j.dump() == aligned_to_json(back).dump());
}

TEST_CASE("aligned distribution validation") {
    const auto ls = space();
    AlignedDistribution d;
    d.method_id = "x";
    d.doc_id = "doc";
    d.probs = {{"a", 0.5}, {"b", 0.5}};
    CHECK_THROWS_AS(d.validate(ls), DataError);
    d.probs["c"] = 1.5;
    CHECK_THROWS_AS(d.validate(ls), DataError);
    d.probs["c"] = 0.5;
    CHECK_NOTHROW(d.validate(ls));
}
