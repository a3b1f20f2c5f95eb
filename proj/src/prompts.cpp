#include "mldist/prompts.hpp"

#include <algorithm>
#include <cmath>

#include "mldist/errors.hpp"
#include "mldist/rng.hpp"

namespace mldist {

const std::string kDefaultKshotInstructions =
    "Classify the following inputs into none, one, or multiple the following labels per input: "
    "{labels}. Output exactly these labels and no others.";

const std::string kDefaultUnaryInstructions =
    "Classify the following question-label pairs as either \"reasonable\" or \"unreasonable\". "
    "Output either \"reasonable\" or \"unreasonable\" and nothing else.";

const std::string kDefaultBinaryInstructions =
    "Classify the following question into one of the two following labels. Output either \"a\" "
    "or \"b\" depending on which label is better and nothing else.";

namespace {

std::string expand_labels(const std::string& instructions, const LabelSpace& ls) {
    const std::string placeholder = "{labels}";
    const auto pos = instructions.find(placeholder);
    if (pos == std::string::npos) return instructions;
    return instructions.substr(0, pos) + render_label_list(ls) +
           instructions.substr(pos + placeholder.size());
}

void check_label_queryable(const std::string& label, const LabelSpace& ls) {
    if (!ls.contains(label) && label != ls.none_label)
        throw DataError("label not in label space: " + label);
}

}  // namespace

std::string render_label_list(const LabelSpace& ls) {
    std::string out;
    const auto& order = ls.prompt_order;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i > 0) out += (i + 1 == order.size()) ? " and " : ", ";
        out += order[i];
    }
    return out;
}

std::string render_label_line(const std::set<std::string>& labels, const LabelSpace& ls) {
    std::vector<std::string> ordered(labels.begin(), labels.end());
    std::sort(ordered.begin(), ordered.end(), [&ls](const auto& a, const auto& b) {
        return ls.prompt_position(a) < ls.prompt_position(b);
    });
    std::string out = "{\"label\": [";
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (i > 0) out += ", ";
        out += "\"" + ordered[i] + "\"";
    }
    out += "]}";
    return out;
}

std::vector<Demo> select_demos(const std::vector<Demo>& pool, int k, double multilabel_ratio,
                               std::uint64_t seed) {
    if (k < 0) throw ConfigError("select_demos: k must be non-negative");
    if (multilabel_ratio < 0.0 || multilabel_ratio > 1.0)
        throw ConfigError("select_demos: multilabel ratio must be in [0,1]");
    const int want_multi = static_cast<int>(std::llround(multilabel_ratio * k));
    const int want_single = k - want_multi;

    std::vector<Demo> multi, single;
    for (const auto& d : pool) (d.is_multilabel() ? multi : single).push_back(d);
    if (static_cast<int>(multi.size()) < want_multi)
        throw DataError("demo pool lacks enough multi-label examples: need " +
                        std::to_string(want_multi) + ", have " + std::to_string(multi.size()));
    if (static_cast<int>(single.size()) < want_single)
        throw DataError("demo pool lacks enough single-or-no-label examples: need " +
                        std::to_string(want_single) + ", have " + std::to_string(single.size()));

    Rng rng(seed);
    rng.shuffle(multi);
    rng.shuffle(single);
    std::vector<Demo> selected(multi.begin(), multi.begin() + want_multi);
    selected.insert(selected.end(), single.begin(), single.begin() + want_single);
    // Interleave deterministically so multi-label demos are not clustered.
    rng.shuffle(selected);
    return selected;
}

std::string build_kshot_prompt(const PromptSpec& spec, const LabelSpace& ls) {
    if (spec.template_kind != PromptKind::kKshotMultilabel)
        throw ConfigError("build_kshot_prompt: wrong template kind");
    if (static_cast<int>(spec.demos.size()) != spec.k)
        throw DataError("prompt spec has " + std::to_string(spec.demos.size()) + " demos, k=" +
                        std::to_string(spec.k));
    const int want_multi = static_cast<int>(std::llround(spec.multilabel_demo_ratio * spec.k));
    const int have_multi = static_cast<int>(
        std::count_if(spec.demos.begin(), spec.demos.end(), [](const Demo& d) { return d.is_multilabel(); }));
    if (have_multi != want_multi)
        throw DataError("demo set has " + std::to_string(have_multi) + " multi-label entries, ratio requires " +
                        std::to_string(want_multi));

    std::string out = expand_labels(spec.instructions, ls) + "\n\n";
    for (const auto& demo : spec.demos) {
        for (const auto& l : demo.labels) {
            if (!ls.contains(l)) throw DataError("demo label not in label space: " + l);
        }
        out += "Input: " + demo.text + "\n" + render_label_line(demo.labels, ls) + "\n\n";
    }
    out += "Input: " + spec.query + "\n";
    return out;
}

std::string build_unary_prompt(const std::string& doc_text, const std::string& label,
                               const LabelSpace& ls, const std::vector<UnaryDemo>& demos,
                               const std::string& instructions) {
    if (doc_text.empty()) throw DataError("build_unary_prompt: empty document text");
    check_label_queryable(label, ls);
    std::string out = expand_labels(instructions, ls) + "\n\n";
    for (const auto& d : demos) {
        out += "Question: " + d.text + "\nLabel: " + d.label + "\nIs the label reasonable: " +
               (d.reasonable ? "reasonable" : "unreasonable") + "\n\n";
    }
    out += "Question: " + doc_text + "\nLabel: " + label + "\nIs the label reasonable:";
    return out;
}

std::string build_binary_prompt(const std::string& doc_text, const std::string& label_i,
                                const std::string& label_j, const LabelSpace& ls,
                                const std::vector<BinaryDemo>& demos,
                                const std::string& instructions) {
    if (label_i == label_j)
        throw DataError("build_binary_prompt: identical labels: " + label_i);
    if (doc_text.empty()) throw DataError("build_binary_prompt: empty document text");
    check_label_queryable(label_i, ls);
    check_label_queryable(label_j, ls);
    std::string out = expand_labels(instructions, ls) + "\n\n";
    for (const auto& d : demos) {
        out += "Question: " + d.text + "\na. " + d.option_a + "\nb. " + d.option_b +
               "\nCorrect Label: " + (d.answer_is_a ? "a" : "b") + "\n\n";
    }
    out += "Question: " + doc_text + "\na. " + label_i + "\nb. " + label_j + "\nCorrect Label:";
    return out;
}

}  // namespace mldist
