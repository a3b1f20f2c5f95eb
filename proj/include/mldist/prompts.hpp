#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "mldist/label_core.hpp"

namespace mldist {

enum class PromptKind { kKshotMultilabel, kUnary, kBinary };

struct Demo {
    std::string text;
    std::set<std::string> labels;  // canonical; empty means the none option
    bool is_multilabel() const { return labels.size() >= 2; }
};

struct UnaryDemo {
    std::string text;
    std::string label;
    bool reasonable = true;
};

struct BinaryDemo {
    std::string text;
    std::string option_a;
    std::string option_b;
    bool answer_is_a = true;
};

// Instruction templates; "{labels}" expands to the prompt-order label list.
extern const std::string kDefaultKshotInstructions;
extern const std::string kDefaultUnaryInstructions;
extern const std::string kDefaultBinaryInstructions;

struct PromptSpec {
    PromptKind template_kind = PromptKind::kKshotMultilabel;
    std::string instructions = kDefaultKshotInstructions;
    std::vector<Demo> demos;  // exactly k entries
    std::string query;
    int k = 0;
    double multilabel_demo_ratio = 0.0;
    // unary
    std::string unary_label;
    // binary, presented as options a and b in this order
    std::string binary_first;
    std::string binary_second;
};

// "a, b, c and d" over ls.prompt_order.
std::string render_label_list(const LabelSpace& ls);

// JSON-style output line for a label set, labels ordered by prompt position:
// {"label": ["joy", "sadness"]}
std::string render_label_line(const std::set<std::string>& labels, const LabelSpace& ls);

// Picks k demos with round(ratio * k) multi-label entries, deterministically
// given the seed. Throws DataError when the pool cannot satisfy either side.
std::vector<Demo> select_demos(const std::vector<Demo>& pool, int k, double multilabel_ratio,
                               std::uint64_t seed);

// Instruction line, k demo blocks, then the bare query line awaiting the
// model's label list.
std::string build_kshot_prompt(const PromptSpec& spec, const LabelSpace& ls);

// Question/label block ending "Is the label reasonable:". The none option is
// a queryable label. Throws DataError on empty document text.
std::string build_unary_prompt(const std::string& doc_text, const std::string& label,
                               const LabelSpace& ls,
                               const std::vector<UnaryDemo>& demos = {},
                               const std::string& instructions = kDefaultUnaryInstructions);

// Pairwise block with options "a." and "b." in the given order, ending
// "Correct Label:". Throws DataError on identical labels.
std::string build_binary_prompt(const std::string& doc_text, const std::string& label_i,
                                const std::string& label_j, const LabelSpace& ls,
                                const std::vector<BinaryDemo>& demos = {},
                                const std::string& instructions = kDefaultBinaryInstructions);

}  // namespace mldist
