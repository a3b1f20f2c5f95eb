#include "mldist/label_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mldist/errors.hpp"

namespace mldist {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

bool LabelSpace::contains(const std::string& label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::size_t LabelSpace::prompt_position(const std::string& label) const {
    for (std::size_t i = 0; i < prompt_order.size(); ++i) {
        if (prompt_order[i] == label) return i;
    }
    throw DataError("label not in prompt_order: " + label);
}

std::optional<std::string> LabelSpace::canonicalize(const std::string& surface) const {
    for (const auto& [canonical, forms] : variants) {
        if (canonical != none_label && forms.count(surface)) return canonical;
    }
    if (contains(surface)) return surface;
    const std::string low = lower(surface);
    for (const auto& l : labels) {
        if (lower(l) == low) return l;
    }
    return std::nullopt;
}

void LabelSpace::validate() const {
    if (labels.empty()) throw DataError("label space has no labels");
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) throw DataError("empty canonical label name");
        if (!seen.insert(l).second) throw DataError("duplicate canonical label: " + l);
    }
    if (none_label.empty()) throw DataError("none_label is empty");
    if (seen.count(none_label)) throw DataError("none_label must not be a member of labels");
    std::map<std::string, std::string> surface_owner;
    for (const auto& [canonical, forms] : variants) {
        if (canonical != none_label && !seen.count(canonical))
            throw DataError("variants entry for unknown label: " + canonical);
        if (forms.empty()) throw DataError("variants entry is empty for label: " + canonical);
        for (const auto& f : forms) {
            auto [it, inserted] = surface_owner.emplace(f, canonical);
            if (!inserted && it->second != canonical)
                throw DataError("surface form '" + f + "' shared by labels " + it->second +
                                " and " + canonical);
        }
    }
    for (const auto& l : labels) {
        if (!variants.count(l)) throw DataError("label has no surface forms: " + l);
    }
    if (prompt_order.size() != labels.size())
        throw DataError("prompt_order is not a permutation of labels (size mismatch)");
    std::set<std::string> order(prompt_order.begin(), prompt_order.end());
    if (order != seen) throw DataError("prompt_order is not a permutation of labels");
}

LabelSpace LabelSpace::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("label space is not valid JSON: ") + e.what());
    }
    LabelSpace ls;
    try {
        ls.labels = j.at("labels").get<std::vector<std::string>>();
        ls.none_label = j.at("none_label").get<std::string>();
        for (const auto& [k, v] : j.at("variants").items()) {
            ls.variants[k] = v.get<std::set<std::string>>();
        }
        if (j.contains("prompt_order")) {
            ls.prompt_order = j.at("prompt_order").get<std::vector<std::string>>();
        } else {
            ls.prompt_order = ls.labels;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("label space schema error: ") + e.what());
    }
    ls.validate();
    return ls;
}

LabelSpace LabelSpace::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open label space file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

double aggregate_concept_logit(const std::map<std::string, double>& surface_logits) {
    if (surface_logits.empty())
        throw DataError("no observed surface form for label (empty logit map)");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [_, v] : surface_logits) best = std::max(best, v);
    return best;
}

std::map<std::string, double> restricted_softmax(const std::map<std::string, double>& label_logits) {
    if (label_logits.empty()) throw DataError("restricted_softmax: no labels");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (const auto& [_, v] : label_logits) max_logit = std::max(max_logit, v);
    if (max_logit <= kLogitFloor)
        throw DataError("restricted_softmax: all logits at the floor, no mass to normalize");
    std::map<std::string, double> probs;
    double sum = 0.0;
    for (const auto& [k, v] : label_logits) {
        const double e = v <= kLogitFloor ? 0.0 : std::exp(v - max_logit);
        probs[k] = e;
        sum += e;
    }
    for (auto& [_, p] : probs) p /= sum;
    return probs;
}

double entropy(const std::map<std::string, double>& dist) {
    double sum = 0.0;
    for (const auto& [_, p] : dist) {
        if (p < 0.0) throw DataError("entropy: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw DataError("entropy: distribution does not sum to 1");
    double h = 0.0;
    for (const auto& [_, p] : dist) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

StepDistribution make_step_distribution(int step_index,
                                        std::map<std::string, double> label_logits,
                                        std::optional<double> none_logit,
                                        const LabelSpace& ls) {
    StepDistribution step;
    step.step_index = step_index;
    step.label_probs = restricted_softmax(label_logits);
    step.label_logits = std::move(label_logits);
    step.none_logit = none_logit;
    step.entropy_nats = entropy(step.label_probs);
    // Argmax with ties broken by prompt_order position.
    double best = -1.0;
    std::size_t best_pos = ls.prompt_order.size();
    for (const auto& [label, p] : step.label_probs) {
        const std::size_t pos = ls.prompt_position(label);
        if (p > best || (p == best && pos < best_pos)) {
            best = p;
            best_pos = pos;
            step.argmax_label = label;
        }
    }
    return step;
}

}  // namespace mldist
