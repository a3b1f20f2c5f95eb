#include "mldist/trace.hpp"

#include <cstdint>

#include "mldist/errors.hpp"

namespace mldist {

namespace {

nlohmann::json step_to_json(const StepDistribution& s) {
    nlohmann::json j;
    j["step_index"] = s.step_index;
    j["label_logits"] = s.label_logits;
    if (s.none_logit) j["none_logit"] = *s.none_logit;
    j["label_probs"] = s.label_probs;
    j["entropy_nats"] = s.entropy_nats;
    j["argmax_label"] = s.argmax_label;
    if (!s.floored_labels.empty()) j["floored_labels"] = s.floored_labels;
    return j;
}

StepDistribution step_from_json(const nlohmann::json& j) {
    StepDistribution s;
    s.step_index = j.at("step_index").get<int>();
    s.label_logits = j.at("label_logits").get<std::map<std::string, double>>();
    if (j.contains("none_logit")) s.none_logit = j.at("none_logit").get<double>();
    s.label_probs = j.at("label_probs").get<std::map<std::string, double>>();
    s.entropy_nats = j.at("entropy_nats").get<double>();
    s.argmax_label = j.at("argmax_label").get<std::string>();
    if (j.contains("floored_labels"))
        s.floored_labels = j.at("floored_labels").get<std::vector<std::string>>();
    return s;
}

}  // namespace

nlohmann::json trace_to_json(const GenerationTrace& trace) {
    nlohmann::json j;
    j["schema_version"] = kTraceSchemaVersion;
    j["doc_id"] = trace.doc_id;
    j["model_id"] = trace.model_id;
    j["prompt_fingerprint"] = trace.prompt_fingerprint;
    j["predicted_labels"] = trace.predicted_labels;
    auto steps = nlohmann::json::array();
    for (const auto& s : trace.steps) steps.push_back(step_to_json(s));
    j["steps"] = std::move(steps);
    j["stopped_after"] = trace.stopped_after;
    if (trace.embedding) j["embedding"] = *trace.embedding;
    j["raw_text"] = trace.raw_text;
    nlohmann::json meta;
    meta["temperature"] = trace.meta.temperature;
    if (trace.meta.multilabel_demo_ratio)
        meta["multilabel_demo_ratio"] = *trace.meta.multilabel_demo_ratio;
    if (trace.meta.seed) meta["seed"] = *trace.meta.seed;
    if (trace.meta.k_logprobs) meta["k_logprobs"] = *trace.meta.k_logprobs;
    j["meta"] = std::move(meta);
    return j;
}

GenerationTrace trace_from_json(const nlohmann::json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kTraceSchemaVersion)
        throw DataError("unsupported trace schema version: " + std::to_string(version));
    GenerationTrace t;
    t.doc_id = j.at("doc_id").get<std::string>();
    t.model_id = j.at("model_id").get<std::string>();
    t.prompt_fingerprint = j.at("prompt_fingerprint").get<std::string>();
    t.predicted_labels = j.at("predicted_labels").get<std::vector<std::string>>();
    for (const auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
    if (t.steps.size() != t.predicted_labels.size())
        throw DataError("trace " + t.doc_id + ": step count does not match predicted labels");
    t.stopped_after = j.at("stopped_after").get<int>();
    if (j.contains("embedding")) t.embedding = j.at("embedding").get<std::vector<double>>();
    t.raw_text = j.at("raw_text").get<std::string>();
    if (j.contains("meta")) {
        const auto& m = j.at("meta");
        t.meta.temperature = m.value("temperature", 0.0);
        if (m.contains("multilabel_demo_ratio"))
            t.meta.multilabel_demo_ratio = m.at("multilabel_demo_ratio").get<double>();
        if (m.contains("seed")) t.meta.seed = m.at("seed").get<std::uint64_t>();
        if (m.contains("k_logprobs")) t.meta.k_logprobs = m.at("k_logprobs").get<int>();
    }
    return t;
}

std::vector<GenerationTrace> read_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace file: " + path);
    std::vector<GenerationTrace> traces;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            traces.push_back(trace_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("trace file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return traces;
}

TraceWriter::TraceWriter(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw ConfigError("cannot open trace file for writing: " + path);
}

void TraceWriter::write(const GenerationTrace& trace) {
    out_ << trace_to_json(trace).dump() << "\n";
}

void TraceWriter::flush() { out_.flush(); }

std::string fingerprint(const std::string& model_id, const std::string& prompt) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const std::string& s) {
        for (const unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    mix(model_id);
    h ^= 0xff;
    h *= 1099511628211ull;
    mix(prompt);
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace mldist
