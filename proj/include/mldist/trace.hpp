#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mldist/label_core.hpp"

namespace mldist {

inline constexpr int kTraceSchemaVersion = 1;

struct TraceMeta {
    double temperature = 0.0;
    std::optional<double> multilabel_demo_ratio;
    std::optional<std::uint64_t> seed;
    std::optional<int> k_logprobs;
};

// One document's full generation record: the predicted label sequence and a
// StepDistribution snapshot at each label's first token.
struct GenerationTrace {
    std::string doc_id;
    std::string model_id;
    std::string prompt_fingerprint;
    std::vector<std::string> predicted_labels;  // duplicates kept as observed
    std::vector<StepDistribution> steps;        // one per predicted label
    int stopped_after = -1;                     // index of last label step, -1 when none
    std::optional<std::vector<double>> embedding;
    std::string raw_text;
    TraceMeta meta;

    bool empty_generation() const { return steps.empty(); }
};

nlohmann::json trace_to_json(const GenerationTrace& trace);
GenerationTrace trace_from_json(const nlohmann::json& j);

// Reads a line-delimited trace file. Throws DataError on schema violations.
std::vector<GenerationTrace> read_traces(const std::string& path);

// Append-only line writer; a single writer owns the output file.
class TraceWriter {
public:
    explicit TraceWriter(const std::string& path, bool append = false);
    void write(const GenerationTrace& trace);
    void flush();

private:
    std::ofstream out_;
};

// FNV-1a 64-bit content hash used to key prompts in trace and scenario files.
std::string fingerprint(const std::string& model_id, const std::string& prompt);

}  // namespace mldist
