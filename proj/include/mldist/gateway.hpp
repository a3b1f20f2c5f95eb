#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mldist/errors.hpp"
#include "mldist/label_core.hpp"
#include "mldist/trace.hpp"

namespace mldist {

// Generation output format is unparseable; the trace is excluded with the
// carried reason rather than aborting a batch.
struct MalformedGeneration : DataError {
    explicit MalformedGeneration(const std::string& msg) : DataError(msg) {}
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    std::map<std::string, double> top;  // token string -> logprob, the endpoint's top-k
};

struct Completion {
    std::string text;
    std::vector<TokenLogprob> tokens;
};

struct ClientConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    std::string model_id;
    int logprobs_k = 20;
    int max_tokens = 64;
    double temperature = 0.0;
    std::vector<std::string> stop = {"\n"};
    int max_retries = 5;
    double backoff_initial_s = 0.25;
    std::string auth_token;  // read from MLDIST_API_TOKEN when empty
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual Completion complete(const std::string& prompt) = 0;
    virtual const std::string& model_id() const = 0;
};

// Scripted completions keyed by prompt fingerprint; the replay transport and
// the mock server both run off this (see docs/formats.md for the file shape).
class ScenarioStore {
public:
    static ScenarioStore load(const std::string& path);

    void add(const std::string& fp, Completion completion);
    const Completion* find(const std::string& fp) const;
    std::size_t size() const { return scripts_.size(); }

private:
    std::map<std::string, Completion> scripts_;
};

// Replays recorded responses; throws TransportError on a fingerprint miss.
class ReplayBackend : public CompletionBackend {
public:
    ReplayBackend(ScenarioStore store, std::string model_id)
        : store_(std::move(store)), model_id_(std::move(model_id)) {}

    Completion complete(const std::string& prompt) override;
    const std::string& model_id() const override { return model_id_; }

private:
    ScenarioStore store_;
    std::string model_id_;
};

// Talks to a completions-style HTTP endpoint returning per-token top-k
// logprobs. Bounded retry with exponential backoff on transient failures.
class HttpCompletionClient : public CompletionBackend {
public:
    explicit HttpCompletionClient(ClientConfig config);
    Completion complete(const std::string& prompt) override;
    const std::string& model_id() const override { return config_.model_id; }
    const ClientConfig& config() const { return config_; }

private:
    ClientConfig config_;
    std::string host_;
    int port_ = 80;
};

// Warns (returns false) when the configured top-k cannot cover every watched
// surface form plus the generated token itself.
bool validate_logprobs_k(int k, const LabelSpace& ls);

struct ParsedGeneration {
    std::vector<std::string> labels;           // canonical, duplicates kept
    std::vector<std::size_t> first_token_index;  // aligned with labels
};

// Splits generated text on the structured-list format and locates each
// label's first token among the reported token strings.
// Throws MalformedGeneration when the text does not follow the format.
ParsedGeneration parse_generation(const Completion& completion, const LabelSpace& ls);

// Builds the StepDistribution at one token position: per-label max over
// surface forms found in the top-k, floor for the missing ones, restricted
// softmax over the result.
StepDistribution step_from_token(const TokenLogprob& token, int step_index, const LabelSpace& ls);

// Full trace collection: complete, parse, snapshot each label step.
GenerationTrace collect_trace(const std::string& prompt, const std::string& doc_id,
                              const LabelSpace& ls, CompletionBackend& backend,
                              const TraceMeta& meta = {});

// Aggregated logit for an option's surface forms in the first generated
// token's top-k; nullopt when absent.
std::optional<double> option_logit(const Completion& completion,
                                   const std::set<std::string>& surfaces);

extern const std::set<std::string> kReasonableSurfaces;
extern const std::set<std::string> kUnreasonableSurfaces;
extern const std::set<std::string> kOptionASurfaces;
extern const std::set<std::string> kOptionBSurfaces;

}  // namespace mldist
