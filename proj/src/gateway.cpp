#include "mldist/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace mldist {

const std::set<std::string> kReasonableSurfaces = {"reasonable", " reasonable", "Reasonable",
                                                   " Reasonable"};
const std::set<std::string> kUnreasonableSurfaces = {"unreasonable", " unreasonable",
                                                     "Unreasonable", " Unreasonable"};
const std::set<std::string> kOptionASurfaces = {"a", " a", "A", " A"};
const std::set<std::string> kOptionBSurfaces = {"b", " b", "B", " B"};

ScenarioStore ScenarioStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    ScenarioStore store;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("scenario line " + std::to_string(lineno) + ": " + e.what());
        }
        Completion c;
        for (const auto& tok : j.at("tokens")) {
            TokenLogprob t;
            t.token = tok.at("t").get<std::string>();
            t.logprob = tok.at("lp").get<double>();
            if (tok.contains("top")) t.top = tok.at("top").get<std::map<std::string, double>>();
            c.text += t.token;
            c.tokens.push_back(std::move(t));
        }
        store.add(j.at("fingerprint").get<std::string>(), std::move(c));
    }
    return store;
}

void ScenarioStore::add(const std::string& fp, Completion completion) {
    scripts_[fp] = std::move(completion);
}

const Completion* ScenarioStore::find(const std::string& fp) const {
    auto it = scripts_.find(fp);
    return it == scripts_.end() ? nullptr : &it->second;
}

Completion ReplayBackend::complete(const std::string& prompt) {
    const std::string fp = fingerprint(model_id_, prompt);
    const Completion* c = store_.find(fp);
    if (!c)
        throw TransportError("replay scenario has no completion for fingerprint " + fp);
    return *c;
}

namespace {

void split_endpoint(const std::string& endpoint, std::string& host, int& port) {
    std::string rest = endpoint;
    const auto scheme = rest.find("://");
    if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
    const auto slash = rest.find('/');
    if (slash != std::string::npos) rest = rest.substr(0, slash);
    const auto colon = rest.find(':');
    if (colon != std::string::npos) {
        host = rest.substr(0, colon);
        port = std::stoi(rest.substr(colon + 1));
    } else {
        host = rest;
        port = 80;
    }
}

Completion parse_completion_response(const nlohmann::json& j) {
    Completion c;
    const auto& choice = j.at("choices").at(0);
    c.text = choice.value("text", std::string());
    if (!choice.contains("logprobs") || choice.at("logprobs").is_null())
        throw ConfigError("endpoint returned no logprobs; a logprob-returning completions "
                          "endpoint is required");
    const auto& lp = choice.at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& token_logprobs = lp.at("token_logprobs");
    const auto& top_logprobs = lp.at("top_logprobs");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        TokenLogprob t;
        t.token = tokens.at(i).get<std::string>();
        t.logprob = token_logprobs.at(i).is_null() ? 0.0 : token_logprobs.at(i).get<double>();
        if (i < top_logprobs.size() && !top_logprobs.at(i).is_null())
            t.top = top_logprobs.at(i).get<std::map<std::string, double>>();
        c.tokens.push_back(std::move(t));
    }
    if (c.text.empty()) {
        for (const auto& t : c.tokens) c.text += t.token;
    }
    return c;
}

}  // namespace

HttpCompletionClient::HttpCompletionClient(ClientConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("endpoint URL is required");
    if (config_.auth_token.empty()) {
        if (const char* tok = std::getenv("MLDIST_API_TOKEN")) config_.auth_token = tok;
    }
    split_endpoint(config_.endpoint, host_, port_);
}

Completion HttpCompletionClient::complete(const std::string& prompt) {
    nlohmann::json body;
    body["model"] = config_.model_id;
    body["prompt"] = prompt;
    body["max_tokens"] = config_.max_tokens;
    body["temperature"] = config_.temperature;
    body["logprobs"] = config_.logprobs_k;
    if (!config_.stop.empty()) body["stop"] = config_.stop;
    const std::string payload = body.dump();

    double backoff = config_.backoff_initial_s;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
        httplib::Client client(host_, port_);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!config_.auth_token.empty())
            headers.emplace("Authorization", "Bearer " + config_.auth_token);
        auto res = client.Post("/v1/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw TransportError("endpoint returned status " + std::to_string(res->status) +
                                 ": " + res->body);
        }
        try {
            return parse_completion_response(nlohmann::json::parse(res->body));
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("unparseable endpoint response: ") + e.what());
        }
    }
    throw TransportError("endpoint failed after " + std::to_string(config_.max_retries + 1) +
                         " attempts: " + last_error);
}

bool validate_logprobs_k(int k, const LabelSpace& ls) {
    std::size_t watched = 0;
    for (const auto& [_, forms] : ls.variants) watched += forms.size();
    return static_cast<std::size_t>(k) >= watched + 1;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool is_none_item(const std::string& item, const LabelSpace& ls) {
    if (item == ls.none_label) return true;
    auto it = ls.variants.find(ls.none_label);
    if (it != ls.variants.end() && it->second.count(item)) return true;
    std::string low = item;
    std::transform(low.begin(), low.end(), low.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::string none_low = ls.none_label;
    std::transform(none_low.begin(), none_low.end(), none_low.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return low == none_low;
}

}  // namespace

ParsedGeneration parse_generation(const Completion& completion, const LabelSpace& ls) {
    // Token offsets are computed over the concatenated reported tokens, which
    // is the coordinate system the per-token logprobs live in.
    std::string text;
    std::vector<std::size_t> token_start;
    for (const auto& t : completion.tokens) {
        token_start.push_back(text.size());
        text += t.token;
    }

    const auto key = text.find("\"label\"");
    if (key == std::string::npos)
        throw MalformedGeneration("generated text has no \"label\" key: " + text);
    const auto open = text.find('[', key);
    if (open == std::string::npos)
        throw MalformedGeneration("generated text has no label list: " + text);
    const auto close = text.find(']', open);
    if (close == std::string::npos)
        throw MalformedGeneration("generated text has an unterminated label list: " + text);

    ParsedGeneration parsed;
    std::size_t pos = open + 1;
    while (pos < close) {
        const auto quote_open = text.find('"', pos);
        if (quote_open == std::string::npos || quote_open >= close) break;
        const auto quote_close = text.find('"', quote_open + 1);
        if (quote_close == std::string::npos || quote_close > close)
            throw MalformedGeneration("unterminated label string: " + text);
        const std::string item = trim(text.substr(quote_open + 1, quote_close - quote_open - 1));
        const std::size_t item_offset = quote_open + 1;
        pos = quote_close + 1;

        if (is_none_item(item, ls)) continue;  // explicit null option: no label, no step
        const auto canonical = ls.canonicalize(item);
        if (!canonical)
            throw MalformedGeneration("generated label '" + item + "' matches no known label");

        // The token containing the label's first character.
        auto it = std::upper_bound(token_start.begin(), token_start.end(), item_offset);
        const std::size_t token_index = static_cast<std::size_t>(it - token_start.begin()) - 1;
        parsed.labels.push_back(*canonical);
        parsed.first_token_index.push_back(token_index);
    }
    return parsed;
}

StepDistribution step_from_token(const TokenLogprob& token, int step_index, const LabelSpace& ls) {
    std::map<std::string, double> label_logits;
    std::vector<std::string> floored;
    for (const auto& label : ls.labels) {
        std::map<std::string, double> observed;
        for (const auto& surface : ls.variants.at(label)) {
            auto it = token.top.find(surface);
            if (it != token.top.end()) observed[surface] = it->second;
        }
        if (observed.empty()) {
            label_logits[label] = kLogitFloor;
            floored.push_back(label);
        } else {
            label_logits[label] = aggregate_concept_logit(observed);
        }
    }
    std::optional<double> none_logit;
    auto none_it = ls.variants.find(ls.none_label);
    if (none_it != ls.variants.end()) {
        std::map<std::string, double> observed;
        for (const auto& surface : none_it->second) {
            auto it = token.top.find(surface);
            if (it != token.top.end()) observed[surface] = it->second;
        }
        if (!observed.empty()) none_logit = aggregate_concept_logit(observed);
    }

    bool any_present = false;
    for (const auto& [_, v] : label_logits) {
        if (v > kLogitFloor) {
            any_present = true;
            break;
        }
    }
    if (!any_present)
        throw MalformedGeneration("no label surface form in top-k at step " +
                                  std::to_string(step_index) +
                                  "; logprobs k is too small for this label space");

    StepDistribution step = make_step_distribution(step_index, std::move(label_logits), none_logit, ls);
    step.floored_labels = std::move(floored);
    return step;
}

GenerationTrace collect_trace(const std::string& prompt, const std::string& doc_id,
                              const LabelSpace& ls, CompletionBackend& backend,
                              const TraceMeta& meta) {
    const Completion completion = backend.complete(prompt);
    const ParsedGeneration parsed = parse_generation(completion, ls);

    GenerationTrace trace;
    trace.doc_id = doc_id;
    trace.model_id = backend.model_id();
    trace.prompt_fingerprint = fingerprint(backend.model_id(), prompt);
    trace.raw_text = completion.text;
    trace.meta = meta;
    trace.predicted_labels = parsed.labels;
    for (std::size_t i = 0; i < parsed.labels.size(); ++i) {
        trace.steps.push_back(step_from_token(completion.tokens.at(parsed.first_token_index[i]),
                                              static_cast<int>(i), ls));
    }
    trace.stopped_after = static_cast<int>(trace.steps.size()) - 1;
    return trace;
}

std::optional<double> option_logit(const Completion& completion,
                                   const std::set<std::string>& surfaces) {
    if (completion.tokens.empty()) return std::nullopt;
    const auto& top = completion.tokens.front().top;
    std::map<std::string, double> observed;
    for (const auto& s : surfaces) {
        auto it = top.find(s);
        if (it != top.end()) observed[s] = it->second;
    }
    if (observed.empty()) return std::nullopt;
    return aggregate_concept_logit(observed);
}

}  // namespace mldist
