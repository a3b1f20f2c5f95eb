// mldist: extract per-step label distributions from a logprob-returning
// completions endpoint (or recorded scenarios), align them into multi-label
// distributions, score them against annotator-derived references, and audit
// the generation dynamics.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mldist/align.hpp"
#include "mldist/dynamics.hpp"
#include "mldist/errors.hpp"
#include "mldist/gateway.hpp"
#include "mldist/human_dist.hpp"
#include "mldist/metrics.hpp"
#include "mldist/probes.hpp"
#include "mldist/prompts.hpp"
#include "mldist/trace.hpp"

namespace {

using namespace mldist;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTransport = 3;
constexpr int kExitJoin = 4;

// Config-file values override flags, which override defaults.
template <typename T>
void cfg(const nlohmann::json& j, const char* key, T& var) {
    if (j.contains(key)) var = j.at(key).get<T>();
}

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::set<std::string> read_id_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open id file: " + path);
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ids.insert(line);
    }
    return ids;
}

std::map<std::string, Document> corpus_by_id(const std::vector<Document>& corpus) {
    std::map<std::string, Document> by_id;
    for (const auto& d : corpus) by_id[d.doc_id] = d;
    return by_id;
}

std::map<std::string, std::set<std::string>> gold_map(const std::vector<Document>& corpus,
                                                      const LabelSpace& ls,
                                                      const std::string& rule) {
    std::map<std::string, std::set<std::string>> golds;
    for (const auto& doc : corpus) {
        if (rule == "provided-else-majority") {
            if (!doc.provided_gold && !doc.has_annotations()) continue;
            golds[doc.doc_id] = document_gold_default(doc, ls);
        } else {
            const GoldRule parsed = parse_gold_rule(rule);
            if (parsed == GoldRule::kProvided && !doc.provided_gold) continue;
            if (parsed != GoldRule::kProvided && !doc.has_annotations()) continue;
            golds[doc.doc_id] = document_gold(doc, ls, parsed);
        }
    }
    return golds;
}

std::map<std::string, HumanDistribution> human_map(const std::vector<Document>& corpus,
                                                   const LabelSpace& ls) {
    std::map<std::string, HumanDistribution> out;
    for (const auto& doc : corpus) {
        if (doc.has_annotations()) {
            out[doc.doc_id] = estimate_human_distribution(annotation_set_of(doc), ls);
        }
    }
    return out;
}

std::unique_ptr<CompletionBackend> make_backend(const std::string& endpoint,
                                                const std::string& replay,
                                                const std::string& model_id, int logprobs_k,
                                                int max_tokens, int max_retries = 5,
                                                double backoff_s = 0.25) {
    if (!replay.empty()) {
        return std::make_unique<ReplayBackend>(ScenarioStore::load(replay), model_id);
    }
    if (!endpoint.empty()) {
        ClientConfig config;
        config.endpoint = endpoint;
        config.model_id = model_id;
        config.logprobs_k = logprobs_k;
        config.max_tokens = max_tokens;
        config.max_retries = max_retries;
        config.backoff_initial_s = backoff_s;
        return std::make_unique<HttpCompletionClient>(std::move(config));
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// trace

struct TraceArgs {
    std::string config;
    std::string corpus;
    std::string demos;
    std::string label_space;
    std::string endpoint;
    std::string replay;
    std::string model = "mock-1";
    std::string out;
    std::string split_file;
    int k = 10;
    double ratio = 0.5;
    std::uint64_t seed = 0;
    int logprobs = 20;
    int max_tokens = 64;
    int parallel = 1;
    int max_retries = 5;
    double backoff = 0.25;
};

int cmd_trace(TraceArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "corpus", args.corpus);
    cfg(j, "demos", args.demos);
    cfg(j, "label_space", args.label_space);
    cfg(j, "endpoint", args.endpoint);
    cfg(j, "replay", args.replay);
    cfg(j, "model", args.model);
    cfg(j, "out", args.out);
    cfg(j, "split_file", args.split_file);
    cfg(j, "k", args.k);
    cfg(j, "ratio", args.ratio);
    cfg(j, "seed", args.seed);
    cfg(j, "logprobs", args.logprobs);
    cfg(j, "max_tokens", args.max_tokens);
    cfg(j, "parallel", args.parallel);
    cfg(j, "max_retries", args.max_retries);
    cfg(j, "backoff", args.backoff);

    const auto ls = LabelSpace::load(args.label_space);
    auto corpus = read_corpus(args.corpus);
    if (!args.split_file.empty()) {
        const auto keep = read_id_file(args.split_file);
        std::erase_if(corpus, [&keep](const Document& d) { return !keep.count(d.doc_id); });
    }
    auto backend = make_backend(args.endpoint, args.replay, args.model, args.logprobs,
                                args.max_tokens, args.max_retries, args.backoff);
    if (!backend) throw ConfigError("trace needs --endpoint or --replay");
    if (!validate_logprobs_k(args.logprobs, ls)) {
        std::cerr << "warning: logprobs k=" << args.logprobs
                  << " cannot cover every watched surface form; missing labels will be "
                     "floored and flagged\n";
    }

    std::vector<Demo> demo_pool;
    if (args.k > 0) {
        if (args.demos.empty()) throw ConfigError("trace with k > 0 needs --demos");
        for (const auto& doc : read_corpus(args.demos)) {
            demo_pool.push_back({doc.text, document_gold_default(doc, ls)});
        }
    }
    const auto demos = args.k > 0 ? select_demos(demo_pool, args.k, args.ratio, args.seed)
                                  : std::vector<Demo>{};

    // Resume: skip prompts already present in the output file.
    std::set<std::string> done;
    if (std::filesystem::exists(args.out)) {
        for (const auto& t : read_traces(args.out)) done.insert(t.prompt_fingerprint);
    }

    struct Job {
        std::string doc_id;
        std::string prompt;
        std::string fp;
    };
    std::vector<Job> jobs;
    for (const auto& doc : corpus) {
        PromptSpec spec;
        spec.template_kind = PromptKind::kKshotMultilabel;
        spec.demos = demos;
        spec.k = args.k;
        spec.multilabel_demo_ratio = args.ratio;
        spec.query = doc.text;
        const std::string prompt = build_kshot_prompt(spec, ls);
        const std::string fp = fingerprint(args.model, prompt);
        if (done.count(fp)) continue;
        jobs.push_back({doc.doc_id, prompt, fp});
    }
    std::cerr << "trace: " << jobs.size() << " prompts to collect (" << done.size()
              << " already present)\n";

    TraceMeta meta;
    meta.temperature = 0.0;
    meta.multilabel_demo_ratio = args.ratio;
    meta.seed = args.seed;
    meta.k_logprobs = args.logprobs;

    TraceWriter writer(args.out, /*append=*/!done.empty());
    long transport_failures = 0;
    long malformed = 0;
    // Skipped documents land in an audit sidecar, created only when needed.
    std::ofstream audit;
    auto audit_record = [&](const char* kind, const std::string& doc_id, const std::string& fp,
                            const std::string& reason) {
        if (!audit.is_open()) audit.open(args.out + ".audit.jsonl", std::ios::app);
        nlohmann::json j;
        j["kind"] = kind;
        j["doc_id"] = doc_id;
        j["prompt_fingerprint"] = fp;
        j["reason"] = reason;
        audit << j.dump() << "\n";
    };

    struct Outcome {
        std::optional<GenerationTrace> trace;
        std::string error;
        bool transport = false;
    };

    const int workers = std::max(1, args.parallel);
    const std::size_t chunk_size = 64;
    for (std::size_t base = 0; base < jobs.size(); base += chunk_size) {
        const std::size_t end = std::min(jobs.size(), base + chunk_size);
        std::vector<Outcome> outcomes(end - base);
        std::atomic<std::size_t> next{base};
        auto work = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= end) return;
                const Job& job = jobs[i];
                Outcome& out = outcomes[i - base];
                try {
                    out.trace = collect_trace(job.prompt, job.doc_id, ls, *backend, meta);
                } catch (const MalformedGeneration& e) {
                    out.error = e.what();
                } catch (const TransportError& e) {
                    out.error = e.what();
                    out.transport = true;
                }
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }
        // single appender, input order
        for (std::size_t i = base; i < end; ++i) {
            const Outcome& out = outcomes[i - base];
            if (out.trace) {
                // greedy decoding: every step's argmax should be the label
                // actually emitted; a mismatch means concept aggregation and
                // the sampled token disagree
                if (meta.temperature == 0.0) {
                    for (std::size_t s = 0; s < out.trace->steps.size(); ++s) {
                        if (out.trace->steps[s].argmax_label != out.trace->predicted_labels[s]) {
                            std::cerr << "warning: document " << out.trace->doc_id << " step "
                                      << s << ": argmax "
                                      << out.trace->steps[s].argmax_label
                                      << " differs from generated label "
                                      << out.trace->predicted_labels[s] << " under greedy\n";
                        }
                    }
                }
                writer.write(*out.trace);
            } else if (out.transport) {
                ++transport_failures;
                audit_record("transport", jobs[i].doc_id, jobs[i].fp, out.error);
                std::cerr << "transport failure, document " << jobs[i].doc_id << " skipped: "
                          << out.error << "\n";
            } else {
                ++malformed;
                audit_record("malformed", jobs[i].doc_id, jobs[i].fp, out.error);
                std::cerr << "malformed generation, document " << jobs[i].doc_id
                          << " excluded: " << out.error << "\n";
            }
        }
        writer.flush();
    }

    std::cerr << "trace: wrote " << (jobs.size() - transport_failures - malformed)
              << " traces, " << malformed << " malformed, " << transport_failures
              << " transport failures\n";
    return transport_failures > 0 ? kExitTransport : kExitOk;
}

// ---------------------------------------------------------------------------
// align

struct AlignArgs {
    std::string config;
    std::string traces;
    std::string corpus;
    std::string label_space;
    std::string methods = "hard,max,compare_to_none,fixed:0.1";
    std::string out;
    std::string endpoint;
    std::string replay;
    std::string model = "mock-1";
    double epsilon = 0.01;
    bool symmetrize = false;
    int logprobs = 20;
};

int cmd_align(AlignArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "traces", args.traces);
    cfg(j, "corpus", args.corpus);
    cfg(j, "label_space", args.label_space);
    cfg(j, "methods", args.methods);
    cfg(j, "out", args.out);
    cfg(j, "endpoint", args.endpoint);
    cfg(j, "replay", args.replay);
    cfg(j, "model", args.model);
    cfg(j, "epsilon", args.epsilon);
    cfg(j, "symmetrize", args.symmetrize);

    const auto ls = LabelSpace::load(args.label_space);
    const auto methods = split_csv(args.methods);
    if (methods.empty()) throw ConfigError("align: no methods given");

    const bool needs_traces = std::any_of(methods.begin(), methods.end(), [](const auto& m) {
        return m == "hard" || m == "max" || m == "compare_to_none";
    });
    const bool wants_unary = std::count(methods.begin(), methods.end(), "unary") > 0;
    const bool wants_binary = std::count(methods.begin(), methods.end(), "binary") > 0;
    const bool wants_binary_outcome =
        std::count(methods.begin(), methods.end(), "binary_outcome") > 0;

    std::vector<GenerationTrace> traces;
    if (needs_traces) {
        if (args.traces.empty()) throw ConfigError("align methods need --traces");
        traces = read_traces(args.traces);
    }

    std::unique_ptr<CompletionBackend> backend;
    std::vector<Document> corpus;
    if (wants_unary || wants_binary || wants_binary_outcome) {
        backend = make_backend(args.endpoint, args.replay, args.model, args.logprobs, 8);
        if (!backend) {
            std::string needs;
            for (const auto& m : methods) {
                if (m == "unary" || m == "binary" || m == "binary_outcome")
                    needs += (needs.empty() ? "" : ", ") + m;
            }
            throw ConfigError("method(s) " + needs + " need a gateway: give --endpoint or --replay");
        }
        if (args.corpus.empty())
            throw ConfigError("unary/binary methods need --corpus for document text");
        corpus = read_corpus(args.corpus);
    }

    // Document order: trace-file order when traces drive, corpus order otherwise.
    std::vector<std::string> doc_order;
    std::map<std::string, const GenerationTrace*> trace_by_id;
    for (const auto& t : traces) {
        if (!trace_by_id.count(t.doc_id)) doc_order.push_back(t.doc_id);
        trace_by_id[t.doc_id] = &t;
    }
    std::map<std::string, Document> docs = corpus_by_id(corpus);
    if (doc_order.empty()) {
        for (const auto& d : corpus) doc_order.push_back(d.doc_id);
    }

    auto doc_text_for = [&docs](const std::string& id) -> const std::string& {
        auto it = docs.find(id);
        if (it == docs.end())
            throw JoinError("document " + id + " from the trace file is not in the corpus");
        return it->second.text;
    };

    // Resume: rows already present are kept, their work is skipped; new rows
    // append after them.
    std::set<std::pair<std::string, std::string>> done;
    if (std::filesystem::exists(args.out)) {
        for (const auto& d : read_distributions(args.out)) done.insert({d.method_id, d.doc_id});
    }
    std::ofstream out(args.out, done.empty() ? std::ios::trunc : std::ios::app);
    if (!out) throw ConfigError("cannot open output file: " + args.out);
    long rows = 0;
    auto emit = [&out, &rows](const AlignedDistribution& d) {
        out << aligned_to_json(d).dump() << "\n";
        ++rows;
    };
    auto pending = [&done](const std::string& method_id, const std::string& doc_id) {
        return done.count({method_id, doc_id}) == 0;
    };

    // Both binary modes share one pairwise table per document.
    std::map<std::string, PairwiseTable> tables;
    auto table_for = [&](const std::string& id) -> const PairwiseTable& {
        auto it = tables.find(id);
        if (it == tables.end()) {
            BinaryOptions opts;
            opts.symmetrize = args.symmetrize;
            it = tables.emplace(id, collect_pairwise_table(doc_text_for(id), ls, *backend, opts))
                     .first;
        }
        return it->second;
    };

    for (const auto& method : methods) {
        if (method == "hard") {
            for (const auto& id : doc_order) {
                if (pending("hard", id)) emit(hard_predictions(*trace_by_id.at(id), ls, args.epsilon));
            }
        } else if (method == "max") {
            for (const auto& id : doc_order) {
                if (pending("max", id)) emit(max_over_generations(*trace_by_id.at(id), ls));
            }
        } else if (method == "compare_to_none") {
            for (const auto& id : doc_order) {
                if (!pending("compare_to_none", id)) continue;
                const auto& trace = *trace_by_id.at(id);
                if (trace.steps.empty()) {
                    std::cerr << "compare_to_none: document " << id
                              << " has an empty generation, row skipped\n";
                    continue;
                }
                emit(compare_to_none(trace.steps.front(), id, ls));
            }
        } else if (method.rfind("fixed", 0) == 0) {
            double c = 0.1;
            const auto colon = method.find(':');
            if (colon != std::string::npos) c = std::stod(method.substr(colon + 1));
            for (const auto& id : doc_order) {
                if (pending("fixed", id)) emit(fixed_distribution(c, id, ls));
            }
        } else if (method == "unary") {
            for (const auto& id : doc_order) {
                if (pending("unary", id)) emit(unary_distribution(doc_text_for(id), id, ls, *backend));
            }
        } else if (method == "binary" || method == "binary_outcome") {
            const BTMode mode = method == "binary" ? BTMode::kProb : BTMode::kOutcome;
            for (const auto& id : doc_order) {
                if (pending(method, id)) emit(breakdown_from_table(table_for(id), id, ls, mode));
            }
        } else {
            throw ConfigError("unknown align method: " + method);
        }
    }
    std::cerr << "align: wrote " << rows << " new rows for " << methods.size() << " methods ("
              << done.size() << " rows already present)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string config;
    std::string dists;
    std::string corpus;
    std::string label_space;
    std::string out_dir;
    double threshold = kDefaultF1Threshold;
    double epsilon_floor = kDefaultNllEpsilonFloor;
    std::string gold_rule = "provided-else-majority";
};

int cmd_eval(EvalArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "dists", args.dists);
    cfg(j, "corpus", args.corpus);
    cfg(j, "label_space", args.label_space);
    cfg(j, "out_dir", args.out_dir);
    cfg(j, "threshold", args.threshold);
    cfg(j, "epsilon_floor", args.epsilon_floor);
    cfg(j, "gold_rule", args.gold_rule);

    const auto ls = LabelSpace::load(args.label_space);
    const auto dists = read_distributions(args.dists);
    const auto corpus = read_corpus(args.corpus);
    const auto golds = gold_map(corpus, ls, args.gold_rule);
    const auto hdists = human_map(corpus, ls);

    auto report = evaluate_distributions(dists, golds, hdists, ls, args.epsilon_floor,
                                         args.threshold);
    report.gold_rule = args.gold_rule;
    std::filesystem::create_directories(args.out_dir);
    write_metrics_tsv(report, (std::filesystem::path(args.out_dir) / "rows.tsv").string());
    write_metrics_summary(report,
                          (std::filesystem::path(args.out_dir) / "summary.json").string());
    std::cerr << "eval: " << report.rows.size() << " rows over " << report.aggregates.size()
              << " methods\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// dynamics

struct DynamicsArgs {
    std::string config;
    std::string traces;
    std::string corpus;
    std::string label_space;
    std::string out_dir;
    std::string gold_rule = "provided-else-majority";
};

int cmd_dynamics(DynamicsArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "traces", args.traces);
    cfg(j, "corpus", args.corpus);
    cfg(j, "label_space", args.label_space);
    cfg(j, "out_dir", args.out_dir);
    cfg(j, "gold_rule", args.gold_rule);

    const auto ls = LabelSpace::load(args.label_space);
    const auto traces = read_traces(args.traces);
    std::map<std::string, std::set<std::string>> golds;
    if (!args.corpus.empty()) {
        golds = gold_map(read_corpus(args.corpus), ls, args.gold_rule);
    }
    const auto result = run_dynamics(traces, golds, ls);
    write_dynamics_report(result, args.out_dir);
    std::cerr << "dynamics: " << result.n_traces << " traces analyzed\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
    std::string config;
    std::string embeddings;
    std::string traces;
    std::string corpus;
    std::string label_space;
    std::string train_ids;
    std::string eval_ids;
    std::string mode = "all";
    std::string out;
    std::string gold_rule = "provided-else-majority";
};

int cmd_probe(ProbeArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "embeddings", args.embeddings);
    cfg(j, "traces", args.traces);
    cfg(j, "corpus", args.corpus);
    cfg(j, "label_space", args.label_space);
    cfg(j, "train_ids", args.train_ids);
    cfg(j, "eval_ids", args.eval_ids);
    cfg(j, "mode", args.mode);
    cfg(j, "out", args.out);
    cfg(j, "gold_rule", args.gold_rule);

    const auto ls = LabelSpace::load(args.label_space);
    const auto traces = read_traces(args.traces);
    const auto corpus = read_corpus(args.corpus);
    const auto golds = gold_map(corpus, ls, args.gold_rule);
    const auto records = read_embedding_sidecar(args.embeddings);
    if (records.empty()) throw DataError("embedding sidecar is empty: " + args.embeddings);

    // Join sidecar rows with traces on (doc_id, prompt_fingerprint).
    std::map<std::string, const GenerationTrace*> trace_by_id;
    for (const auto& t : traces) trace_by_id[t.doc_id] = &t;
    std::map<std::string, const EmbeddingRecord*> emb_by_id;
    long fingerprint_mismatches = 0;
    for (const auto& rec : records) {
        auto it = trace_by_id.find(rec.doc_id);
        if (it == trace_by_id.end()) continue;
        if (!rec.prompt_fingerprint.empty() &&
            rec.prompt_fingerprint != it->second->prompt_fingerprint) {
            ++fingerprint_mismatches;
            continue;
        }
        emb_by_id[rec.doc_id] = &rec;
    }
    if (fingerprint_mismatches > 0) {
        std::cerr << "probe: " << fingerprint_mismatches
                  << " sidecar rows dropped on fingerprint mismatch\n";
    }
    if (emb_by_id.empty()) throw JoinError("no embeddings joined with traces");

    auto build_matrix = [&](const std::set<std::string>& ids) {
        EmbeddingMatrix X;
        std::vector<const EmbeddingRecord*> rows;
        for (const auto& id : ids) {
            auto it = emb_by_id.find(id);
            if (it != emb_by_id.end()) rows.push_back(it->second);
        }
        if (rows.empty()) throw JoinError("no embeddings for the requested id set");
        X.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows[0]->values.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i]->values.size() != static_cast<std::size_t>(X.values.cols()))
                throw DataError("embedding dimension mismatch for " + rows[i]->doc_id);
            X.doc_ids.push_back(rows[i]->doc_id);
            for (std::size_t k = 0; k < rows[i]->values.size(); ++k)
                X.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    rows[i]->values[k];
        }
        return X;
    };

    const auto train_set = read_id_file(args.train_ids);
    const auto eval_set = read_id_file(args.eval_ids);
    const auto X_train = build_matrix(train_set);
    const auto X_eval = build_matrix(eval_set);
    const auto reduction = fit_reduction(X_train);
    if (reduction.skipped) {
        std::cerr << "warning: embedding dimension below 4, projection skipped "
                     "(standardization only)\n";
    }
    if (reduction.rank_capped) {
        std::cerr << "warning: reduction target capped at the available rank\n";
    }
    const auto Z_train = reduction.apply(X_train.values);
    const auto Z_eval = reduction.apply(X_eval.values);

    std::vector<ProbeEvalMode> modes;
    if (args.mode == "all") {
        modes = {ProbeEvalMode::kGold, ProbeEvalMode::kPred, ProbeEvalMode::kPred2Plus};
    } else {
        modes = {parse_probe_mode(args.mode)};
    }

    nlohmann::json report;
    report["schema_version"] = 1;
    report["reduced_dim"] = reduction.output_dim();
    report["n_train"] = X_train.doc_ids.size();
    report["n_eval"] = X_eval.doc_ids.size();
    for (const auto mode : modes) {
        // pred2plus trains on the full predictions, scores only labels
        // generated at step >= 1
        const auto train_mode = mode == ProbeEvalMode::kPred2Plus ? ProbeEvalMode::kPred : mode;
        const auto train_targets = probe_targets(train_mode, X_train.doc_ids, golds, trace_by_id);
        const auto eval_targets = probe_targets(mode, X_eval.doc_ids, golds, trace_by_id);
        const auto model = train_probe(Z_train, reduction, train_targets, ls);
        const auto result = eval_probe(model, Z_eval, eval_targets, ls);
        nlohmann::json entry;
        entry["micro_f1"] = result.value;
        entry["tp"] = result.tp;
        entry["fp"] = result.fp;
        entry["fn"] = result.fn;
        entry["degenerate"] = result.degenerate;
        entry["degenerate_labels"] = model.degenerate_labels;
        report["modes"][probe_mode_name(mode)] = std::move(entry);
    }
    {
        // model Perf for comparison: the traces' own predictions against gold
        std::vector<std::pair<std::set<std::string>, std::set<std::string>>> rows;
        for (const auto& id : X_eval.doc_ids) {
            const auto* t = trace_by_id.at(id);
            auto gold_it = golds.find(id);
            if (gold_it == golds.end()) continue;
            rows.emplace_back(
                std::set<std::string>(t->predicted_labels.begin(), t->predicted_labels.end()),
                gold_it->second);
        }
        if (!rows.empty()) {
            const auto perf = micro_f1(rows);
            report["perf"] = {{"micro_f1", perf.value}, {"tp", perf.tp}, {"fp", perf.fp},
                              {"fn", perf.fn}};
        }
    }
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw ConfigError("cannot open probe report for writing: " + args.out);
    out << report.dump(2) << "\n";
    std::cerr << "probe: report written to " << args.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// split / stats

struct SplitArgs {
    std::string config;
    std::string corpus;
    std::string label_space;
    int n = 200;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_split(SplitArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "corpus", args.corpus);
    cfg(j, "label_space", args.label_space);
    cfg(j, "n", args.n);
    cfg(j, "seed", args.seed);
    cfg(j, "out", args.out);

    const auto ls = LabelSpace::load(args.label_space);
    const auto corpus = read_corpus(args.corpus);
    const auto ids = make_eval_split(corpus, ls, args.n, args.seed);
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw ConfigError("cannot open split file for writing: " + args.out);
    out << "# mldist split v1 n=" << args.n << " seed=" << args.seed << "\n";
    for (const auto& id : ids) out << id << "\n";
    std::cerr << "split: " << ids.size() << " documents selected\n";
    return kExitOk;
}

struct StatsArgs {
    std::string config;
    std::string corpus;
    std::string label_space;
    std::string out;
};

int cmd_stats(StatsArgs args) {
    const auto j = load_config(args.config);
    cfg(j, "corpus", args.corpus);
    cfg(j, "label_space", args.label_space);
    cfg(j, "out", args.out);

    const auto ls = LabelSpace::load(args.label_space);
    std::vector<AnnotationSet> annotations;
    for (const auto& doc : read_corpus(args.corpus)) {
        if (doc.has_annotations()) annotations.push_back(annotation_set_of(doc));
    }
    if (annotations.empty()) throw DataError("stats: corpus has no annotator labels");
    const auto stats = annotation_stats(annotations, ls);

    nlohmann::json out_json;
    out_json["schema_version"] = 1;
    out_json["n_documents"] = stats.n_documents;
    out_json["total_annotators"] = stats.total_annotators;
    out_json["mean_annotators_per_doc"] = stats.mean_annotators_per_doc;
    out_json["pct_0_labels"] = stats.pct_0_labels;
    out_json["pct_1_label"] = stats.pct_1_label;
    out_json["pct_2_labels"] = stats.pct_2_labels;
    out_json["pct_3plus_labels"] = stats.pct_3plus_labels;
    if (stats.mean_cohens_kappa) {
        out_json["mean_cohens_kappa"] = *stats.mean_cohens_kappa;
    } else {
        out_json["mean_cohens_kappa"] = nullptr;
    }
    out_json["kappa_pooling"] = stats.kappa_pooling;

    if (args.out.empty()) {
        std::cout << out_json.dump(2) << "\n";
    } else {
        std::ofstream out(args.out, std::ios::trunc);
        if (!out) throw ConfigError("cannot open stats file for writing: " + args.out);
        out << out_json.dump(2) << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-label LM distribution toolkit"};
    app.require_subcommand(1);

    TraceArgs trace_args;
    auto* trace = app.add_subcommand("trace", "collect generation traces");
    trace->add_option("--config", trace_args.config, "JSON config; values override flags");
    trace->add_option("--corpus", trace_args.corpus)->required();
    trace->add_option("--demos", trace_args.demos, "demo pool corpus (needed when k > 0)");
    trace->add_option("--label-space", trace_args.label_space)->required();
    trace->add_option("--endpoint", trace_args.endpoint);
    trace->add_option("--replay", trace_args.replay, "scenario file replayed instead of HTTP");
    trace->add_option("--model", trace_args.model);
    trace->add_option("--out", trace_args.out)->required();
    trace->add_option("--split", trace_args.split_file, "restrict to the listed doc ids");
    trace->add_option("--k", trace_args.k);
    trace->add_option("--ratio", trace_args.ratio);
    trace->add_option("--seed", trace_args.seed);
    trace->add_option("--logprobs", trace_args.logprobs);
    trace->add_option("--max-tokens", trace_args.max_tokens);
    trace->add_option("--parallel", trace_args.parallel);
    trace->add_option("--max-retries", trace_args.max_retries);
    trace->add_option("--backoff", trace_args.backoff, "initial retry backoff in seconds");

    AlignArgs align_args;
    auto* align = app.add_subcommand("align", "produce aligned distributions");
    align->add_option("--config", align_args.config);
    align->add_option("--traces", align_args.traces);
    align->add_option("--corpus", align_args.corpus);
    align->add_option("--label-space", align_args.label_space)->required();
    align->add_option("--methods", align_args.methods,
                      "comma list: hard,max,compare_to_none,fixed:C,unary,binary,binary_outcome");
    align->add_option("--out", align_args.out)->required();
    align->add_option("--endpoint", align_args.endpoint);
    align->add_option("--replay", align_args.replay);
    align->add_option("--model", align_args.model);
    align->add_option("--epsilon", align_args.epsilon);
    align->add_flag("--symmetrize", align_args.symmetrize);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "score distributions against references");
    eval->add_option("--config", eval_args.config);
    eval->add_option("--dists", eval_args.dists)->required();
    eval->add_option("--corpus", eval_args.corpus)->required();
    eval->add_option("--label-space", eval_args.label_space)->required();
    eval->add_option("--out-dir", eval_args.out_dir)->required();
    eval->add_option("--threshold", eval_args.threshold);
    eval->add_option("--epsilon-floor", eval_args.epsilon_floor);
    eval->add_option("--gold-rule", eval_args.gold_rule);

    DynamicsArgs dyn_args;
    auto* dynamics = app.add_subcommand("dynamics", "generation-dynamics reports");
    dynamics->add_option("--config", dyn_args.config);
    dynamics->add_option("--traces", dyn_args.traces)->required();
    dynamics->add_option("--corpus", dyn_args.corpus);
    dynamics->add_option("--label-space", dyn_args.label_space)->required();
    dynamics->add_option("--out-dir", dyn_args.out_dir)->required();
    dynamics->add_option("--gold-rule", dyn_args.gold_rule);

    ProbeArgs probe_args;
    auto* probe = app.add_subcommand("probe", "linear probes over hidden-state embeddings");
    probe->add_option("--config", probe_args.config);
    probe->add_option("--embeddings", probe_args.embeddings)->required();
    probe->add_option("--traces", probe_args.traces)->required();
    probe->add_option("--corpus", probe_args.corpus)->required();
    probe->add_option("--label-space", probe_args.label_space)->required();
    probe->add_option("--train-ids", probe_args.train_ids)->required();
    probe->add_option("--eval-ids", probe_args.eval_ids)->required();
    probe->add_option("--mode", probe_args.mode, "gold | pred | pred2plus | all");
    probe->add_option("--out", probe_args.out)->required();
    probe->add_option("--gold-rule", probe_args.gold_rule);

    SplitArgs split_args;
    auto* split = app.add_subcommand("split", "stratified evaluation split");
    split->add_option("--config", split_args.config);
    split->add_option("--corpus", split_args.corpus)->required();
    split->add_option("--label-space", split_args.label_space)->required();
    split->add_option("--n", split_args.n);
    split->add_option("--seed", split_args.seed);
    split->add_option("--out", split_args.out)->required();

    StatsArgs stats_args;
    auto* stats = app.add_subcommand("stats", "corpus annotation statistics");
    stats->add_option("--config", stats_args.config);
    stats->add_option("--corpus", stats_args.corpus)->required();
    stats->add_option("--label-space", stats_args.label_space)->required();
    stats->add_option("--out", stats_args.out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (trace->parsed()) return cmd_trace(trace_args);
        if (align->parsed()) return cmd_align(align_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (dynamics->parsed()) return cmd_dynamics(dyn_args);
        if (probe->parsed()) return cmd_probe(probe_args);
        if (split->parsed()) return cmd_split(split_args);
        if (stats->parsed()) return cmd_stats(stats_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const JoinError& e) {
        std::cerr << "join error: " << e.what() << "\n";
        return kExitJoin;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitOk;
}
