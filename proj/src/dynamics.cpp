#include "mldist/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mldist/errors.hpp"
#include "mldist/metrics.hpp"

namespace mldist {

std::vector<std::string> rank_labels(const StepDistribution& step, const LabelSpace& ls) {
    std::vector<std::string> labels;
    labels.reserve(step.label_probs.size());
    for (const auto& [l, _] : step.label_probs) labels.push_back(l);
    std::sort(labels.begin(), labels.end(), [&](const std::string& a, const std::string& b) {
        const double pa = step.label_probs.at(a);
        const double pb = step.label_probs.at(b);
        if (pa != pb) return pa > pb;
        return ls.prompt_position(a) < ls.prompt_position(b);
    });
    return labels;
}

std::map<int, StepProfile> step_rank_profile(const std::vector<GenerationTrace>& traces,
                                             const LabelSpace& ls) {
    if (traces.empty()) throw DataError("step_rank_profile: no traces");
    std::map<int, StepProfile> profiles;
    for (const auto& trace : traces) {
        for (const auto& step : trace.steps) {
            const bool last = step.step_index == trace.stopped_after;
            const auto ranked = rank_labels(step, ls);
            StepProfile& prof = profiles[step.step_index];
            const double top1 = step.label_probs.at(ranked[0]);
            const double top2 = ranked.size() > 1 ? step.label_probs.at(ranked[1]) : 0.0;
            (last ? prof.top1_last : prof.top1_intermediate).push_back(top1);
            (last ? prof.top2_last : prof.top2_intermediate).push_back(top2);
            (last ? prof.entropy_last : prof.entropy_intermediate).push_back(step.entropy_nats);
        }
    }
    return profiles;
}

ConsistencyRecord ranking_consistency(const std::vector<GenerationTrace>& traces,
                                      const LabelSpace& ls) {
    ConsistencyRecord rec;
    long n_same = 0, n_later = 0, n_never = 0;
    std::map<int, std::pair<long, long>> per_step;  // step -> (same, total)
    for (const auto& trace : traces) {
        if (trace.steps.size() < 2) continue;
        for (std::size_t r = 0; r + 1 < trace.steps.size(); ++r) {
            const auto ranked = rank_labels(trace.steps[r], ls);
            if (ranked.size() < 2) continue;
            ConsistencySample sample;
            sample.doc_id = trace.doc_id;
            sample.step = static_cast<int>(r);
            sample.second_label = ranked[1];
            sample.next_predicted = trace.predicted_labels[r + 1];
            sample.same = sample.second_label == sample.next_predicted;
            sample.predicted_later =
                std::find(trace.predicted_labels.begin() + static_cast<long>(r) + 2,
                          trace.predicted_labels.end(),
                          sample.second_label) != trace.predicted_labels.end();
            sample.next_pred_prob_at_current =
                trace.steps[r].label_probs.at(sample.next_predicted);
            sample.second_prob_at_next = trace.steps[r + 1].label_probs.at(sample.second_label);

            rec.n_intermediate += 1;
            auto& [same_count, total] = per_step[sample.step];
            total += 1;
            if (sample.same) {
                n_same += 1;
                same_count += 1;
            } else if (sample.predicted_later) {
                n_later += 1;
            } else {
                n_never += 1;
            }
            rec.samples.push_back(std::move(sample));
        }
    }
    if (rec.n_intermediate > 0) {
        const double denom = static_cast<double>(rec.n_intermediate);
        rec.same_pct = 100.0 * n_same / denom;
        rec.later_not_next_pct = 100.0 * n_later / denom;
        rec.never_predicted_pct = 100.0 * n_never / denom;
        const long not_next = n_later + n_never;
        if (not_next > 0)
            rec.never_predicted_given_not_next_pct = 100.0 * n_never / static_cast<double>(not_next);
        for (const auto& [step, counts] : per_step) {
            rec.same_pct_per_step[step] = 100.0 * counts.first / static_cast<double>(counts.second);
        }
    }
    return rec;
}

namespace {

double quantile(std::vector<double> sorted, double q) {
    // linear interpolation between order statistics; input already sorted
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

SpikinessProfile spikiness_profile(const std::vector<GenerationTrace>& traces) {
    SpikinessProfile prof;
    std::size_t max_rank = 0;
    for (const auto& trace : traces) {
        if (trace.steps.empty()) continue;
        std::vector<double> probs;
        probs.reserve(trace.steps[0].label_probs.size());
        for (const auto& [_, p] : trace.steps[0].label_probs) probs.push_back(p);
        std::sort(probs.begin(), probs.end(), std::greater<>());
        max_rank = std::max(max_rank, probs.size());
        prof.doc_ids.push_back(trace.doc_id);
        prof.sorted_probs.push_back(std::move(probs));
    }
    if (prof.sorted_probs.empty()) throw DataError("spikiness_profile: no first-step distributions");
    for (std::size_t rank = 0; rank < max_rank; ++rank) {
        std::vector<double> column;
        for (const auto& row : prof.sorted_probs) {
            if (rank < row.size()) column.push_back(row[rank]);
        }
        std::sort(column.begin(), column.end());
        double mean = 0.0;
        for (const double v : column) mean += v;
        mean /= static_cast<double>(column.size());
        prof.rank_quantiles.push_back({column.front(), quantile(column, 0.25),
                                       quantile(column, 0.5), quantile(column, 0.75),
                                       column.back(), mean});
    }
    return prof;
}

namespace {

int distinct_label_count(const GenerationTrace& trace) {
    const std::set<std::string> distinct(trace.predicted_labels.begin(),
                                         trace.predicted_labels.end());
    return static_cast<int>(distinct.size());
}

}  // namespace

std::vector<MultilabelRatePoint> multilabel_rate(const std::vector<GenerationTrace>& traces) {
    std::map<double, MultilabelRatePoint> buckets;
    for (const auto& trace : traces) {
        if (!trace.meta.multilabel_demo_ratio) continue;
        auto& point = buckets[*trace.meta.multilabel_demo_ratio];
        point.ratio = *trace.meta.multilabel_demo_ratio;
        point.n += 1;
        if (distinct_label_count(trace) >= 2) point.n_multilabel += 1;
    }
    std::vector<MultilabelRatePoint> out;
    for (auto& [_, point] : buckets) {
        point.pct = point.n > 0 ? 100.0 * point.n_multilabel / static_cast<double>(point.n) : 0.0;
        out.push_back(point);
    }
    return out;
}

std::vector<PositionalAccuracyPoint> positional_accuracy(
    const std::vector<GenerationTrace>& traces,
    const std::map<std::string, std::set<std::string>>& golds) {
    std::map<int, PositionalAccuracyPoint> by_index;
    for (const auto& trace : traces) {
        auto gold_it = golds.find(trace.doc_id);
        if (gold_it == golds.end()) continue;
        for (std::size_t k = 0; k < trace.predicted_labels.size(); ++k) {
            auto& point = by_index[static_cast<int>(k)];
            point.index = static_cast<int>(k);
            point.n += 1;
            if (gold_it->second.count(trace.predicted_labels[k])) point.n_correct += 1;
        }
    }
    std::vector<PositionalAccuracyPoint> out;
    for (auto& [_, point] : by_index) {
        point.accuracy = point.n > 0 ? static_cast<double>(point.n_correct) / point.n : 0.0;
        out.push_back(point);
    }
    return out;
}

OrderAdherence order_adherence(const std::vector<GenerationTrace>& traces, const LabelSpace& ls) {
    OrderAdherence rec;
    int alphabetical = 0, prompt = 0;
    for (const auto& trace : traces) {
        if (distinct_label_count(trace) < 2) continue;
        rec.n_multilabel_traces += 1;
        const auto& seq = trace.predicted_labels;
        bool is_alpha = true, is_prompt = true;
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            if (seq[i] > seq[i + 1]) is_alpha = false;
            if (ls.prompt_position(seq[i]) > ls.prompt_position(seq[i + 1])) is_prompt = false;
        }
        if (is_alpha) ++alphabetical;
        if (is_prompt) ++prompt;
    }
    if (rec.n_multilabel_traces > 0) {
        rec.alphabetical_pct = 100.0 * alphabetical / static_cast<double>(rec.n_multilabel_traces);
        rec.prompt_order_pct = 100.0 * prompt / static_cast<double>(rec.n_multilabel_traces);
    }
    return rec;
}

DynamicsResult run_dynamics(const std::vector<GenerationTrace>& traces,
                            const std::map<std::string, std::set<std::string>>& golds,
                            const LabelSpace& ls) {
    if (traces.empty()) throw DataError("dynamics: empty trace corpus");
    DynamicsResult result;
    result.n_traces = static_cast<long>(traces.size());
    result.steps = step_rank_profile(traces, ls);
    result.consistency = ranking_consistency(traces, ls);
    result.spikiness = spikiness_profile(traces);
    result.multilabel = multilabel_rate(traces);
    result.positional = positional_accuracy(traces, golds);
    result.order = order_adherence(traces, ls);
    return result;
}

namespace {

nlohmann::json quantile_json(const std::array<double, 6>& q) {
    return {{"min", q[0]}, {"q25", q[1]}, {"median", q[2]}, {"q75", q[3]}, {"max", q[4]},
            {"mean", q[5]}};
}

}  // namespace

void write_dynamics_report(const DynamicsResult& result, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream out(fs::path(dir) / "step_probs.tsv", std::ios::trunc);
        out << "# mldist dynamics step samples v" << kDynamicsSchemaVersion << "\n";
        out << "step\tpartition\ttop1\ttop2\tentropy\n";
        for (const auto& [step, prof] : result.steps) {
            for (std::size_t i = 0; i < prof.top1_intermediate.size(); ++i) {
                out << step << "\tintermediate\t" << format_double(prof.top1_intermediate[i])
                    << '\t' << format_double(prof.top2_intermediate[i]) << '\t'
                    << format_double(prof.entropy_intermediate[i]) << '\n';
            }
            for (std::size_t i = 0; i < prof.top1_last.size(); ++i) {
                out << step << "\tlast\t" << format_double(prof.top1_last[i]) << '\t'
                    << format_double(prof.top2_last[i]) << '\t'
                    << format_double(prof.entropy_last[i]) << '\n';
            }
        }
    }
    {
        std::ofstream out(fs::path(dir) / "consistency_samples.tsv", std::ios::trunc);
        out << "# mldist dynamics consistency samples v" << kDynamicsSchemaVersion << "\n";
        out << "doc_id\tstep\tsecond_label\tnext_predicted\tsame\tpredicted_later\t"
               "next_pred_prob_at_current\tsecond_prob_at_next\n";
        for (const auto& s : result.consistency.samples) {
            out << s.doc_id << '\t' << s.step << '\t' << s.second_label << '\t'
                << s.next_predicted << '\t' << (s.same ? 1 : 0) << '\t'
                << (s.predicted_later ? 1 : 0) << '\t'
                << format_double(s.next_pred_prob_at_current) << '\t'
                << format_double(s.second_prob_at_next) << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "spikiness.tsv", std::ios::trunc);
        out << "# mldist dynamics spikiness samples v" << kDynamicsSchemaVersion << "\n";
        out << "doc_id\trank\tprob\n";
        for (std::size_t i = 0; i < result.spikiness.sorted_probs.size(); ++i) {
            const auto& row = result.spikiness.sorted_probs[i];
            for (std::size_t rank = 0; rank < row.size(); ++rank) {
                out << result.spikiness.doc_ids[i] << '\t' << rank << '\t'
                    << format_double(row[rank]) << '\n';
            }
        }
    }

    nlohmann::json j;
    j["schema_version"] = kDynamicsSchemaVersion;
    j["n_traces"] = result.n_traces;
    {
        nlohmann::json steps;
        for (const auto& [step, prof] : result.steps) {
            steps[std::to_string(step)] = {
                {"n_intermediate", prof.top1_intermediate.size()},
                {"n_last", prof.top1_last.size()},
            };
        }
        j["step_partition_counts"] = std::move(steps);
    }
    {
        const auto& c = result.consistency;
        nlohmann::json jc;
        jc["n_intermediate"] = c.n_intermediate;
        jc["same_pct"] = c.same_pct;
        jc["later_not_next_pct"] = c.later_not_next_pct;
        jc["never_predicted_pct"] = c.never_predicted_pct;
        if (c.never_predicted_given_not_next_pct)
            jc["never_predicted_given_not_next_pct"] = *c.never_predicted_given_not_next_pct;
        nlohmann::json per_step;
        for (const auto& [step, pct] : c.same_pct_per_step) per_step[std::to_string(step)] = pct;
        jc["same_pct_per_step"] = std::move(per_step);
        j["ranking_consistency"] = std::move(jc);
    }
    {
        nlohmann::json ranks = nlohmann::json::array();
        for (const auto& q : result.spikiness.rank_quantiles) ranks.push_back(quantile_json(q));
        j["spikiness_rank_quantiles"] = std::move(ranks);
    }
    {
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : result.multilabel) {
            points.push_back({{"ratio", p.ratio}, {"n", p.n}, {"n_multilabel", p.n_multilabel},
                              {"pct", p.pct}});
        }
        j["multilabel_rate"] = std::move(points);
    }
    {
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : result.positional) {
            points.push_back({{"index", p.index}, {"n", p.n}, {"n_correct", p.n_correct},
                              {"accuracy", p.accuracy}});
        }
        j["positional_accuracy"] = std::move(points);
    }
    j["order_adherence"] = {{"n_multilabel_traces", result.order.n_multilabel_traces},
                            {"alphabetical_pct", result.order.alphabetical_pct},
                            {"prompt_order_pct", result.order.prompt_order_pct}};

    std::ofstream out(fs::path(dir) / "summary.json", std::ios::trunc);
    if (!out) throw ConfigError("cannot write dynamics summary under " + dir);
    out << j.dump(2) << "\n";
}

}  // namespace mldist
