#include "mldist/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mldist/errors.hpp"

namespace mldist {

double nll(const AlignedDistribution& dist, const std::set<std::string>& gold,
           double epsilon_floor) {
    double total = 0.0;
    for (const auto& g : gold) {
        auto it = dist.probs.find(g);
        if (it == dist.probs.end())
            throw DataError("nll: gold label '" + g + "' not covered by distribution for " +
                            dist.doc_id);
        total -= std::log(std::max(it->second, epsilon_floor));
    }
    return total;
}

double l1(const AlignedDistribution& dist, const HumanDistribution& href, const LabelSpace& ls) {
    double total = 0.0;
    for (const auto& l : ls.labels) {
        total += std::abs(dist.probs.at(l) - href.fraction(l));
    }
    return total;
}

double example_f1(const std::set<std::string>& pred, const std::set<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& p : pred) inter += gold.count(p);
    return 2.0 * static_cast<double>(inter) / static_cast<double>(pred.size() + gold.size());
}

std::set<std::string> threshold_labels(const AlignedDistribution& dist, double threshold) {
    std::set<std::string> pred;
    for (const auto& [l, p] : dist.probs) {
        if (p >= threshold) pred.insert(l);
    }
    return pred;
}

double example_f1(const AlignedDistribution& dist, const std::set<std::string>& gold,
                  double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ConfigError("example_f1: threshold must be in (0,1)");
    return example_f1(threshold_labels(dist, threshold), gold);
}

MicroF1Result micro_f1(
    const std::vector<std::pair<std::set<std::string>, std::set<std::string>>>& pred_gold_rows) {
    if (pred_gold_rows.empty()) throw DataError("micro_f1: no rows");
    MicroF1Result r;
    for (const auto& [pred, gold] : pred_gold_rows) {
        for (const auto& p : pred) {
            if (gold.count(p)) {
                ++r.tp;
            } else {
                ++r.fp;
            }
        }
        for (const auto& g : gold) {
            if (!pred.count(g)) ++r.fn;
        }
    }
    if (r.tp + r.fp + r.fn == 0) {
        r.value = 1.0;
        r.degenerate = true;
    } else {
        r.value = 2.0 * r.tp / static_cast<double>(2 * r.tp + r.fp + r.fn);
    }
    return r;
}

MetricsReport evaluate_distributions(const std::vector<AlignedDistribution>& dists,
                                     const std::map<std::string, std::set<std::string>>& golds,
                                     const std::map<std::string, HumanDistribution>& human_dists,
                                     const LabelSpace& ls, double epsilon_floor, double threshold) {
    MetricsReport report;
    report.epsilon_floor = epsilon_floor;
    report.threshold = threshold;
    for (const auto& dist : dists) {
        auto gold_it = golds.find(dist.doc_id);
        if (gold_it == golds.end()) continue;
        dist.validate(ls);
        MetricsRow row;
        row.method_id = dist.method_id;
        row.doc_id = dist.doc_id;
        row.nll = nll(dist, gold_it->second, epsilon_floor);
        row.empty_gold = gold_it->second.empty();
        auto h_it = human_dists.find(dist.doc_id);
        if (h_it != human_dists.end()) row.l1 = l1(dist, h_it->second, ls);
        row.example_f1 = example_f1(dist, gold_it->second, threshold);
        report.rows.push_back(std::move(row));
    }
    if (report.rows.empty())
        throw JoinError("no distribution rows joined with gold labels on doc_id");
    recompute_aggregates(report);
    return report;
}

namespace {

// Plain two-pass moments keep aggregates exactly recomputable from rows.
double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v, double m) {
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

void recompute_aggregates(MetricsReport& report) {
    report.aggregates.clear();
    std::map<std::string, std::vector<double>> nlls, l1s, f1s;
    std::map<std::string, int> empties;
    for (const auto& row : report.rows) {
        nlls[row.method_id].push_back(row.nll);
        if (row.l1) l1s[row.method_id].push_back(*row.l1);
        f1s[row.method_id].push_back(row.example_f1);
        if (row.empty_gold) empties[row.method_id] += 1;
    }
    for (const auto& [method, v] : nlls) {
        MethodAggregate agg;
        agg.count = static_cast<int>(v.size());
        agg.n_empty_gold = empties.count(method) ? empties.at(method) : 0;
        agg.nll_mean = mean_of(v);
        agg.nll_std = stddev_of(v, agg.nll_mean);
        const auto& f1v = f1s.at(method);
        agg.example_f1_mean = mean_of(f1v);
        agg.example_f1_std = stddev_of(f1v, agg.example_f1_mean);
        if (l1s.count(method) && !l1s.at(method).empty()) {
            const auto& l1v = l1s.at(method);
            agg.count_l1 = static_cast<int>(l1v.size());
            agg.l1_mean = mean_of(l1v);
            agg.l1_std = stddev_of(l1v, *agg.l1_mean);
        }
        report.aggregates[method] = agg;
    }
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("format_double failed");
    return std::string(buf, ptr);
}

void write_metrics_tsv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open metrics table for writing: " + path);
    out << "# mldist metrics rows v" << kMetricsSchemaVersion << "\n";
    out << "method_id\tdoc_id\tnll\tl1\texample_f1\tempty_gold\n";
    for (const auto& row : report.rows) {
        out << row.method_id << '\t' << row.doc_id << '\t' << format_double(row.nll) << '\t'
            << (row.l1 ? format_double(*row.l1) : std::string()) << '\t'
            << format_double(row.example_f1) << '\t' << (row.empty_gold ? 1 : 0) << '\n';
    }
}

void write_metrics_summary(const MetricsReport& report, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = kMetricsSchemaVersion;
    j["epsilon_floor"] = report.epsilon_floor;
    j["threshold"] = report.threshold;
    j["gold_rule"] = report.gold_rule;
    nlohmann::json methods;
    for (const auto& [method, agg] : report.aggregates) {
        nlohmann::json m;
        m["count"] = agg.count;
        m["count_l1"] = agg.count_l1;
        m["n_empty_gold"] = agg.n_empty_gold;
        m["nll"] = {{"mean", agg.nll_mean}, {"std", agg.nll_std}};
        if (agg.l1_mean) m["l1"] = {{"mean", *agg.l1_mean}, {"std", *agg.l1_std}};
        m["example_f1"] = {{"mean", agg.example_f1_mean}, {"std", agg.example_f1_std}};
        methods[method] = std::move(m);
    }
    j["methods"] = std::move(methods);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open metrics summary for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mldist
