#include "mldist/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "mldist/bradley_terry.hpp"
#include "mldist/errors.hpp"

namespace mldist {

namespace {
constexpr double kL2Strength = 1.0;
constexpr double kGradTolerance = 1e-8;
constexpr int kMaxNewtonIterations = 200;
}  // namespace

void EmbeddingMatrix::validate() const {
    if (static_cast<Eigen::Index>(doc_ids.size()) != values.rows())
        throw DataError("embedding matrix: doc_ids not aligned with rows");
    if (!values.allFinite()) throw DataError("embedding matrix contains non-finite entries");
    std::set<std::string> seen;
    for (const auto& id : doc_ids) {
        if (!seen.insert(id).second) throw DataError("duplicate doc_id in embeddings: " + id);
    }
}

Eigen::MatrixXd Reduction::apply(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z = (X.rowwise() - mean.transpose()).array().rowwise() *
                        scale.transpose().array();
    if (basis) return Z * *basis;
    return Z;
}

int Reduction::output_dim() const {
    return basis ? static_cast<int>(basis->cols()) : static_cast<int>(mean.size());
}

Reduction fit_reduction(const EmbeddingMatrix& X) {
    X.validate();
    const Eigen::Index n = X.values.rows();
    const Eigen::Index d = X.values.cols();
    if (n < 2) throw DataError("fit_reduction: need at least 2 rows");

    Reduction red;
    red.mean = X.values.colwise().mean();
    Eigen::MatrixXd centered = X.values.rowwise() - red.mean.transpose();
    Eigen::VectorXd variance = centered.array().square().colwise().mean();
    red.scale = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double sd = std::sqrt(variance(i));
        red.scale(i) = sd > 1e-12 ? 1.0 / sd : 0.0;
    }

    if (d < 4) {
        red.skipped = true;
        return red;
    }
    Eigen::MatrixXd Z = centered.array().rowwise() * red.scale.transpose().array();
    Eigen::Index target = (d + 3) / 4;  // ceil(d/4)
    const Eigen::Index available = std::min(n, d);
    if (target > available) {
        target = available;
        red.rank_capped = true;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinV);
    red.basis = svd.matrixV().leftCols(target);
    return red;
}

bool LabelProbe::predict(const Eigen::VectorXd& x) const {
    if (degenerate) return degenerate_positive;
    return weights.dot(x) + bias >= 0.0;
}

double LabelProbe::probability(const Eigen::VectorXd& x) const {
    if (degenerate) return degenerate_positive ? 1.0 : 0.0;
    return sigmoid(weights.dot(x) + bias);
}

double logistic_objective(const Eigen::MatrixXd& X, const std::vector<int>& y01,
                          const Eigen::VectorXd& weights, double bias, double l2_strength) {
    double loss = 0.5 * l2_strength * weights.squaredNorm();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double z = X.row(i).dot(weights) + bias;
        const double margin = y01[static_cast<std::size_t>(i)] == 1 ? z : -z;
        // softplus(-margin), stable on both tails
        loss += margin >= 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    }
    return loss;
}

namespace {

LabelProbe fit_label_probe(const Eigen::MatrixXd& X, const std::vector<int>& y01) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    LabelProbe probe;
    const long positives = std::count(y01.begin(), y01.end(), 1);
    if (positives == 0 || positives == n) {
        probe.degenerate = true;
        probe.degenerate_positive = positives == n;
        probe.weights = Eigen::VectorXd::Zero(d);
        return probe;
    }

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);  // weights then bias
    double loss = logistic_objective(X, y01, theta.head(d), theta(d), kL2Strength);
    for (int iter = 0; iter < kMaxNewtonIterations; ++iter) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(d + 1);
        grad.head(d) = kL2Strength * theta.head(d);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d + 1, d + 1);
        hess.topLeftCorner(d, d) = kL2Strength * Eigen::MatrixXd::Identity(d, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double z = X.row(i).dot(theta.head(d)) + theta(d);
            const double mu = sigmoid(z);
            const double t = static_cast<double>(y01[static_cast<std::size_t>(i)]);
            const double residual = mu - t;
            grad.head(d) += residual * X.row(i).transpose();
            grad(d) += residual;
            const double w = std::max(mu * (1.0 - mu), 1e-12);
            Eigen::VectorXd xi(d + 1);
            xi.head(d) = X.row(i).transpose();
            xi(d) = 1.0;
            hess.noalias() += w * xi * xi.transpose();
        }
        if (grad.norm() < kGradTolerance) break;
        const Eigen::VectorXd delta = hess.ldlt().solve(grad);
        double step = 1.0;
        for (int half = 0; half < 40; ++half) {
            const Eigen::VectorXd trial = theta - step * delta;
            const double trial_loss =
                logistic_objective(X, y01, trial.head(d), trial(d), kL2Strength);
            if (trial_loss <= loss) {
                theta = trial;
                loss = trial_loss;
                break;
            }
            step *= 0.5;
        }
    }
    probe.weights = theta.head(d);
    probe.bias = theta(d);
    return probe;
}

}  // namespace

ProbeModel train_probe(const Eigen::MatrixXd& X_reduced, const Reduction& reduction,
                       const std::vector<std::set<std::string>>& targets, const LabelSpace& ls) {
    if (static_cast<std::size_t>(X_reduced.rows()) != targets.size())
        throw DataError("train_probe: targets not aligned with rows");
    ProbeModel model;
    model.reduction = reduction;
    for (const auto& label : ls.labels) {
        std::vector<int> y01(targets.size(), 0);
        for (std::size_t i = 0; i < targets.size(); ++i) y01[i] = targets[i].count(label) ? 1 : 0;
        LabelProbe probe = fit_label_probe(X_reduced, y01);
        if (probe.degenerate) model.degenerate_labels.push_back(label);
        model.probes[label] = std::move(probe);
    }
    return model;
}

std::vector<std::set<std::string>> predict_sets(const ProbeModel& model,
                                                const Eigen::MatrixXd& X_reduced,
                                                const LabelSpace& ls) {
    std::vector<std::set<std::string>> out(static_cast<std::size_t>(X_reduced.rows()));
    for (Eigen::Index i = 0; i < X_reduced.rows(); ++i) {
        const Eigen::VectorXd x = X_reduced.row(i).transpose();
        for (const auto& label : ls.labels) {
            if (model.probes.at(label).predict(x)) out[static_cast<std::size_t>(i)].insert(label);
        }
    }
    return out;
}

ProbeEvalMode parse_probe_mode(const std::string& name) {
    if (name == "gold") return ProbeEvalMode::kGold;
    if (name == "pred") return ProbeEvalMode::kPred;
    if (name == "pred2plus" || name == "pred2+") return ProbeEvalMode::kPred2Plus;
    throw ConfigError("unknown probe mode: " + name);
}

std::string probe_mode_name(ProbeEvalMode mode) {
    switch (mode) {
        case ProbeEvalMode::kGold: return "gold";
        case ProbeEvalMode::kPred: return "pred";
        case ProbeEvalMode::kPred2Plus: return "pred2plus";
    }
    return "unknown";
}

std::vector<std::set<std::string>> probe_targets(
    ProbeEvalMode mode, const std::vector<std::string>& doc_ids,
    const std::map<std::string, std::set<std::string>>& golds,
    const std::map<std::string, const GenerationTrace*>& traces) {
    std::vector<std::set<std::string>> targets;
    targets.reserve(doc_ids.size());
    for (const auto& id : doc_ids) {
        if (mode == ProbeEvalMode::kGold) {
            auto it = golds.find(id);
            if (it == golds.end()) throw JoinError("no gold labels for document " + id);
            targets.push_back(it->second);
            continue;
        }
        auto it = traces.find(id);
        if (it == traces.end()) throw JoinError("no trace for document " + id);
        const auto& predicted = it->second->predicted_labels;
        if (mode == ProbeEvalMode::kPred) {
            targets.emplace_back(predicted.begin(), predicted.end());
        } else {
            std::set<std::string> beyond_first;
            for (std::size_t i = 1; i < predicted.size(); ++i) beyond_first.insert(predicted[i]);
            targets.push_back(std::move(beyond_first));
        }
    }
    return targets;
}

MicroF1Result eval_probe(const ProbeModel& model, const Eigen::MatrixXd& X_reduced,
                         const std::vector<std::set<std::string>>& targets, const LabelSpace& ls) {
    if (targets.empty()) throw DataError("eval_probe: empty evaluation set");
    if (static_cast<std::size_t>(X_reduced.rows()) != targets.size())
        throw DataError("eval_probe: targets not aligned with rows");
    const auto predictions = predict_sets(model, X_reduced, ls);
    std::vector<std::pair<std::set<std::string>, std::set<std::string>>> rows;
    rows.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) rows.emplace_back(predictions[i], targets[i]);
    return micro_f1(rows);
}

std::vector<EmbeddingRecord> read_embedding_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open embedding sidecar: " + path);
    std::vector<EmbeddingRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            EmbeddingRecord rec;
            rec.doc_id = j.at("doc_id").get<std::string>();
            rec.prompt_fingerprint = j.value("prompt_fingerprint", std::string());
            rec.values = j.at("values").get<std::vector<double>>();
            if (j.contains("dim") && j.at("dim").get<std::size_t>() != rec.values.size())
                throw DataError("embedding sidecar line " + std::to_string(lineno) +
                                ": dim does not match values length");
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("embedding sidecar line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

void write_embedding_sidecar(const std::vector<EmbeddingRecord>& records,
                             const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open embedding sidecar for writing: " + path);
    for (const auto& rec : records) {
        nlohmann::json j;
        j["doc_id"] = rec.doc_id;
        if (!rec.prompt_fingerprint.empty()) j["prompt_fingerprint"] = rec.prompt_fingerprint;
        j["dim"] = rec.values.size();
        j["values"] = rec.values;
        out << j.dump() << "\n";
    }
}

}  // namespace mldist
