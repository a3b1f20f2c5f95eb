#include "mldist/bradley_terry.hpp"

#include <algorithm>
#include <cmath>

#include "mldist/errors.hpp"

namespace mldist {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    // -softplus(-x), stable on both tails
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

void set_preference(PairwiseTable& table, const std::string& i, const std::string& j,
                    double p_i_over_j) {
    if (i == j) throw DataError("pairwise preference needs two distinct labels");
    if (i < j) {
        table[{i, j}] = p_i_over_j;
    } else {
        table[{j, i}] = 1.0 - p_i_over_j;
    }
}

double get_preference(const PairwiseTable& table, const std::string& i, const std::string& j) {
    if (i == j) throw DataError("pairwise preference needs two distinct labels");
    const auto key = i < j ? std::make_pair(i, j) : std::make_pair(j, i);
    auto it = table.find(key);
    if (it == table.end())
        throw DataError("pairwise table is missing pair (" + i + ", " + j + ")");
    return i < j ? it->second : 1.0 - it->second;
}

std::size_t BTProblem::pair_index(std::size_t i, std::size_t j) const {
    // Upper triangle of an n x n matrix, row-major, i < j.
    const std::size_t n = items.size();
    return i * n - i * (i + 1) / 2 + (j - i - 1);
}

BTProblem BTProblem::build(const PairwiseTable& table, const LabelSpace& ls, BTMode mode) {
    BTProblem prob;
    prob.items = ls.labels;
    prob.items.push_back(ls.none_label);
    const std::size_t n = prob.items.size();
    prob.p.assign(n * (n - 1) / 2, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = get_preference(table, prob.items[i], prob.items[j]);
            if (v < 0.0 || v > 1.0)
                throw DataError("pairwise preference outside [0,1] for (" + prob.items[i] + ", " +
                                prob.items[j] + ")");
            if (mode == BTMode::kOutcome && v != 0.5) v = v > 0.5 ? 1.0 : 0.0;
            prob.p[prob.pair_index(i, j)] = v;
        }
    }
    return prob;
}

double BTProblem::loss(const std::vector<double>& scores) const {
    const std::size_t n = items.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double pij = p[pair_index(i, j)];
            const double d = scores[i] - scores[j];
            total -= pij * log_sigmoid(d) + (1.0 - pij) * log_sigmoid(-d);
        }
    }
    return total;
}

std::vector<double> BTProblem::gradient(const std::vector<double>& scores) const {
    const std::size_t n = items.size();
    std::vector<double> grad(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double pij = p[pair_index(i, j)];
            const double residual = sigmoid(scores[i] - scores[j]) - pij;
            grad[i] += residual;
            grad[j] -= residual;
        }
    }
    return grad;
}

BTScores fit_bradley_terry(const PairwiseTable& table, const LabelSpace& ls, BTMode mode) {
    constexpr int kMaxIterations = 10000;
    constexpr double kMinDecrease = 1e-10;
    constexpr double kArmijo = 1e-4;

    const BTProblem prob = BTProblem::build(table, ls, mode);
    const std::size_t n = prob.items.size();
    const std::size_t none_index = n - 1;

    std::vector<double> scores(n, 0.0);
    double loss = prob.loss(scores);
    double step = 1.0;
    BTScores result;
    result.loss_history.push_back(loss);

    int iter = 0;
    for (; iter < kMaxIterations; ++iter) {
        std::vector<double> grad = prob.gradient(scores);
        grad[none_index] = 0.0;  // gauge: none stays pinned at zero
        double grad_sq = 0.0;
        for (const double g : grad) grad_sq += g * g;
        if (grad_sq == 0.0) {
            result.converged = true;
            break;
        }

        std::vector<double> trial(n);
        double trial_loss = loss;
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            for (std::size_t k = 0; k < n; ++k) trial[k] = scores[k] - step * grad[k];
            trial_loss = prob.loss(trial);
            if (trial_loss <= loss - kArmijo * step * grad_sq) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            result.converged = true;  // no descent direction at working precision
            break;
        }
        const double decrease = loss - trial_loss;
        scores.swap(trial);
        loss = trial_loss;
        result.loss_history.push_back(loss);
        step = std::min(step * 2.0, 1e6);
        if (decrease < kMinDecrease) {
            result.converged = true;
            ++iter;
            break;
        }
    }

    for (std::size_t k = 0; k < n; ++k) result.scores[prob.items[k]] = scores[k];
    result.scores[ls.none_label] = 0.0;
    result.fit_loss = loss;
    result.iterations = iter;
    return result;
}

}  // namespace mldist
