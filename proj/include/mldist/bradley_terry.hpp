#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mldist/label_core.hpp"

namespace mldist {

// Pairwise preference table over labels plus the none option. Keys are
// lexicographically ordered unordered pairs (a, b) with a < b; the value is
// the probability that a is preferred over b.
using PairwiseTable = std::map<std::pair<std::string, std::string>, double>;

void set_preference(PairwiseTable& table, const std::string& i, const std::string& j, double p_i_over_j);
double get_preference(const PairwiseTable& table, const std::string& i, const std::string& j);

enum class BTMode { kProb, kOutcome };

// Fitted Bradley-Terry logit scores, gauge-fixed by pinning the none score
// to zero.
struct BTScores {
    std::map<std::string, double> scores;  // labels plus none
    double fit_loss = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> loss_history;  // loss after each accepted step
};

// The pairwise-preference objective over a fixed item order. Loss is the
// negative log likelihood summed over unordered pairs:
//   -sum_{i<j} [ p_ij ln sigmoid(s_i - s_j) + (1 - p_ij) ln sigmoid(s_j - s_i) ]
struct BTProblem {
    std::vector<std::string> items;  // ls.labels then none, in that order
    std::vector<double> p;           // upper triangle, row-major: p[(i,j)] = P(i over j)

    static BTProblem build(const PairwiseTable& table, const LabelSpace& ls, BTMode mode);

    std::size_t pair_index(std::size_t i, std::size_t j) const;
    double loss(const std::vector<double>& scores) const;
    std::vector<double> gradient(const std::vector<double>& scores) const;
};

// Full-batch gradient descent with backtracking line search from a zero
// initialization, the none score held at zero throughout. Stops when the
// loss decrease falls below 1e-10 or after 10,000 iterations.
BTScores fit_bradley_terry(const PairwiseTable& table, const LabelSpace& ls,
                           BTMode mode = BTMode::kProb);

double sigmoid(double x);
double log_sigmoid(double x);

}  // namespace mldist
