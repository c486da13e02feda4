#pragma once

#include <vector>

#include "regdet/common.hpp"
#include "regdet/random.hpp"

namespace regdet::losses {

// Numerically stabilized softmax: q_k = exp(z_k) / sum_j exp(z_j). The result
// is invariant under constant shifts of z, which the implementation exploits
// by subtracting max(z).
std::vector<double> softmax(const std::vector<double>& logits);

// Cross entropy of a delta target at `target_index` against softmax(logits):
// -z_i + log(sum_k exp(z_k)).
double cross_entropy(const std::vector<double>& logits, int target_index);

// d/dz of cross_entropy: softmax(z) - delta_i.
std::vector<double> cross_entropy_grad(const std::vector<double>& logits, int target_index);

// Huber-style smooth L1: 0.5*(t-p)^2 for |t-p| < 1, |t-p| - 0.5 otherwise.
double smooth_l1(double prediction, double target);

// d/dp of smooth_l1; magnitude clamps to 1 outside the quadratic zone.
double smooth_l1_grad(double prediction, double target);

// Stochastic hard-negative mining: samples ratio * n_positives indices
// (at least one, at most the pool size) without replacement, with selection
// probability proportional to the candidate's foreground score. A pool whose
// remaining scores are all zero falls back to uniform sampling.
std::vector<int> mine_hard_negatives(const std::vector<double>& candidate_scores,
                                     int n_positives, double ratio, RandomStream& rng);

}  // namespace regdet::losses
