#include "regdet/losses.hpp"

#include <algorithm>
#include <cmath>

namespace regdet::losses {

namespace {

void check_finite(const std::vector<double>& logits) {
    require<NumericError>(!logits.empty(), "losses: empty logit vector");
    for (double z : logits)
        require<NumericError>(!std::isnan(z), "losses: NaN logit");
}

double log_sum_exp(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - m);
    return m + std::log(s);
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits) {
    check_finite(logits);
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> q(logits.size());
    double s = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        q[k] = std::exp(logits[k] - m);
        s += q[k];
    }
    for (double& v : q) v /= s;
    return q;
}

double cross_entropy(const std::vector<double>& logits, int target_index) {
    check_finite(logits);
    require<ConfigError>(target_index >= 0 && target_index < static_cast<int>(logits.size()),
                         "cross_entropy: target index ", target_index, " outside 0..",
                         logits.size() - 1);
    return -logits[target_index] + log_sum_exp(logits);
}

std::vector<double> cross_entropy_grad(const std::vector<double>& logits, int target_index) {
    std::vector<double> g = softmax(logits);
    require<ConfigError>(target_index >= 0 && target_index < static_cast<int>(logits.size()),
                         "cross_entropy_grad: target index out of range");
    g[target_index] -= 1.0;
    return g;
}

double smooth_l1(double prediction, double target) {
    require<NumericError>(std::isfinite(prediction) && std::isfinite(target),
                          "smooth_l1: non-finite input");
    const double d = std::abs(target - prediction);
    return d < 1.0 ? 0.5 * d * d : d - 0.5;
}

double smooth_l1_grad(double prediction, double target) {
    const double d = prediction - target;
    return std::clamp(d, -1.0, 1.0);
}

std::vector<int> mine_hard_negatives(const std::vector<double>& candidate_scores,
                                     int n_positives, double ratio, RandomStream& rng) {
    require<ConfigError>(ratio > 0.0, "mine_hard_negatives: ratio must be > 0");
    if (candidate_scores.empty()) return {};
    for (double s : candidate_scores)
        require<NumericError>(s >= 0.0 && s <= 1.0 && std::isfinite(s),
                              "mine_hard_negatives: score outside [0, 1]");

    const int pool = static_cast<int>(candidate_scores.size());
    const int want = std::min(pool, std::max(1, static_cast<int>(ratio * n_positives)));

    std::vector<int> remaining(pool);
    for (int i = 0; i < pool; ++i) remaining[i] = i;
    std::vector<double> weights(candidate_scores);

    std::vector<int> picked;
    picked.reserve(want);
    while (static_cast<int>(picked.size()) < want) {
        double total = 0.0;
        for (int i : remaining) total += weights[i];
        int chosen_slot = -1;
        if (total <= 0.0) {
            chosen_slot = static_cast<int>(
                rng.uniform_int(0, static_cast<std::int64_t>(remaining.size()) - 1));
        } else {
            double u = rng.uniform() * total;
            for (std::size_t s = 0; s < remaining.size(); ++s) {
                u -= weights[remaining[s]];
                if (u <= 0.0) {
                    chosen_slot = static_cast<int>(s);
                    break;
                }
            }
            if (chosen_slot < 0) chosen_slot = static_cast<int>(remaining.size()) - 1;
        }
        picked.push_back(remaining[chosen_slot]);
        remaining.erase(remaining.begin() + chosen_slot);
    }
    return picked;
}

}  // namespace regdet::losses
