#pragma once

#include <cmath>
#include <vector>

#include "regdet/common.hpp"

namespace regdet {

// Maps a continuous grading score to an ordinal category. Bin edges sit at
// midpoints between consecutive centers; a score exactly on an edge belongs
// to the upper bin. Categories are 1-based: bin(centers[k]) == k + 1.
class BinningScheme {
public:
    BinningScheme() = default;

    explicit BinningScheme(std::vector<double> centers) : centers_(std::move(centers)) {
        require<ConfigError>(centers_.size() >= 2, "BinningScheme: need at least 2 centers");
        for (std::size_t k = 1; k < centers_.size(); ++k) {
            require<ConfigError>(centers_[k - 1] < centers_[k],
                                 "BinningScheme: centers must be strictly increasing");
            edges_.push_back(0.5 * (centers_[k - 1] + centers_[k]));
        }
    }

    int category_count() const { return static_cast<int>(centers_.size()); }
    const std::vector<double>& centers() const { return centers_; }
    const std::vector<double>& edges() const { return edges_; }

    // 1-based bin index; scores beyond the extreme edges clamp to the
    // first/last bin.
    int bin_index(double score) const {
        require<NumericError>(!std::isnan(score), "bin_index: score is NaN");
        int idx = 0;
        while (idx < static_cast<int>(edges_.size()) && score >= edges_[idx]) ++idx;
        return idx + 1;
    }

    double center_of(int bin) const {
        require<ConfigError>(bin >= 1 && bin <= category_count(), "center_of: bin ", bin,
                             " outside 1..", category_count());
        return centers_[bin - 1];
    }

    bool contains_bin(int bin) const { return bin >= 1 && bin <= category_count(); }

private:
    std::vector<double> centers_;
    std::vector<double> edges_;
};

}  // namespace regdet
