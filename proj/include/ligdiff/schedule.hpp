#pragma once

#include <cstddef>
#include <vector>

namespace ligdiff {

// Precomputed variance schedule. Index convention: beta(t), alpha(t),
// alpha_bar(t) are defined for t in [1, T]; alpha_bar(0) == 1 so the t = 1
// posterior coefficients are well defined. Immutable after construction.
class NoiseSchedule {
public:
    struct PosteriorCoeffs {
        double c0;          // weight on predicted clean coordinates
        double ct;          // weight on current noisy coordinates
        double beta_tilde;  // posterior variance
    };

    static NoiseSchedule sigmoid(int T, double beta_min, double beta_max, double steepness);

    int steps() const { return T_; }
    double beta(int t) const { return beta_[check(t)]; }
    double alpha(int t) const { return alpha_[check(t)]; }
    double alpha_bar(int t) const;  // valid for t in [0, T]

    PosteriorCoeffs posterior_coeffs(int t) const;

private:
    NoiseSchedule() = default;
    std::size_t check(int t) const;

    int T_ = 0;
    std::vector<double> beta_;       // beta_[t-1] stores beta(t)
    std::vector<double> alpha_;      // 1 - beta
    std::vector<double> alpha_bar_;  // running product
};

}  // namespace ligdiff
