#pragma once

#include <cstdint>

namespace mixopt::truncexp {

// Exponential(rate) restricted to [0, cutoff]; k is the number of draws whose
// minimum the order-statistic functions describe.
struct TruncExpParams {
    double rate = 1.0;    // lambda
    double cutoff = 1.0;  // c
    std::size_t k = 1;

    void validate() const;

    bool operator==(const TruncExpParams&) const = default;
};

// Inverse CDF of a single truncated-exponential draw at u in [0, 1].
double inverse_cdf(double u, double rate, double cutoff);

// Density of the minimum of k draws:
// (lambda k e^{-lambda u} / (1-e^{-lambda c})) *
// ((e^{-lambda u} - e^{-lambda c}) / (1-e^{-lambda c}))^{k-1} on [0, c].
double order_stat_pdf(double u, const TruncExpParams& p);

// CDF of the minimum: 1 - (1 - (1-e^{-lambda u})/(1-e^{-lambda c}))^k.
double order_stat_cdf(double u, const TruncExpParams& p);

// Bisection inverse of order_stat_cdf.
double order_stat_quantile(double q, const TruncExpParams& p);

// Min of k inverse-CDF draws; always in [0, cutoff].
double sample_order_stat(const TruncExpParams& p, std::uint64_t rng_seed);

}  // namespace mixopt::truncexp
