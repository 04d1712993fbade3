#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mixopt/ifweights.hpp"
#include "mixopt/rng.hpp"

namespace mixopt::validation {

// Recursive adaptive Simpson quadrature of f over [a, b].
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol);

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

// Asymptotic KS p-value via Q_KS((sqrt(n) + 0.12 + 0.11/sqrt(n)) * d).
double ks_pvalue(double statistic, std::size_t n);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Standard normal draw by Box-Muller from canonical uniforms.
double gaussian(rng::Stream& stream);

// Linear data with noisy labels; used by the influence validation.
ifweights::RidgeProblem make_ridge_problem(std::uint64_t seed, std::size_t n_train, std::size_t d,
                                           std::size_t n_test);

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::vector<std::string> lines;
};

// Posterior mean/variance against an extended-precision dense solve.
SuiteResult validate_gp_posterior();
// Min-of-k truncated-exponential law: KS fit and unit PDF mass.
SuiteResult validate_order_stat_law();
// Weighted-draw marginals and the no-repeat guarantee.
SuiteResult validate_sampling();
// Influence values against leave-one-out retraining.
SuiteResult validate_ridge_influence();

std::vector<std::string> suite_names();
SuiteResult run_suite(const std::string& name);

}  // namespace mixopt::validation
