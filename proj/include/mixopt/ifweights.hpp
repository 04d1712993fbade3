#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixopt/types.hpp"

namespace mixopt::ifweights {

// Per-point sampling probabilities for one domain. `point_ids` and `probs`
// are aligned; together they may cover only a subset of the domain (the
// harmful-point filter produces such subsets).
struct NormalizedWeights {
    std::string domain;
    std::vector<std::string> point_ids;
    std::vector<double> probs;
    double shift_epsilon = 0.0;
};

// eps = 1e-6 * (max(I) - min(I) + 1), scale-aware floor for the shift
double default_shift_epsilon(const DomainDataset& domain);

// probs_i = (I_i - min(I) + eps) / sum_j (I_j - min(I) + eps)
NormalizedWeights normalize_weights(const DomainDataset& domain, double shift_epsilon);
NormalizedWeights normalize_weights(const DomainDataset& domain);

// Equal probability over every point (the uniform-random estimator's weights).
NormalizedWeights uniform_weights(const DomainDataset& domain);

// Drop the floor(drop_fraction * size) lowest-influence points (ties at the
// cutoff keep the lexicographically smaller id), uniform over the rest.
NormalizedWeights filtered_uniform_weights(const DomainDataset& domain, double drop_fraction);

// Draw `count` ids; without replacement this is sequential weighted draws
// with removal and renormalization. Deterministic given the seed.
std::vector<std::string> sample_domain(const NormalizedWeights& weights, std::size_t count,
                                       bool with_replacement, std::uint64_t rng_seed);

// Small exact ridge-regression problem used to validate influence values
// against leave-one-out retraining.
struct RidgeProblem {
    Eigen::MatrixXd features;       // rows are training points
    Eigen::VectorXd labels;
    double reg_lambda = 1e-2;
    Eigen::MatrixXd test_features;
    Eigen::VectorXd test_labels;

    void validate() const;
};

// Exact ridge fit: (X'X + lambda I)^-1 X'y.
Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                          double reg_lambda);

// Sum of squared test residuals at theta (no regularizer).
double ridge_test_loss(const RidgeProblem& problem, const Eigen::VectorXd& theta);

// Influence of each training point on the test loss, with positive values
// marking helpful points: IF_i = grad L_test' H^-1 grad l_i evaluated at the
// exact ridge solution. IF_i approximates the test-loss increase caused by
// removing point i, so it lines up with leave-one-out deltas.
std::vector<double> ridge_influences(const RidgeProblem& problem);

// CSV loader: header `point_id,influence[,payload_ref]`.
DomainDataset load_influence_csv(const std::string& domain_name, const std::string& path);

}  // namespace mixopt::ifweights
