#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mixopt/types.hpp"

namespace mixopt::gp {

struct KernelParams {
    double lengthscale = 1.0;
    double signal_variance = 1.0;

    void validate() const;  // lengthscale in [1e-3, 1e3], signal_variance > 0

    bool operator==(const KernelParams&) const = default;
};

// signal_variance * exp(-||a-b||^2 / (2 m^2))
double se_kernel(const MixingRatio& a, const MixingRatio& b, const KernelParams& params);

struct Posterior {
    double mean = 0.0;
    double stddev = 1.0;
};

// Exact GP log marginal likelihood of the targets as given (no internal
// standardization): -1/2 y'(K+zI)^-1 y - 1/2 log det(K+zI) - t/2 log 2pi.
double log_marginal_likelihood(const std::vector<MixingRatio>& inputs,
                               const std::vector<double>& targets, double zeta,
                               const KernelParams& params);

// Grid search maximizing the log marginal likelihood; ties go to the smaller
// lengthscale. Needs at least two observations.
KernelParams fit_lengthscale(const std::vector<MixingRatio>& inputs,
                             const std::vector<double>& targets, double zeta,
                             const std::vector<double>& grid);

// 25 log-spaced points in [1e-2, 1e1]
std::vector<double> default_lengthscale_grid();

// Immutable GP surrogate over mixing ratios. Targets are standardized
// internally once t >= 2 (zero prior mean on the standardized scale) and
// predictions are mapped back. Appending yields a new state.
class GPState {
  public:
    GPState() = default;

    static GPState make(std::vector<MixingRatio> inputs, std::vector<double> targets, double zeta,
                        KernelParams kernel = {});

    static GPState empty(double zeta, KernelParams kernel = {});

    // Rebuild with the lengthscale refit over the grid (standardized targets).
    static GPState fit(std::vector<MixingRatio> inputs, std::vector<double> targets, double zeta,
                       const std::vector<double>& grid);

    GPState append(const MixingRatio& input, double target) const;

    Posterior posterior(const MixingRatio& query) const;

    // Batched posterior for candidate scoring; one triangular solve for all
    // queries instead of one per query.
    void posterior_batch(const std::vector<MixingRatio>& queries, std::vector<double>& means,
                         std::vector<double>& stddevs) const;

    std::size_t size() const noexcept { return inputs_.size(); }
    const std::vector<MixingRatio>& inputs() const noexcept { return inputs_; }
    const std::vector<double>& targets() const noexcept { return targets_; }
    const KernelParams& kernel() const noexcept { return kernel_; }
    double zeta() const noexcept { return zeta_; }

    // relative Frobenius error of L L' against K + zeta I (+ applied jitter)
    double factor_error() const;
    double applied_jitter() const noexcept { return jitter_; }

    json checkpoint() const;
    static GPState from_checkpoint(const json& j);

  private:
    std::vector<MixingRatio> inputs_;
    std::vector<double> targets_;
    KernelParams kernel_;
    double zeta_ = 0.01;

    double target_mean_ = 0.0;
    double target_std_ = 1.0;
    double jitter_ = 0.0;
    Eigen::MatrixXd chol_;   // lower factor of K + zeta I (+ jitter)
    Eigen::VectorXd alpha_;  // (K + zeta I)^-1 z on the standardized scale

    void factorize();
    Eigen::VectorXd cross_covariance(const MixingRatio& query) const;
};

// Spec-facing wrapper around GPState::append.
GPState append_observation(const GPState& state, const Observation& obs);

}  // namespace mixopt::gp
