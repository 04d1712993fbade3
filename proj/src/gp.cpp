#include "mixopt/gp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <utility>

#include "mixopt/error.hpp"

namespace mixopt::gp {

namespace {

constexpr double kMinLengthscale = 1e-3;
constexpr double kMaxLengthscale = 1e3;
constexpr double kDegenerateStd = 1e-12;

Eigen::MatrixXd kernel_matrix(const std::vector<MixingRatio>& inputs, const KernelParams& params) {
    const auto t = static_cast<Eigen::Index>(inputs.size());
    Eigen::MatrixXd k(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
        k(i, i) = params.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = se_kernel(inputs[static_cast<std::size_t>(i)],
                                       inputs[static_cast<std::size_t>(j)], params);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

// Cholesky of m, escalating a diagonal jitter from 1e-10 by factors of ten up
// to 1e-4 if the plain factorization fails.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& m, double& jitter_out) {
    double jitter = 0.0;
    while (true) {
        Eigen::MatrixXd work = m;
        if (jitter > 0.0) {
            work.diagonal().array() += jitter;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) {
            jitter_out = jitter;
            return llt.matrixL();
        }
        if (jitter == 0.0) {
            jitter = 1e-10;
        } else if (jitter < 1e-4) {
            jitter = std::min(jitter * 10.0, 1e-4);
        } else {
            throw Error(ErrorKind::NumericalBreakdown,
                        "covariance factorization failed even with maximum jitter");
        }
    }
}

void check_training_data(const std::vector<MixingRatio>& inputs,
                         const std::vector<double>& targets) {
    if (inputs.size() != targets.size()) {
        throw Error(ErrorKind::DimensionMismatch, "input and target counts differ");
    }
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        if (inputs[i].size() != inputs[0].size()) {
            throw Error(ErrorKind::DimensionMismatch, "training inputs mix dimensions");
        }
    }
    for (double y : targets) {
        if (!std::isfinite(y)) {
            throw Error(ErrorKind::NonFiniteLoss, "non-finite training target");
        }
    }
}

}  // namespace

void KernelParams::validate() const {
    if (!std::isfinite(lengthscale) || lengthscale < kMinLengthscale ||
        lengthscale > kMaxLengthscale) {
        throw Error(ErrorKind::ConfigInvalid, "kernel lengthscale outside [1e-3, 1e3]");
    }
    if (!std::isfinite(signal_variance) || signal_variance <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "kernel signal variance must be positive");
    }
}

double se_kernel(const MixingRatio& a, const MixingRatio& b, const KernelParams& params) {
    params.validate();
    const double d2 = a.squared_distance(b);
    return params.signal_variance * std::exp(-d2 / (2.0 * params.lengthscale * params.lengthscale));
}

double log_marginal_likelihood(const std::vector<MixingRatio>& inputs,
                               const std::vector<double>& targets, double zeta,
                               const KernelParams& params) {
    check_training_data(inputs, targets);
    params.validate();
    const auto t = static_cast<Eigen::Index>(inputs.size());
    if (t == 0) {
        return 0.0;
    }
    Eigen::MatrixXd m = kernel_matrix(inputs, params);
    m.diagonal().array() += zeta;
    double jitter = 0.0;
    const Eigen::MatrixXd chol = cholesky_with_jitter(m, jitter);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets.data(), t);
    // y'(K+zI)^-1 y = ||L^-1 y||^2 and log det = 2 sum log L_ii
    const double quad = chol.triangularView<Eigen::Lower>().solve(y).squaredNorm();
    const double logdet = 2.0 * chol.diagonal().array().log().sum();
    return -0.5 * quad - 0.5 * logdet -
           0.5 * static_cast<double>(t) * std::log(2.0 * std::acos(-1.0));
}

KernelParams fit_lengthscale(const std::vector<MixingRatio>& inputs,
                             const std::vector<double>& targets, double zeta,
                             const std::vector<double>& grid) {
    check_training_data(inputs, targets);
    if (inputs.size() < 2) {
        throw Error(ErrorKind::InsufficientData, "lengthscale fit needs at least two observations");
    }
    if (grid.empty()) {
        throw Error(ErrorKind::ConfigInvalid, "lengthscale grid is empty");
    }
    std::vector<double> ordered = grid;
    std::sort(ordered.begin(), ordered.end());
    KernelParams best;
    double best_score = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double m : ordered) {
        KernelParams candidate{m, 1.0};
        candidate.validate();
        const double score = log_marginal_likelihood(inputs, targets, zeta, candidate);
        // strict improvement keeps the smaller lengthscale on ties
        if (!found || score > best_score) {
            best = candidate;
            best_score = score;
            found = true;
        }
    }
    return best;
}

std::vector<double> default_lengthscale_grid() {
    constexpr int kPoints = 25;
    std::vector<double> grid;
    grid.reserve(kPoints);
    for (int i = 0; i < kPoints; ++i) {
        const double e = -2.0 + 3.0 * static_cast<double>(i) / (kPoints - 1);
        grid.push_back(std::pow(10.0, e));
    }
    return grid;
}

GPState GPState::make(std::vector<MixingRatio> inputs, std::vector<double> targets, double zeta,
                      KernelParams kernel) {
    check_training_data(inputs, targets);
    kernel.validate();
    if (!std::isfinite(zeta) || zeta < 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "observation noise must be finite and nonnegative");
    }
    GPState state;
    state.inputs_ = std::move(inputs);
    state.targets_ = std::move(targets);
    state.kernel_ = kernel;
    state.zeta_ = zeta;
    state.factorize();
    return state;
}

GPState GPState::empty(double zeta, KernelParams kernel) {
    return make({}, {}, zeta, kernel);
}

GPState GPState::fit(std::vector<MixingRatio> inputs, std::vector<double> targets, double zeta,
                     const std::vector<double>& grid) {
    const auto t = targets.size();
    double mean = 0.0;
    double std = 1.0;
    if (t >= 2) {
        for (double y : targets) mean += y;
        mean /= static_cast<double>(t);
        double ss = 0.0;
        for (double y : targets) ss += (y - mean) * (y - mean);
        std = std::sqrt(ss / static_cast<double>(t - 1));
        if (std < kDegenerateStd) std = 1.0;
    } else {
        mean = 0.0;
    }
    std::vector<double> z(t);
    for (std::size_t i = 0; i < t; ++i) z[i] = (targets[i] - mean) / std;
    const KernelParams kernel = fit_lengthscale(inputs, z, zeta, grid);
    return make(std::move(inputs), std::move(targets), zeta, kernel);
}

GPState GPState::append(const MixingRatio& input, double target) const {
    std::vector<MixingRatio> inputs = inputs_;
    std::vector<double> targets = targets_;
    inputs.push_back(input);
    targets.push_back(target);
    return make(std::move(inputs), std::move(targets), zeta_, kernel_);
}

void GPState::factorize() {
    const auto t = static_cast<Eigen::Index>(inputs_.size());
    target_mean_ = 0.0;
    target_std_ = 1.0;
    jitter_ = 0.0;
    if (t == 0) {
        chol_.resize(0, 0);
        alpha_.resize(0);
        return;
    }
    if (t >= 2) {
        for (double y : targets_) target_mean_ += y;
        target_mean_ /= static_cast<double>(t);
        double ss = 0.0;
        for (double y : targets_) ss += (y - target_mean_) * (y - target_mean_);
        target_std_ = std::sqrt(ss / static_cast<double>(t - 1));
        if (target_std_ < kDegenerateStd) target_std_ = 1.0;
    }
    Eigen::VectorXd z(t);
    for (Eigen::Index i = 0; i < t; ++i) {
        z(i) = (targets_[static_cast<std::size_t>(i)] - target_mean_) / target_std_;
    }
    Eigen::MatrixXd m = kernel_matrix(inputs_, kernel_);
    m.diagonal().array() += zeta_;
    chol_ = cholesky_with_jitter(m, jitter_);
    alpha_ = chol_.triangularView<Eigen::Lower>().transpose().solve(
        chol_.triangularView<Eigen::Lower>().solve(z));
}

Eigen::VectorXd GPState::cross_covariance(const MixingRatio& query) const {
    const auto t = static_cast<Eigen::Index>(inputs_.size());
    Eigen::VectorXd k(t);
    for (Eigen::Index i = 0; i < t; ++i) {
        k(i) = se_kernel(query, inputs_[static_cast<std::size_t>(i)], kernel_);
    }
    return k;
}

Posterior GPState::posterior(const MixingRatio& query) const {
    const double prior_var = kernel_.signal_variance;
    if (inputs_.empty()) {
        return Posterior{0.0, std::sqrt(prior_var)};
    }
    const Eigen::VectorXd k = cross_covariance(query);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
    const double mean_z = k.dot(alpha_);
    double var = prior_var - v.squaredNorm();
    assert(var >= -1e-8);
    var = std::clamp(var, 0.0, prior_var);
    return Posterior{target_mean_ + target_std_ * mean_z, target_std_ * std::sqrt(var)};
}

void GPState::posterior_batch(const std::vector<MixingRatio>& queries, std::vector<double>& means,
                              std::vector<double>& stddevs) const {
    const auto m = queries.size();
    means.assign(m, 0.0);
    stddevs.assign(m, 0.0);
    const double prior_var = kernel_.signal_variance;
    if (inputs_.empty()) {
        means.assign(m, 0.0);
        stddevs.assign(m, std::sqrt(prior_var));
        return;
    }
    const auto t = static_cast<Eigen::Index>(inputs_.size());
    Eigen::MatrixXd kx(t, static_cast<Eigen::Index>(m));
    for (std::size_t q = 0; q < m; ++q) {
        for (Eigen::Index i = 0; i < t; ++i) {
            kx(i, static_cast<Eigen::Index>(q)) =
                se_kernel(queries[q], inputs_[static_cast<std::size_t>(i)], kernel_);
        }
    }
    const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(kx);
    const Eigen::VectorXd mean_z = kx.transpose() * alpha_;
    for (std::size_t q = 0; q < m; ++q) {
        const auto qi = static_cast<Eigen::Index>(q);
        double var = prior_var - v.col(qi).squaredNorm();
        assert(var >= -1e-8);
        var = std::clamp(var, 0.0, prior_var);
        means[q] = target_mean_ + target_std_ * mean_z(qi);
        stddevs[q] = target_std_ * std::sqrt(var);
    }
}

double GPState::factor_error() const {
    if (inputs_.empty()) {
        return 0.0;
    }
    Eigen::MatrixXd m = kernel_matrix(inputs_, kernel_);
    m.diagonal().array() += zeta_ + jitter_;
    const Eigen::MatrixXd rebuilt = chol_ * chol_.transpose();
    return (rebuilt - m).norm() / m.norm();
}

json GPState::checkpoint() const {
    json inputs = json::array();
    for (const auto& r : inputs_) {
        inputs.push_back(r.weights());
    }
    return json{{"inputs", inputs},
                {"kernel",
                 {{"lengthscale", kernel_.lengthscale},
                  {"signal_variance", kernel_.signal_variance}}},
                {"targets", targets_},
                {"zeta", zeta_}};
}

GPState GPState::from_checkpoint(const json& j) {
    std::vector<MixingRatio> inputs;
    for (const auto& w : j.at("inputs")) {
        inputs.push_back(MixingRatio::from_simplex(w.get<std::vector<double>>()));
    }
    KernelParams kernel;
    kernel.lengthscale = j.at("kernel").at("lengthscale").get<double>();
    kernel.signal_variance = j.at("kernel").at("signal_variance").get<double>();
    return make(std::move(inputs), j.at("targets").get<std::vector<double>>(),
                j.at("zeta").get<double>(), kernel);
}

GPState append_observation(const GPState& state, const Observation& obs) {
    return state.append(obs.ratio, obs.loss);
}

}  // namespace mixopt::gp
