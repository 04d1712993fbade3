#include "mixopt/validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mixopt/acquire.hpp"
#include "mixopt/error.hpp"
#include "mixopt/gp.hpp"
#include "mixopt/truncexp.hpp"

namespace mixopt::validation {

namespace {

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

double simpson_segment(double a, double fa, double b, double fb, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_recurse(const std::function<double(double)>& f, double a, double fa, double b,
                       double fb, double m, double fm, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson_segment(a, fa, m, fm, flm);
    const double right = simpson_segment(m, fm, b, fb, frm);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return simpson_recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           simpson_recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

// Extended-precision dense posterior, written independently of the gp module:
// explicit standardization, explicit kernel matrix, Gaussian elimination.
class DensePosteriorOracle {
  public:
    DensePosteriorOracle(const std::vector<MixingRatio>& inputs, const std::vector<double>& targets,
                         double zeta, double lengthscale)
        : inputs_(inputs), lengthscale_(lengthscale) {
        const std::size_t t = inputs.size();
        mean_ = 0.0L;
        std_ = 1.0L;
        if (t >= 2) {
            for (double y : targets) mean_ += y;
            mean_ /= static_cast<long double>(t);
            long double ss = 0.0L;
            for (double y : targets) {
                ss += (static_cast<long double>(y) - mean_) * (static_cast<long double>(y) - mean_);
            }
            std_ = sqrtl(ss / static_cast<long double>(t - 1));
            if (std_ < 1e-12L) std_ = 1.0L;
        }
        matrix_.assign(t, std::vector<long double>(t, 0.0L));
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < t; ++j) {
                matrix_[i][j] = kernel(inputs[i], inputs[j]);
            }
            matrix_[i][i] += static_cast<long double>(zeta);
        }
        std::vector<long double> z(t);
        for (std::size_t i = 0; i < t; ++i) {
            z[i] = (static_cast<long double>(targets[i]) - mean_) / std_;
        }
        alpha_ = solve(matrix_, z);
    }

    std::pair<double, double> posterior(const MixingRatio& query) const {
        const std::size_t t = inputs_.size();
        std::vector<long double> kx(t);
        for (std::size_t i = 0; i < t; ++i) {
            kx[i] = kernel(query, inputs_[i]);
        }
        const std::vector<long double> w = solve(matrix_, kx);
        long double mean_z = 0.0L;
        long double quad = 0.0L;
        for (std::size_t i = 0; i < t; ++i) {
            mean_z += kx[i] * alpha_[i];
            quad += kx[i] * w[i];
        }
        long double var = 1.0L - quad;
        if (var < 0.0L) var = 0.0L;
        const long double mean = mean_ + std_ * mean_z;
        const long double var_destd = std_ * std_ * var;
        return {static_cast<double>(mean), static_cast<double>(var_destd)};
    }

  private:
    long double kernel(const MixingRatio& a, const MixingRatio& b) const {
        long double d2 = 0.0L;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
            d2 += d * d;
        }
        const long double m = static_cast<long double>(lengthscale_);
        return expl(-d2 / (2.0L * m * m));
    }

    static std::vector<long double> solve(std::vector<std::vector<long double>> a,
                                          std::vector<long double> b) {
        const std::size_t n = b.size();
        for (std::size_t col = 0; col < n; ++col) {
            std::size_t pivot = col;
            for (std::size_t row = col + 1; row < n; ++row) {
                if (fabsl(a[row][col]) > fabsl(a[pivot][col])) pivot = row;
            }
            std::swap(a[col], a[pivot]);
            std::swap(b[col], b[pivot]);
            for (std::size_t row = col + 1; row < n; ++row) {
                const long double factor = a[row][col] / a[col][col];
                for (std::size_t k = col; k < n; ++k) {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
        std::vector<long double> x(n, 0.0L);
        for (std::size_t row = n; row-- > 0;) {
            long double acc = b[row];
            for (std::size_t k = row + 1; k < n; ++k) {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        return x;
    }

    std::vector<MixingRatio> inputs_;
    double lengthscale_;
    long double mean_ = 0.0L;
    long double std_ = 1.0L;
    std::vector<std::vector<long double>> matrix_;
    std::vector<long double> alpha_;
};

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(m);
    const double whole = simpson_segment(a, fa, b, fb, fm);
    return simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, 60);
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) {
        throw Error(ErrorKind::InsufficientData, "KS statistic needs samples");
    }
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double value = cdf(samples[i]);
        d = std::max(d, std::abs(value - static_cast<double>(i + 1) / n));
        d = std::max(d, std::abs(value - static_cast<double>(i) / n));
    }
    return d;
}

double ks_pvalue(double statistic, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += (j % 2 == 1 ? term : -term);
        if (term < 1e-16) return std::clamp(2.0 * sum, 0.0, 1.0);
    }
    // the alternating series only converges for positive lambda; a vanishing
    // statistic means the samples are indistinguishable
    return 1.0;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw Error(ErrorKind::InsufficientData, "correlation needs two aligned samples");
    }
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::NumericalBreakdown, "correlation undefined for constant samples");
    }
    return sxy / std::sqrt(sxx * syy);
}

double gaussian(rng::Stream& stream) {
    const double u1 = stream.uniform_pos();
    const double u2 = stream.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::acos(-1.0) * u2);
}

ifweights::RidgeProblem make_ridge_problem(std::uint64_t seed, std::size_t n_train, std::size_t d,
                                           std::size_t n_test) {
    rng::Stream stream(rng::derive(seed, 0x51DE));
    Eigen::VectorXd theta(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        theta(i) = gaussian(stream);
    }
    const auto fill = [&](std::size_t rows, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
        x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
        y.resize(static_cast<Eigen::Index>(rows));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                x(r, c) = gaussian(stream);
            }
            y(r) = x.row(r).dot(theta) + 0.5 * gaussian(stream);
        }
    };
    ifweights::RidgeProblem problem;
    problem.reg_lambda = 1.0;
    fill(n_train, problem.features, problem.labels);
    fill(n_test, problem.test_features, problem.test_labels);
    return problem;
}

SuiteResult validate_gp_posterior() {
    SuiteResult result;
    result.name = "gp_oracle";
    constexpr double kTol = 1e-8;
    const double lengthscales[] = {0.1, 0.3, 1.0, 3.0};
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        rng::Stream stream(rng::derive(0xBEEF, seed));
        const std::size_t dim = 2 + seed % 8;           // up to 9 domains
        const std::size_t t = 1 + seed % 12;            // up to 12 observations
        const double lengthscale = lengthscales[seed % 4];
        std::vector<MixingRatio> inputs;
        std::vector<double> targets;
        for (std::size_t i = 0; i < t; ++i) {
            inputs.push_back(acquire::sample_dirichlet_uniform(dim, stream));
            targets.push_back(3.0 * stream.uniform() - 1.0);
        }
        const gp::GPState state =
            gp::GPState::make(inputs, targets, 0.01, gp::KernelParams{lengthscale, 1.0});
        const DensePosteriorOracle oracle(inputs, targets, 0.01, lengthscale);
        for (int q = 0; q < 5; ++q) {
            const MixingRatio query = acquire::sample_dirichlet_uniform(dim, stream);
            const gp::Posterior p = state.posterior(query);
            const auto [mean, var] = oracle.posterior(query);
            worst_mean = std::max(worst_mean, std::abs(p.mean - mean));
            worst_var = std::max(worst_var, std::abs(p.stddev * p.stddev - var));
        }
    }
    result.passed = worst_mean <= kTol && worst_var <= kTol;
    result.lines.push_back("max |mean - oracle| = " + format_double(worst_mean) +
                           ", max |var - oracle| = " + format_double(worst_var) +
                           " over 20 seeded datasets (tolerance 1e-8)");
    return result;
}

SuiteResult validate_order_stat_law() {
    SuiteResult result;
    result.name = "order_stat";
    result.passed = true;
    constexpr std::size_t kDraws = 100000;
    for (std::size_t k : {1, 2, 5}) {
        const truncexp::TruncExpParams params{1.0, 1.0, k};
        std::vector<double> samples;
        samples.reserve(kDraws);
        for (std::size_t i = 0; i < kDraws; ++i) {
            samples.push_back(truncexp::sample_order_stat(
                params, rng::derive(0x0D5A, static_cast<std::uint64_t>(k), i)));
        }
        const double d = ks_statistic(std::move(samples), [&](double u) {
            return truncexp::order_stat_cdf(u, params);
        });
        const double p = ks_pvalue(d, kDraws);
        const double mass = adaptive_simpson(
            [&](double u) { return truncexp::order_stat_pdf(u, params); }, 0.0, 1.0, 1e-12);
        const bool ks_ok = p > 0.01;
        const bool mass_ok = std::abs(mass - 1.0) <= 1e-8;
        result.passed = result.passed && ks_ok && mass_ok;
        result.lines.push_back("k=" + std::to_string(k) + ": KS D=" + format_double(d) +
                               " p=" + format_double(p) + " (need > 0.01), pdf mass=" +
                               format_double(mass) + " (need 1 +/- 1e-8)");
    }
    return result;
}

SuiteResult validate_sampling() {
    SuiteResult result;
    result.name = "sampling";

    // marginals on a three-point domain
    const DomainDataset domain("tri", {{"a", 0.0, {}}, {"b", 1.0, {}}, {"c", 2.0, {}}});
    const ifweights::NormalizedWeights weights = ifweights::normalize_weights(domain);
    constexpr std::size_t kDraws = 1000000;
    std::vector<std::size_t> tally(3, 0);
    for (std::size_t i = 0; i < kDraws; ++i) {
        const auto ids = ifweights::sample_domain(weights, 1, false, rng::derive(0x3A3, i));
        tally[static_cast<std::size_t>(ids[0][0] - 'a')]++;
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        const double freq = static_cast<double>(tally[j]) / static_cast<double>(kDraws);
        worst = std::max(worst, std::abs(freq - weights.probs[j]));
    }
    const bool marginals_ok = worst <= 0.002;
    result.lines.push_back("marginal error over 10^6 draws = " + format_double(worst) +
                           " (need <= 0.002)");

    // distinctness without replacement
    const DomainDataset wide("wide", {{"p0", -1.0, {}},
                                      {"p1", 0.5, {}},
                                      {"p2", 2.0, {}},
                                      {"p3", 0.0, {}},
                                      {"p4", 1.25, {}},
                                      {"p5", -0.25, {}}});
    const ifweights::NormalizedWeights wide_weights = ifweights::normalize_weights(wide);
    bool distinct_ok = true;
    for (std::size_t trial = 0; trial < 10000 && distinct_ok; ++trial) {
        auto ids = ifweights::sample_domain(wide_weights, wide.size(), false,
                                            rng::derive(0xD15, trial));
        std::sort(ids.begin(), ids.end());
        distinct_ok = std::adjacent_find(ids.begin(), ids.end()) == ids.end() &&
                      ids.size() == wide.size();
    }
    result.lines.push_back(distinct_ok
                               ? "no repeated id in 10^4 exhaustive without-replacement draws"
                               : "repeated id found in a without-replacement draw");

    result.passed = marginals_ok && distinct_ok;
    return result;
}

SuiteResult validate_ridge_influence() {
    SuiteResult result;
    result.name = "ridge_if";

    // correlation against exact leave-one-out deltas
    const ifweights::RidgeProblem problem = make_ridge_problem(7, 200, 5, 50);
    const std::vector<double> influences = ifweights::ridge_influences(problem);
    const Eigen::VectorXd theta =
        ifweights::ridge_fit(problem.features, problem.labels, problem.reg_lambda);
    const double full_loss = ridge_test_loss(problem, theta);
    std::vector<double> deltas(influences.size());
    for (Eigen::Index i = 0; i < problem.features.rows(); ++i) {
        const Eigen::Index n = problem.features.rows();
        Eigen::MatrixXd x(n - 1, problem.features.cols());
        Eigen::VectorXd y(n - 1);
        x.topRows(i) = problem.features.topRows(i);
        y.head(i) = problem.labels.head(i);
        x.bottomRows(n - 1 - i) = problem.features.bottomRows(n - 1 - i);
        y.tail(n - 1 - i) = problem.labels.tail(n - 1 - i);
        const Eigen::VectorXd theta_without = ifweights::ridge_fit(x, y, problem.reg_lambda);
        deltas[static_cast<std::size_t>(i)] = ridge_test_loss(problem, theta_without) - full_loss;
    }
    const double corr = pearson(influences, deltas);
    const bool corr_ok = corr >= 0.9;
    result.lines.push_back("Pearson(influence, leave-one-out delta) = " + format_double(corr) +
                           " on n=200 d=5 (need >= 0.9)");

    // removing the most harmful point should help
    std::size_t improved = 0;
    constexpr std::size_t kProblems = 100;
    for (std::uint64_t seed = 0; seed < kProblems; ++seed) {
        const ifweights::RidgeProblem p = make_ridge_problem(100 + seed, 60, 4, 30);
        const std::vector<double> inf = ifweights::ridge_influences(p);
        const auto victim = static_cast<Eigen::Index>(
            std::min_element(inf.begin(), inf.end()) - inf.begin());
        const Eigen::VectorXd full = ifweights::ridge_fit(p.features, p.labels, p.reg_lambda);
        const Eigen::Index n = p.features.rows();
        Eigen::MatrixXd x(n - 1, p.features.cols());
        Eigen::VectorXd y(n - 1);
        x.topRows(victim) = p.features.topRows(victim);
        y.head(victim) = p.labels.head(victim);
        x.bottomRows(n - 1 - victim) = p.features.bottomRows(n - 1 - victim);
        y.tail(n - 1 - victim) = p.labels.tail(n - 1 - victim);
        const Eigen::VectorXd pruned = ifweights::ridge_fit(x, y, p.reg_lambda);
        if (ridge_test_loss(p, pruned) < ridge_test_loss(p, full)) {
            ++improved;
        }
    }
    const bool sign_ok = improved >= 95;
    result.lines.push_back("dropping the lowest-influence point helped in " +
                           std::to_string(improved) + "/100 problems (need >= 95)");

    result.passed = corr_ok && sign_ok;
    return result;
}

std::vector<std::string> suite_names() {
    return {"gp_oracle", "order_stat", "sampling", "ridge_if"};
}

SuiteResult run_suite(const std::string& name) {
    if (name == "gp_oracle") return validate_gp_posterior();
    if (name == "order_stat") return validate_order_stat_law();
    if (name == "sampling") return validate_sampling();
    if (name == "ridge_if") return validate_ridge_influence();
    throw Error(ErrorKind::ConfigInvalid, "unknown validation suite '" + name + "'");
}

}  // namespace mixopt::validation
