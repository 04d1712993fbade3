#include "mixopt/ifweights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "mixopt/error.hpp"
#include "mixopt/rng.hpp"

namespace mixopt::ifweights {

namespace {

void check_weights(const NormalizedWeights& weights) {
    if (weights.point_ids.empty() || weights.point_ids.size() != weights.probs.size()) {
        throw Error(ErrorKind::EmptyDomain, "weights for domain '" + weights.domain +
                                                "' are empty or misaligned");
    }
    for (double p : weights.probs) {
        if (!std::isfinite(p) || p <= 0.0) {
            throw Error(ErrorKind::ConfigInvalid, "sampling probabilities must be positive");
        }
    }
}

// index of the bucket containing x in the prefix sums of w (x in [0, sum w))
std::size_t pick_bucket(const std::vector<double>& w, double x) {
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        cum += w[i];
        if (x < cum) return i;
    }
    return w.size() - 1;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

double default_shift_epsilon(const DomainDataset& domain) {
    return 1e-6 * (domain.max_influence() - domain.min_influence() + 1.0);
}

NormalizedWeights normalize_weights(const DomainDataset& domain, double shift_epsilon) {
    if (!std::isfinite(shift_epsilon) || shift_epsilon <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "shift epsilon must be positive");
    }
    const double low = domain.min_influence();
    NormalizedWeights weights;
    weights.domain = domain.name();
    weights.shift_epsilon = shift_epsilon;
    weights.point_ids.reserve(domain.size());
    weights.probs.reserve(domain.size());
    double total = 0.0;
    for (const auto& point : domain.points()) {
        const double shifted = point.influence - low + shift_epsilon;
        weights.point_ids.push_back(point.id);
        weights.probs.push_back(shifted);
        total += shifted;
    }
    for (double& p : weights.probs) {
        p /= total;
    }
    return weights;
}

NormalizedWeights normalize_weights(const DomainDataset& domain) {
    return normalize_weights(domain, default_shift_epsilon(domain));
}

NormalizedWeights uniform_weights(const DomainDataset& domain) {
    NormalizedWeights weights;
    weights.domain = domain.name();
    weights.shift_epsilon = 0.0;
    const double p = 1.0 / static_cast<double>(domain.size());
    for (const auto& point : domain.points()) {
        weights.point_ids.push_back(point.id);
        weights.probs.push_back(p);
    }
    return weights;
}

NormalizedWeights filtered_uniform_weights(const DomainDataset& domain, double drop_fraction) {
    if (!std::isfinite(drop_fraction) || drop_fraction < 0.0 || drop_fraction >= 1.0) {
        throw Error(ErrorKind::ConfigInvalid, "drop fraction must lie in [0, 1)");
    }
    const std::size_t n = domain.size();
    const auto drop = static_cast<std::size_t>(
        std::floor(drop_fraction * static_cast<double>(n)));

    // lowest influence first; equal influence drops the larger id so the
    // lexicographically smaller one survives
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = domain.points()[a];
        const auto& pb = domain.points()[b];
        if (pa.influence != pb.influence) return pa.influence < pb.influence;
        return pa.id > pb.id;
    });
    std::vector<bool> dropped(n, false);
    for (std::size_t i = 0; i < drop; ++i) {
        dropped[order[i]] = true;
    }

    NormalizedWeights weights;
    weights.domain = domain.name();
    weights.shift_epsilon = 0.0;
    const double p = 1.0 / static_cast<double>(n - drop);
    for (std::size_t i = 0; i < n; ++i) {
        if (dropped[i]) continue;
        weights.point_ids.push_back(domain.points()[i].id);
        weights.probs.push_back(p);
    }
    return weights;
}

std::vector<std::string> sample_domain(const NormalizedWeights& weights, std::size_t count,
                                       bool with_replacement, std::uint64_t rng_seed) {
    if (count == 0) {
        return {};
    }
    check_weights(weights);
    if (!with_replacement && count > weights.point_ids.size()) {
        throw Error(ErrorKind::CountExceedsDomain,
                    "domain '" + weights.domain + "' has " +
                        std::to_string(weights.point_ids.size()) + " points, needed " +
                        std::to_string(count));
    }
    rng::Stream stream(rng_seed);
    std::vector<std::string> out;
    out.reserve(count);
    if (with_replacement) {
        const double total = std::accumulate(weights.probs.begin(), weights.probs.end(), 0.0);
        for (std::size_t c = 0; c < count; ++c) {
            const std::size_t i = pick_bucket(weights.probs, stream.uniform() * total);
            out.push_back(weights.point_ids[i]);
        }
        return out;
    }
    std::vector<std::string> ids = weights.point_ids;
    std::vector<double> probs = weights.probs;
    for (std::size_t c = 0; c < count; ++c) {
        const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
        const std::size_t i = pick_bucket(probs, stream.uniform() * total);
        out.push_back(ids[i]);
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(i));
        probs.erase(probs.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return out;
}

void RidgeProblem::validate() const {
    if (features.rows() == 0 || features.rows() != labels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "feature rows and label count differ");
    }
    if (test_features.rows() == 0 || test_features.rows() != test_labels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "test feature rows and label count differ");
    }
    if (test_features.cols() != features.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "train and test feature dimensions differ");
    }
    if (features.cols() < 1 || features.cols() > 20) {
        throw Error(ErrorKind::ConfigInvalid, "feature dimension must lie in [1, 20]");
    }
    if (!std::isfinite(reg_lambda) || reg_lambda <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "ridge regularizer must be positive");
    }
}

Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                          double reg_lambda) {
    Eigen::MatrixXd a = features.transpose() * features;
    a.diagonal().array() += reg_lambda;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularHessian, "ridge normal equations are singular");
    }
    return ldlt.solve(features.transpose() * labels);
}

double ridge_test_loss(const RidgeProblem& problem, const Eigen::VectorXd& theta) {
    return (problem.test_features * theta - problem.test_labels).squaredNorm();
}

std::vector<double> ridge_influences(const RidgeProblem& problem) {
    problem.validate();
    const Eigen::VectorXd theta = ridge_fit(problem.features, problem.labels, problem.reg_lambda);

    // H = 2 (X'X + lambda I); per-point gradient 2 r_i x_i; test gradient
    // 2 Xt' rt. IF_i = g_test' H^-1 g_i = 2 r_i (x_i' v) with H v = g_test.
    Eigen::MatrixXd h = problem.features.transpose() * problem.features;
    h.diagonal().array() += problem.reg_lambda;
    h *= 2.0;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularHessian, "influence Hessian is singular");
    }
    const Eigen::VectorXd test_residual = problem.test_features * theta - problem.test_labels;
    const Eigen::VectorXd g_test = 2.0 * problem.test_features.transpose() * test_residual;
    const Eigen::VectorXd v = ldlt.solve(g_test);

    const Eigen::VectorXd residual = problem.features * theta - problem.labels;
    std::vector<double> influences(static_cast<std::size_t>(problem.features.rows()));
    for (Eigen::Index i = 0; i < problem.features.rows(); ++i) {
        influences[static_cast<std::size_t>(i)] =
            2.0 * residual(i) * problem.features.row(i).dot(v);
    }
    return influences;
}

DomainDataset load_influence_csv(const std::string& domain_name, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ConfigInvalid, "cannot open influence file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::ConfigInvalid, "influence file is empty: " + path);
    }
    const std::string header = trim(line);
    if (header != "point_id,influence" && header != "point_id,influence,payload_ref") {
        throw Error(ErrorKind::ConfigInvalid,
                    "unexpected influence header '" + header + "' in " + path);
    }
    std::vector<DomainPoint> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string row = trim(line);
        if (row.empty()) continue;
        std::stringstream ss(row);
        std::string id;
        std::string value;
        std::string payload;
        if (!std::getline(ss, id, ',') || !std::getline(ss, value, ',')) {
            throw Error(ErrorKind::ConfigInvalid,
                        path + ":" + std::to_string(line_no) + ": expected point_id,influence");
        }
        const bool has_payload = static_cast<bool>(std::getline(ss, payload, ','));
        double influence = 0.0;
        try {
            std::size_t used = 0;
            influence = std::stod(trim(value), &used);
            if (used != trim(value).size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ConfigInvalid,
                        path + ":" + std::to_string(line_no) + ": bad influence '" + value + "'");
        }
        if (!std::isfinite(influence)) {
            throw Error(ErrorKind::NonFiniteInfluence,
                        path + ":" + std::to_string(line_no) + ": influence must be finite");
        }
        DomainPoint point;
        point.id = trim(id);
        point.influence = influence;
        if (has_payload) point.payload_ref = trim(payload);
        points.push_back(std::move(point));
    }
    return DomainDataset(domain_name, std::move(points));
}

}  // namespace mixopt::ifweights
