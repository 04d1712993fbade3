#include "mixopt/acquire.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "mixopt/error.hpp"

namespace mixopt::acquire {

namespace {

void check_config(const AcquireConfig& cfg) {
    if (!std::isfinite(cfg.beta) || cfg.beta < 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "acquisition beta must be finite and nonnegative");
    }
    if (cfg.n_candidates == 0) {
        throw Error(ErrorKind::ConfigInvalid, "acquisition needs at least one candidate");
    }
    if (!std::isfinite(cfg.refine_step_size) || cfg.refine_step_size <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "refinement step size must be positive");
    }
}

// strictly better under (score, lexicographic weights)
bool improves(double score, const MixingRatio& r, double best_score, const MixingRatio& best) {
    if (score < best_score) return true;
    if (score > best_score) return false;
    return r.lex_less(best);
}

}  // namespace

MixingRatio project_to_simplex(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0) {
        throw Error(ErrorKind::DimensionMismatch, "cannot project an empty vector");
    }
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        cumulative += u[j];
        const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) {
            theta = candidate;
        }
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = std::max(v[i] - theta, 0.0);
    }
    return MixingRatio::normalized(std::move(w));
}

MixingRatio sample_dirichlet_uniform(std::size_t dim, rng::Stream& stream) {
    if (dim == 0) {
        throw Error(ErrorKind::DimensionMismatch, "cannot sample a zero-dimensional ratio");
    }
    std::vector<double> w(dim);
    double total = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        w[i] = stream.exponential();
        total += w[i];
    }
    if (total <= 0.0) {
        return MixingRatio::uniform(dim);
    }
    return MixingRatio::normalized(std::move(w));
}

double lcb_value(const gp::GPState& state, const MixingRatio& r, double beta) {
    if (!std::isfinite(beta)) {
        throw Error(ErrorKind::ConfigInvalid, "acquisition beta must be finite");
    }
    const gp::Posterior p = state.posterior(r);
    return p.mean - beta * p.stddev;
}

MixingRatio propose_ratio(const gp::GPState& state, std::size_t dim, const AcquireConfig& cfg,
                          std::uint64_t rng_seed) {
    check_config(cfg);
    if (dim == 0) {
        throw Error(ErrorKind::ConfigInvalid, "need at least one domain");
    }
    if (!state.inputs().empty() && state.inputs().front().size() != dim) {
        throw Error(ErrorKind::DimensionMismatch, "state dimension does not match requested dimension");
    }

    rng::Stream stream(rng_seed);
    std::vector<MixingRatio> candidates;
    candidates.reserve(cfg.n_candidates + state.size() + 1);
    for (std::size_t j = 0; j < cfg.n_candidates; ++j) {
        candidates.push_back(sample_dirichlet_uniform(dim, stream));
    }
    for (const auto& observed : state.inputs()) {
        candidates.push_back(observed);
    }
    candidates.push_back(MixingRatio::uniform(dim));

    std::vector<double> means;
    std::vector<double> stddevs;
    state.posterior_batch(candidates, means, stddevs);

    std::size_t best_idx = 0;
    double best_score = means[0] - cfg.beta * stddevs[0];
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double score = means[i] - cfg.beta * stddevs[i];
        if (improves(score, candidates[i], best_score, candidates[best_idx])) {
            best_idx = i;
            best_score = score;
        }
    }
    MixingRatio best = candidates[best_idx];

    // Coordinatewise polish around the winner: try +/- step on each axis,
    // project back onto the simplex, keep strictly improving moves, and decay
    // the step each round.
    double step = cfg.refine_step_size;
    std::vector<MixingRatio> moves;
    for (std::size_t s = 0; s < cfg.n_refine_steps; ++s) {
        moves.clear();
        for (std::size_t i = 0; i < dim; ++i) {
            for (double direction : {step, -step}) {
                std::vector<double> w = best.weights();
                w[i] += direction;
                moves.push_back(project_to_simplex(w));
            }
        }
        state.posterior_batch(moves, means, stddevs);
        bool moved = false;
        for (std::size_t i = 0; i < moves.size(); ++i) {
            const double score = means[i] - cfg.beta * stddevs[i];
            if (score < best_score || (score == best_score && moved && moves[i].lex_less(best))) {
                best = moves[i];
                best_score = score;
                moved = true;
            }
        }
        step *= 0.7;
    }
    return best;
}

}  // namespace mixopt::acquire
