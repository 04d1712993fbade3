#pragma once

#include <cstdint>
#include <vector>

#include "mixopt/gp.hpp"
#include "mixopt/rng.hpp"
#include "mixopt/types.hpp"

namespace mixopt::acquire {

// Euclidean projection onto the probability simplex (sort-based).
MixingRatio project_to_simplex(const std::vector<double>& v);

// Symmetric Dirichlet(1) draws, i.e. uniform over the simplex.
MixingRatio sample_dirichlet_uniform(std::size_t dim, rng::Stream& stream);

// mu(r) - beta * sigma(r)
double lcb_value(const gp::GPState& state, const MixingRatio& r, double beta);

// Minimize the LCB over the simplex: score Dirichlet candidates plus the
// observed ratios plus the uniform point, then refine the winner
// coordinatewise with a decaying step. Deterministic given (state, cfg, seed).
MixingRatio propose_ratio(const gp::GPState& state, std::size_t dim, const AcquireConfig& cfg,
                          std::uint64_t rng_seed);

}  // namespace mixopt::acquire
