#pragma once

#include <cstdint>
#include <vector>

#include "mixopt/evaluate.hpp"
#include "mixopt/ifweights.hpp"
#include "mixopt/types.hpp"

namespace mixopt::estimator {

// Min of k losses over k sampled mixtures at one ratio.
struct EstimateResult {
    double value = 0.0;             // min of all_losses
    MixtureManifest best_manifest;  // manifest at the argmin
    std::vector<double> all_losses;
    std::vector<std::string> all_digests;
    std::vector<MixtureManifest> all_manifests;
};

// Sampling weights for every domain under the given estimator variant:
// uniform, influence-proportional, or uniform over the domain with its lowest
// 20% of points (by influence) removed.
std::vector<ifweights::NormalizedWeights> weights_for_estimator(
    const std::vector<DomainDataset>& domains, EstimatorKind kind);

// One concrete mixture: largest-remainder per-domain counts, then weighted
// draws within each domain. Domain d draws from a seed derived as
// (seed, domain-tag, d) so concurrency cannot reorder randomness.
MixtureManifest build_manifest(const MixingRatio& ratio, std::size_t total_size,
                               const std::vector<DomainDataset>& domains,
                               const std::vector<ifweights::NormalizedWeights>& weights_per_domain,
                               bool with_replacement, std::uint64_t rng_seed);

// Draw cfg.sampling_size mixtures at the ratio, evaluate each, return the
// min. All manifests are materialized before any evaluation; one failed
// evaluation fails the whole estimate (a partial min would bias the value).
// When cfg.maximize is set the feedback is negated here, so callers always
// minimize.
EstimateResult estimate_inner(const MixingRatio& ratio, const std::vector<DomainDataset>& domains,
                              const RunConfig& cfg, const evaluate::EvaluatorHandle& evaluator,
                              std::int64_t iteration, std::uint64_t rng_seed);

}  // namespace mixopt::estimator
