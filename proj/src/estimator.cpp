#include "mixopt/estimator.hpp"

#include <algorithm>
#include <utility>

#include "mixopt/error.hpp"
#include "mixopt/rng.hpp"

namespace mixopt::estimator {

namespace {
constexpr double kHarmfulDropFraction = 0.2;
}

std::vector<ifweights::NormalizedWeights> weights_for_estimator(
    const std::vector<DomainDataset>& domains, EstimatorKind kind) {
    std::vector<ifweights::NormalizedWeights> weights;
    weights.reserve(domains.size());
    for (const auto& domain : domains) {
        switch (kind) {
            case EstimatorKind::UniformRandom:
                weights.push_back(ifweights::uniform_weights(domain));
                break;
            case EstimatorKind::IfDriven:
                weights.push_back(ifweights::normalize_weights(domain));
                break;
            case EstimatorKind::RemoveHarmful:
                weights.push_back(ifweights::filtered_uniform_weights(domain, kHarmfulDropFraction));
                break;
        }
    }
    return weights;
}

MixtureManifest build_manifest(const MixingRatio& ratio, std::size_t total_size,
                               const std::vector<DomainDataset>& domains,
                               const std::vector<ifweights::NormalizedWeights>& weights_per_domain,
                               bool with_replacement, std::uint64_t rng_seed) {
    if (ratio.size() != domains.size() || weights_per_domain.size() != domains.size()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "ratio, domains, and weights must have matching lengths");
    }
    if (total_size == 0) {
        throw Error(ErrorKind::ConfigInvalid, "mixture size must be positive");
    }
    const std::vector<std::size_t> counts = apportion_largest_remainder(ratio, total_size);
    MixtureManifest manifest;
    manifest.target_ratio = ratio;
    manifest.total_size = total_size;
    manifest.with_replacement = with_replacement;
    manifest.selections.reserve(domains.size());
    for (std::size_t d = 0; d < domains.size(); ++d) {
        DomainSelection selection;
        selection.domain = domains[d].name();
        selection.point_ids = ifweights::sample_domain(
            weights_per_domain[d], counts[d], with_replacement,
            rng::derive(rng_seed, rng::tags::kDomain, static_cast<std::uint64_t>(d)));
        manifest.selections.push_back(std::move(selection));
    }
    validate_manifest(manifest, domains);
    return manifest;
}

EstimateResult estimate_inner(const MixingRatio& ratio, const std::vector<DomainDataset>& domains,
                              const RunConfig& cfg, const evaluate::EvaluatorHandle& evaluator,
                              std::int64_t iteration, std::uint64_t rng_seed) {
    if (ratio.size() != domains.size()) {
        throw Error(ErrorKind::DimensionMismatch, "ratio dimension does not match domain count");
    }
    const std::size_t k = cfg.sampling_size;
    const auto weights = weights_for_estimator(domains, cfg.estimator_kind);

    // materialize all k mixtures before evaluating any of them
    EstimateResult result;
    result.all_manifests.reserve(k);
    result.all_digests.reserve(k);
    std::vector<std::uint64_t> sample_seeds(k);
    for (std::size_t j = 0; j < k; ++j) {
        sample_seeds[j] = rng::derive(rng_seed, static_cast<std::uint64_t>(j));
        result.all_manifests.push_back(build_manifest(ratio, cfg.mixture_size, domains, weights,
                                                      cfg.with_replacement, sample_seeds[j]));
        result.all_digests.push_back(result.all_manifests.back().digest());
    }

    result.all_losses.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        double raw = 0.0;
        try {
            raw = evaluator.evaluate(result.all_manifests[j], iteration,
                                     static_cast<std::int64_t>(j),
                                     rng::derive(sample_seeds[j], rng::tags::kNoise));
        } catch (const Error& e) {
            throw Error(ErrorKind::EvaluatorFailure,
                        "sample " + std::to_string(j) + " of " + std::to_string(k) +
                            " failed: " + e.what());
        }
        result.all_losses.push_back(cfg.maximize ? -raw : raw);
    }

    const auto argmin = static_cast<std::size_t>(
        std::min_element(result.all_losses.begin(), result.all_losses.end()) -
        result.all_losses.begin());
    result.value = result.all_losses[argmin];
    result.best_manifest = result.all_manifests[argmin];
    return result;
}

}  // namespace mixopt::estimator
