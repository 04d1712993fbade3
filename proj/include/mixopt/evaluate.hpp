#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixopt/truncexp.hpp"
#include "mixopt/types.hpp"

namespace mixopt::evaluate {

enum class EvaluatorKind { SyntheticQuadratic, SyntheticTruncexp, TableLookup, ExternalProcess };

const char* to_string(EvaluatorKind kind);

// Analytic stand-in for "train on the mixture and measure feedback":
// base_loss + curvature * ||ratio - optimum_ratio||^2
//           + quality_sensitivity * (1 - mean normalized influence of the
//             selected points)
//           + one truncated-exponential noise draw when noise is set.
// Influence is normalized to [0, 1] within each domain, so picking
// high-influence points lowers the loss; that is the hook that makes
// influence-weighted sampling measurably better than uniform.
struct SyntheticTask {
    MixingRatio optimum_ratio = MixingRatio::uniform(1);
    double base_loss = 0.0;
    double curvature = 1.0;
    std::optional<truncexp::TruncExpParams> noise;  // k is ignored here
    double quality_sensitivity = 0.0;

    void validate() const;
};

struct ExternalProcessConfig {
    std::vector<std::string> command;  // argv, command[0] resolved via PATH
    double timeout_seconds = 21600.0;  // six hours
    std::filesystem::path manifest_dir;  // empty: unique dir under the system temp dir
};

// Black-box loss source. Synthetic kinds are pure functions of
// (manifest, seed); the external kind talks line-delimited JSON with a child
// process and serializes its requests.
class EvaluatorHandle {
  public:
    static EvaluatorHandle synthetic_quadratic(SyntheticTask task,
                                               std::vector<DomainDataset> domains);
    static EvaluatorHandle synthetic_truncexp(double base_loss, truncexp::TruncExpParams noise);
    static EvaluatorHandle table_lookup(std::unordered_map<std::string, double> losses_by_digest);
    static EvaluatorHandle table_lookup_csv(const std::string& path);
    static EvaluatorHandle external_process(ExternalProcessConfig config);
    static EvaluatorHandle external_process(ExternalProcessConfig config,
                                            const std::vector<DomainDataset>& domains);

    // config JSON (see README for the schemas); relative paths resolve
    // against base_dir
    static EvaluatorHandle from_config(const json& j, const std::vector<DomainDataset>& domains,
                                       const std::filesystem::path& base_dir);

    EvaluatorKind kind() const;
    bool supports_concurrency() const;

    // f(r*) when the task knows its own optimum (synthetic kinds only)
    std::optional<double> true_optimum() const;

    // Raw feedback for one mixture; throws instead of fabricating a loss.
    double evaluate(const MixtureManifest& manifest, std::int64_t iteration,
                    std::int64_t sample_index, std::uint64_t seed) const;

    struct Impl;

  private:
    explicit EvaluatorHandle(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<Impl> impl_;
};

double evaluate_manifest(const EvaluatorHandle& handle, const MixtureManifest& manifest,
                         std::int64_t iteration, std::int64_t sample_index, std::uint64_t seed);

}  // namespace mixopt::evaluate
