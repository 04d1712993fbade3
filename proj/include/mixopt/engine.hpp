#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <vector>

#include "mixopt/estimator.hpp"
#include "mixopt/evaluate.hpp"
#include "mixopt/gp.hpp"
#include "mixopt/types.hpp"

namespace mixopt::engine {

struct BestRecord {
    double loss = 0.0;
    MixtureManifest manifest;
    std::int64_t iteration = 0;
};

// Everything one optimization run carries between iterations. States are
// value types: step() returns a new state and leaves its input untouched, so
// a failed step cannot corrupt the run.
struct RunState {
    RunConfig config;
    gp::GPState surrogate;
    std::vector<Observation> history;
    BestRecord best;
    std::uint64_t rng_root_seed = 0;

    std::int64_t next_iteration() const {
        return history.empty() ? 0 : history.back().iteration + 1;
    }
};

// Streams a run to disk as it happens: config.json up front, one observation
// line per iteration, per-sample manifests, and the surrogate checkpoint plus
// result.json at the end. Partial output is intentionally preserved when a
// run aborts.
class RunWriter {
  public:
    explicit RunWriter(std::filesystem::path dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }

    void write_config(const RunConfig& config, const json& extra);
    void append_observation(const Observation& obs);
    // manifest file carries the raw (un-negated) feedback so replays can
    // rebuild a digest -> loss table
    void write_sample(std::int64_t iteration, std::size_t sample_index,
                      const MixtureManifest& manifest, double raw_loss);
    void write_checkpoint(const gp::GPState& state);
    void write_result(const RunState& state);

  private:
    std::filesystem::path dir_;
    std::ofstream observations_;
};

// Evaluate the uniform ratio once to seed the surrogate (iteration 0).
RunState init_run(const RunConfig& config, const std::vector<DomainDataset>& domains,
                  const evaluate::EvaluatorHandle& evaluator, RunWriter* writer = nullptr);

// One outer iteration: refit the lengthscale (once two observations exist),
// propose a ratio, estimate the inner optimum, append the observation.
RunState step(const RunState& state, const std::vector<DomainDataset>& domains,
              const evaluate::EvaluatorHandle& evaluator, RunWriter* writer = nullptr);

// init_run plus config.iterations steps; one progress line per iteration on
// `log` when given.
RunState run_to_completion(const RunConfig& config, const std::vector<DomainDataset>& domains,
                           const evaluate::EvaluatorHandle& evaluator,
                           RunWriter* writer = nullptr, std::ostream* log = nullptr);

}  // namespace mixopt::engine
