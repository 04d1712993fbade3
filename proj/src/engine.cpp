#include "mixopt/engine.hpp"

#include <utility>

#include "mixopt/acquire.hpp"
#include "mixopt/error.hpp"
#include "mixopt/rng.hpp"

namespace mixopt::engine {

namespace {

void write_samples(RunWriter* writer, const RunConfig& config, std::int64_t iteration,
                   const estimator::EstimateResult& est) {
    if (!writer) {
        return;
    }
    for (std::size_t j = 0; j < est.all_manifests.size(); ++j) {
        const double raw = config.maximize ? -est.all_losses[j] : est.all_losses[j];
        writer->write_sample(iteration, j, est.all_manifests[j], raw);
    }
}

void log_line(std::ostream* log, const RunState& state) {
    if (!log) {
        return;
    }
    const Observation& obs = state.history.back();
    *log << "t=" << obs.iteration << " loss=" << obs.loss << " best=" << state.best.loss
         << " ratio=[";
    const auto& w = obs.ratio.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        *log << (i ? "," : "") << w[i];
    }
    *log << "]\n";
}

}  // namespace

RunWriter::RunWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_ / "manifests", ec);
    if (ec) {
        throw Error(ErrorKind::ConfigInvalid,
                    "cannot create run directory " + dir_.string() + ": " + ec.message());
    }
    observations_.open(dir_ / "observations.jsonl", std::ios::trunc);
    if (!observations_) {
        throw Error(ErrorKind::ConfigInvalid,
                    "cannot open " + (dir_ / "observations.jsonl").string() + " for writing");
    }
}

void RunWriter::write_config(const RunConfig& config, const json& extra) {
    json j = extra;
    j["run"] = config;
    std::ofstream out(dir_ / "config.json");
    out << j.dump(2) << "\n";
    if (!out) {
        throw Error(ErrorKind::ConfigInvalid, "cannot write " + (dir_ / "config.json").string());
    }
}

void RunWriter::append_observation(const Observation& obs) {
    observations_ << observation_line(obs) << "\n";
    observations_.flush();
    if (!observations_) {
        throw Error(ErrorKind::ConfigInvalid,
                    "write to " + (dir_ / "observations.jsonl").string() + " failed");
    }
}

void RunWriter::write_sample(std::int64_t iteration, std::size_t sample_index,
                             const MixtureManifest& manifest, double raw_loss) {
    json j;
    to_json(j["manifest"], manifest);
    j["digest"] = manifest.digest();
    j["iteration"] = iteration;
    j["sample_index"] = sample_index;
    j["loss"] = raw_loss;
    const std::filesystem::path path =
        dir_ / "manifests" /
        (std::to_string(iteration) + "_" + std::to_string(sample_index) + ".json");
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) {
        throw Error(ErrorKind::ConfigInvalid, "cannot write " + path.string());
    }
}

void RunWriter::write_checkpoint(const gp::GPState& state) {
    std::ofstream out(dir_ / "gp_checkpoint.json");
    out << state.checkpoint().dump(2) << "\n";
    if (!out) {
        throw Error(ErrorKind::ConfigInvalid,
                    "cannot write " + (dir_ / "gp_checkpoint.json").string());
    }
}

void RunWriter::write_result(const RunState& state) {
    const bool maximize = state.config.maximize;
    json j;
    j["best_loss"] = state.best.loss;
    j["best_feedback"] = maximize ? -state.best.loss : state.best.loss;
    j["best_iteration"] = state.best.iteration;
    j["best_manifest_digest"] = state.best.manifest.digest();
    j["best_ratio"] = state.best.manifest.target_ratio.weights();
    j["iterations_completed"] =
        state.history.empty() ? 0 : static_cast<std::int64_t>(state.history.size()) - 1;
    j["estimator"] = to_string(state.config.estimator_kind);
    std::ofstream out(dir_ / "result.json");
    out << j.dump(2) << "\n";
    if (!out) {
        throw Error(ErrorKind::ConfigInvalid, "cannot write " + (dir_ / "result.json").string());
    }
}

RunState init_run(const RunConfig& config, const std::vector<DomainDataset>& domains,
                  const evaluate::EvaluatorHandle& evaluator, RunWriter* writer) {
    config.validate();
    if (domains.size() != config.n_domains) {
        throw Error(ErrorKind::ConfigInvalid,
                    "config names " + std::to_string(config.n_domains) + " domains but " +
                        std::to_string(domains.size()) + " were loaded");
    }
    RunState state;
    state.config = config;
    state.rng_root_seed = static_cast<std::uint64_t>(config.seed);

    const MixingRatio uniform = MixingRatio::uniform(config.n_domains);
    const std::uint64_t est_seed =
        rng::derive(state.rng_root_seed, 0, rng::tags::kEstimate);
    const estimator::EstimateResult est =
        estimator::estimate_inner(uniform, domains, config, evaluator, 0, est_seed);

    Observation obs;
    obs.ratio = uniform;
    obs.loss = est.value;
    obs.iteration = 0;
    obs.manifest_digest = est.best_manifest.digest();

    state.history.push_back(obs);
    state.surrogate = gp::GPState::make({uniform}, {est.value}, config.zeta);
    state.best = BestRecord{est.value, est.best_manifest, 0};

    write_samples(writer, config, 0, est);
    if (writer) {
        writer->append_observation(obs);
    }
    return state;
}

RunState step(const RunState& state, const std::vector<DomainDataset>& domains,
              const evaluate::EvaluatorHandle& evaluator, RunWriter* writer) {
    const std::int64_t t = state.next_iteration();
    if (state.history.empty()) {
        throw Error(ErrorKind::InsufficientData, "step requires an initialized run");
    }
    if (t > static_cast<std::int64_t>(state.config.iterations)) {
        throw Error(ErrorKind::ConfigInvalid, "all configured iterations already ran");
    }

    // refit the lengthscale from history once there is enough data
    gp::GPState surrogate = state.surrogate;
    if (state.history.size() >= 2) {
        std::vector<MixingRatio> inputs;
        std::vector<double> targets;
        inputs.reserve(state.history.size());
        targets.reserve(state.history.size());
        for (const Observation& obs : state.history) {
            inputs.push_back(obs.ratio);
            targets.push_back(obs.loss);
        }
        surrogate = gp::GPState::fit(std::move(inputs), std::move(targets), state.config.zeta,
                                     gp::default_lengthscale_grid());
    }

    AcquireConfig acq = state.config.acquire;
    acq.beta = state.config.beta;
    const MixingRatio ratio = acquire::propose_ratio(
        surrogate, state.config.n_domains, acq,
        rng::derive(state.rng_root_seed, static_cast<std::uint64_t>(t), rng::tags::kAcquire));

    const estimator::EstimateResult est = estimator::estimate_inner(
        ratio, domains, state.config, evaluator, t,
        rng::derive(state.rng_root_seed, static_cast<std::uint64_t>(t), rng::tags::kEstimate));

    Observation obs;
    obs.ratio = ratio;
    obs.loss = est.value;
    obs.iteration = t;
    obs.manifest_digest = est.best_manifest.digest();

    RunState next = state;
    next.surrogate = surrogate.append(ratio, est.value);
    next.history.push_back(obs);
    if (est.value < next.best.loss) {
        next.best = BestRecord{est.value, est.best_manifest, t};
    }

    write_samples(writer, state.config, t, est);
    if (writer) {
        writer->append_observation(obs);
    }
    return next;
}

RunState run_to_completion(const RunConfig& config, const std::vector<DomainDataset>& domains,
                           const evaluate::EvaluatorHandle& evaluator, RunWriter* writer,
                           std::ostream* log) {
    RunState state = init_run(config, domains, evaluator, writer);
    log_line(log, state);
    for (std::size_t t = 1; t <= config.iterations; ++t) {
        state = step(state, domains, evaluator, writer);
        log_line(log, state);
    }
    if (writer) {
        writer->write_checkpoint(state.surrogate);
        writer->write_result(state);
    }
    return state;
}

}  // namespace mixopt::engine
