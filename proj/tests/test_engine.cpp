#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "mixopt/engine.hpp"
#include "mixopt/regret.hpp"
#include "mixopt/rng.hpp"

using namespace mixopt;
using namespace mixopt::engine;

namespace {

namespace fs = std::filesystem;

DomainDataset domain_with(const std::string& name, const std::vector<double>& influences) {
    std::vector<DomainPoint> points;
    for (std::size_t i = 0; i < influences.size(); ++i) {
        points.push_back({name + "-" + std::to_string(i), influences[i], {}});
    }
    return DomainDataset(name, std::move(points));
}

std::vector<DomainDataset> spread_domains(std::size_t per_domain) {
    std::vector<DomainDataset> out;
    for (const std::string name : {"a", "b"}) {
        std::vector<double> infl;
        rng::Stream stream(rng::derive(0xD0D0, static_cast<std::uint64_t>(name[0])));
        for (std::size_t i = 0; i < per_domain; ++i) infl.push_back(stream.uniform());
        out.push_back(domain_with(name, infl));
    }
    return out;
}

RunConfig engine_config() {
    RunConfig cfg;
    cfg.n_domains = 2;
    cfg.mixture_size = 20;
    cfg.sampling_size = 1;
    cfg.iterations = 6;
    cfg.seed = 5;
    cfg.acquire.n_candidates = 256;  // keep unit runs quick
    return cfg;
}

evaluate::EvaluatorHandle clean_quadratic(const std::vector<DomainDataset>& domains,
                                          const MixingRatio& optimum, double base = 1.0) {
    evaluate::SyntheticTask task;
    task.optimum_ratio = optimum;
    task.base_loss = base;
    task.curvature = 2.0;
    return evaluate::EvaluatorHandle::synthetic_quadratic(task, domains);
}

}  // namespace

TEST_CASE("initialization evaluates the uniform ratio as iteration zero") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::normalized({0.3, 0.7}));
    const auto state = init_run(engine_config(), domains, eval);

    REQUIRE(state.history.size() == 1);
    CHECK(state.history[0].iteration == 0);
    CHECK(state.history[0].ratio == MixingRatio::uniform(2));
    CHECK(state.surrogate.size() == 1);
    CHECK(state.best.loss == state.history[0].loss);
    CHECK(state.best.iteration == 0);
    CHECK(state.next_iteration() == 1);
}

TEST_CASE("initialization cross-checks config and domains") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::uniform(2));
    auto cfg = engine_config();
    cfg.n_domains = 3;
    CHECK_THROWS_AS(init_run(cfg, domains, eval), Error);
    cfg = engine_config();
    cfg.mixture_size = 0;
    CHECK_THROWS_AS(init_run(cfg, domains, eval), Error);
}

TEST_CASE("each step appends exactly one observation and tracks the best") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::normalized({0.6, 0.4}));
    auto state = init_run(engine_config(), domains, eval);
    for (int t = 1; t <= 3; ++t) {
        state = step(state, domains, eval);
        CHECK(state.history.size() == static_cast<std::size_t>(t) + 1);
        CHECK(state.history.back().iteration == t);
        CHECK(state.surrogate.size() == state.history.size());
        double best = state.history[0].loss;
        for (const auto& obs : state.history) best = std::min(best, obs.loss);
        CHECK(state.best.loss == best);
    }
}

TEST_CASE("steps are transactional: a failing evaluator leaves the state usable") {
    const auto domains = spread_domains(30);
    const auto good = clean_quadratic(domains, MixingRatio::uniform(2));
    const auto broken = evaluate::EvaluatorHandle::table_lookup({{"0000000000000000", 1.0}});

    const auto state = init_run(engine_config(), domains, good);
    const auto snapshot_size = state.history.size();
    CHECK_THROWS_AS(step(state, domains, broken), Error);
    CHECK(state.history.size() == snapshot_size);

    const auto next = step(state, domains, good);
    CHECK(next.history.size() == snapshot_size + 1);
}

TEST_CASE("a finished run refuses extra steps") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::uniform(2));
    auto cfg = engine_config();
    cfg.iterations = 2;
    auto state = run_to_completion(cfg, domains, eval);
    CHECK(state.history.size() == 3);
    CHECK_THROWS_AS(step(state, domains, eval), Error);
}

TEST_CASE("zero-iteration runs stop after the uniform evaluation") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::uniform(2));
    auto cfg = engine_config();
    cfg.iterations = 0;
    const auto state = run_to_completion(cfg, domains, eval);
    CHECK(state.history.size() == 1);
    CHECK(state.best.iteration == 0);
}

TEST_CASE("identical configs give byte-identical histories") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::normalized({0.25, 0.75}));
    const auto a = run_to_completion(engine_config(), domains, eval);
    const auto b = run_to_completion(engine_config(), domains, eval);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i] == b.history[i]);
    }
    CHECK(a.best.manifest.digest() == b.best.manifest.digest());

    auto other = engine_config();
    other.seed = 6;
    const auto c = run_to_completion(other, domains, eval);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.history.size() && i < c.history.size(); ++i) {
        any_diff = any_diff || !(a.history[i] == c.history[i]);
    }
    CHECK(any_diff);
}

TEST_CASE("the optimizer closes in on a clean quadratic optimum") {
    const auto domains = spread_domains(60);
    const auto optimum = MixingRatio::normalized({0.3, 0.7});
    const auto eval = clean_quadratic(domains, optimum, 0.0);
    auto cfg = engine_config();
    cfg.iterations = 25;
    cfg.mixture_size = 40;
    cfg.seed = 11;
    cfg.acquire.n_candidates = 1024;

    const auto state = run_to_completion(cfg, domains, eval);
    CHECK(state.best.manifest.target_ratio.linf_distance(optimum) < 0.15);
    CHECK(state.best.loss < state.history[0].loss);
}

TEST_CASE("maximize runs track the largest raw feedback") {
    const auto domains = spread_domains(30);
    evaluate::SyntheticTask task;
    task.optimum_ratio = MixingRatio::normalized({0.5, 0.5});
    task.base_loss = 3.0;
    task.quality_sensitivity = 0.6;
    const auto eval = evaluate::EvaluatorHandle::synthetic_quadratic(task, domains);

    auto cfg = engine_config();
    cfg.maximize = true;
    cfg.iterations = 4;
    const auto state = run_to_completion(cfg, domains, eval);

    // internal losses are negated raw feedback; best is the max raw value
    for (const auto& obs : state.history) {
        CHECK(obs.loss <= 0.0);  // raw quadratic feedback is always positive
    }
    const double raw_best = evaluate::evaluate_manifest(eval, state.best.manifest,
                                                        state.best.iteration, 0, 0);
    CHECK(raw_best == doctest::Approx(-state.best.loss));
    for (const auto& obs : state.history) {
        CHECK(-obs.loss <= raw_best + 1e-12);
    }
}

TEST_CASE("a run writer lays out the full directory") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::normalized({0.4, 0.6}));
    const fs::path dir = fs::temp_directory_path() / "mixopt_test_rundir";
    fs::remove_all(dir);

    auto cfg = engine_config();
    cfg.iterations = 3;
    cfg.sampling_size = 2;
    {
        RunWriter writer(dir);
        json extra;
        extra["evaluator"] = {{"kind", "synthetic_quadratic"}};
        writer.write_config(cfg, extra);
        run_to_completion(cfg, domains, eval, &writer);
    }

    const json config = json::parse(std::ifstream(dir / "config.json"));
    CHECK(config.at("run").get<RunConfig>() == cfg);
    CHECK(config.at("evaluator").at("kind") == "synthetic_quadratic");

    const auto log = read_observation_log((dir / "observations.jsonl").string());
    CHECK(log.size() == 4);

    // two manifests per iteration, raw loss stored alongside each
    for (int t = 0; t <= 3; ++t) {
        for (int j = 0; j < 2; ++j) {
            const fs::path p =
                dir / "manifests" / (std::to_string(t) + "_" + std::to_string(j) + ".json");
            REQUIRE_MESSAGE(fs::exists(p), p.string());
            const json sample = json::parse(std::ifstream(p));
            CHECK(sample.at("digest").get<std::string>().size() == 16);
            CHECK(sample.at("iteration") == t);
            CHECK(std::isfinite(sample.at("loss").get<double>()));
        }
    }

    const json result = json::parse(std::ifstream(dir / "result.json"));
    CHECK(result.at("iterations_completed") == 3);
    CHECK(result.at("best_loss").get<double>() <= log[0].loss);
    CHECK(result.at("best_manifest_digest").get<std::string>().size() == 16);

    const auto restored = gp::GPState::from_checkpoint(
        json::parse(std::ifstream(dir / "gp_checkpoint.json")));
    CHECK(restored.size() == 4);
    fs::remove_all(dir);
}

TEST_CASE("a run resumed from its checkpoint steps identically") {
    const auto domains = spread_domains(30);
    const auto eval = clean_quadratic(domains, MixingRatio::normalized({0.55, 0.45}));
    auto cfg = engine_config();
    cfg.iterations = 8;

    auto state = init_run(cfg, domains, eval);
    for (int t = 0; t < 4; ++t) state = step(state, domains, eval);

    RunState resumed;
    resumed.config = state.config;
    resumed.surrogate = gp::GPState::from_checkpoint(state.surrogate.checkpoint());
    resumed.history = state.history;
    resumed.best = state.best;
    resumed.rng_root_seed = state.rng_root_seed;

    const auto next_a = step(state, domains, eval);
    const auto next_b = step(resumed, domains, eval);
    CHECK(next_a.history.back() == next_b.history.back());
    CHECK(next_a.best.loss == next_b.best.loss);
}

TEST_CASE("regret against the known optimum shrinks over a long run") {
    const auto domains = spread_domains(60);
    const auto eval = clean_quadratic(domains, MixingRatio::normalized({0.35, 0.65}), 2.0);
    auto cfg = engine_config();
    cfg.iterations = 30;
    cfg.mixture_size = 40;
    const auto state = run_to_completion(cfg, domains, eval);

    const auto trace = regret::compute_trace(state.history, *eval.true_optimum());
    CHECK(trace.average.back() < trace.average[1]);
}
