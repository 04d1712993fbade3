#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "mixopt/evaluate.hpp"
#include "mixopt/validation.hpp"

using namespace mixopt;
using namespace mixopt::evaluate;

namespace {

namespace fs = std::filesystem;

DomainDataset domain_with(const std::string& name, const std::vector<double>& influences) {
    std::vector<DomainPoint> points;
    for (std::size_t i = 0; i < influences.size(); ++i) {
        points.push_back({name + "-" + std::to_string(i), influences[i], {}});
    }
    return DomainDataset(name, std::move(points));
}

MixtureManifest manifest_of(const std::vector<DomainSelection>& selections,
                            const MixingRatio& target) {
    MixtureManifest m;
    m.selections = selections;
    m.target_ratio = target;
    for (const auto& sel : selections) m.total_size += sel.point_ids.size();
    return m;
}

EvaluatorHandle helper_evaluator(const std::string& script, double timeout_seconds,
                                 const std::vector<DomainDataset>& domains,
                                 const fs::path& manifest_dir) {
    ExternalProcessConfig config;
    config.command = {"python3", std::string(MIXOPT_HELPER_DIR) + "/" + script};
    config.timeout_seconds = timeout_seconds;
    config.manifest_dir = manifest_dir;
    return EvaluatorHandle::external_process(std::move(config), domains);
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected a throw");
    return ErrorKind::ConfigInvalid;
}

}  // namespace

TEST_CASE("synthetic task validation") {
    SyntheticTask task;
    task.optimum_ratio = MixingRatio::uniform(2);
    CHECK_NOTHROW(task.validate());

    SyntheticTask bad = task;
    bad.curvature = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = task;
    bad.quality_sensitivity = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = task;
    bad.quality_sensitivity = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = task;
    bad.noise = truncexp::TruncExpParams{1.0, 2.0, 1};  // cutoff above 1 drowns the signal
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = task;
    bad.noise = truncexp::TruncExpParams{1.0, 0.5, 1};
    CHECK_NOTHROW(bad.validate());
}

TEST_CASE("quadratic evaluator reproduces its closed form on the realized ratio") {
    const std::vector<DomainDataset> domains = {domain_with("a", {1.0, 1.0, 1.0}),
                                                domain_with("b", {2.0, 2.0, 2.0})};
    SyntheticTask task;
    task.optimum_ratio = MixingRatio::normalized({0.5, 0.5});
    task.base_loss = 0.2;
    task.curvature = 2.0;
    const auto eval = EvaluatorHandle::synthetic_quadratic(task, domains);
    CHECK(eval.true_optimum() == std::optional<double>(0.2));

    SUBCASE("at the optimum the loss is the base loss") {
        const auto m = manifest_of({{"a", {"a-0", "a-1"}}, {"b", {"b-0", "b-1"}}},
                                   task.optimum_ratio);
        CHECK(eval.evaluate(m, 0, 0, 1) == doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("curvature scales the squared distance of the realized counts") {
        // realized ratio {0.75, 0.25}: squared distance 2 * 0.25^2 = 0.125
        const auto m = manifest_of({{"a", {"a-0", "a-1", "a-2"}}, {"b", {"b-0"}}},
                                   task.optimum_ratio);
        CHECK(eval.evaluate(m, 0, 0, 1) == doctest::Approx(0.2 + 2.0 * 0.125).epsilon(1e-12));
    }
    SUBCASE("unknown domain fails loudly") {
        const auto m = manifest_of({{"a", {"a-0"}}, {"zz", {"zz-0"}}}, task.optimum_ratio);
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::EvaluatorFailure);
    }
}

TEST_CASE("quality term rewards high-influence selections") {
    const std::vector<DomainDataset> domains = {domain_with("a", {0.0, 1.0, 2.0})};
    SyntheticTask task;
    task.optimum_ratio = MixingRatio::uniform(1);
    task.quality_sensitivity = 0.4;
    const auto eval = EvaluatorHandle::synthetic_quadratic(task, domains);

    const auto best = manifest_of({{"a", {"a-2"}}}, MixingRatio::uniform(1));
    const auto worst = manifest_of({{"a", {"a-0"}}}, MixingRatio::uniform(1));
    const auto mid = manifest_of({{"a", {"a-1"}}}, MixingRatio::uniform(1));

    // normalized influences are 0, 1/2, 1, so the penalty is qs * (1 - score)
    CHECK(eval.evaluate(best, 0, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(eval.evaluate(worst, 0, 0, 1) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(eval.evaluate(mid, 0, 0, 1) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("constant-influence domains carry no quality signal") {
    const std::vector<DomainDataset> domains = {domain_with("flat", {3.0, 3.0, 3.0})};
    SyntheticTask task;
    task.optimum_ratio = MixingRatio::uniform(1);
    task.base_loss = 1.0;
    task.quality_sensitivity = 0.9;
    const auto eval = EvaluatorHandle::synthetic_quadratic(task, domains);
    const auto m = manifest_of({{"flat", {"flat-0", "flat-2"}}}, MixingRatio::uniform(1));
    CHECK(eval.evaluate(m, 0, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("noise draws are seed-deterministic, bounded, and law-abiding") {
    const std::vector<DomainDataset> domains = {domain_with("a", {1.0, 1.0})};
    SyntheticTask task;
    task.optimum_ratio = MixingRatio::uniform(1);
    task.noise = truncexp::TruncExpParams{2.0, 0.5, 1};
    const auto eval = EvaluatorHandle::synthetic_quadratic(task, domains);
    const auto m = manifest_of({{"a", {"a-0"}}}, MixingRatio::uniform(1));

    CHECK(eval.evaluate(m, 3, 1, 77) == eval.evaluate(m, 3, 1, 77));
    CHECK(eval.evaluate(m, 3, 1, 77) != eval.evaluate(m, 3, 1, 78));

    std::vector<double> draws;
    for (int i = 0; i < 4000; ++i) {
        const double loss = eval.evaluate(m, 0, 0, static_cast<std::uint64_t>(9000 + i));
        CHECK(loss >= 0.0);
        CHECK(loss <= 0.5);
        draws.push_back(loss);
    }
    const truncexp::TruncExpParams law{2.0, 0.5, 1};
    const double d = validation::ks_statistic(
        draws, [&](double u) { return truncexp::order_stat_cdf(u, law); });
    CHECK(validation::ks_pvalue(d, draws.size()) > 0.001);
}

TEST_CASE("truncated-exponential evaluator is base plus one draw") {
    const auto eval = EvaluatorHandle::synthetic_truncexp(2.0, truncexp::TruncExpParams{1.0, 1.0, 1});
    CHECK(eval.true_optimum() == std::optional<double>(2.0));
    const auto m = manifest_of({{"a", {"a-0"}}}, MixingRatio::uniform(1));
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const double loss = eval.evaluate(m, 0, 0, seed);
        CHECK(loss >= 2.0);
        CHECK(loss <= 3.0);
        CHECK(loss == truncexp::sample_order_stat(truncexp::TruncExpParams{1.0, 1.0, 1}, seed) + 2.0);
    }
}

TEST_CASE("table lookup serves recorded losses and rejects unknown manifests") {
    const auto m1 = manifest_of({{"a", {"a-0"}}}, MixingRatio::uniform(1));
    const auto m2 = manifest_of({{"a", {"a-1"}}}, MixingRatio::uniform(1));
    const auto eval = EvaluatorHandle::table_lookup({{m1.digest(), 0.5}});
    CHECK(eval.evaluate(m1, 0, 0, 1) == 0.5);
    CHECK(!eval.true_optimum().has_value());
    try {
        eval.evaluate(m2, 0, 0, 1);
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EvaluatorFailure);
        CHECK(std::string(e.what()).find(m2.digest()) != std::string::npos);
    }
    CHECK_THROWS_AS(EvaluatorHandle::table_lookup({{"aa", std::nan("")}}), Error);
}

TEST_CASE("table lookup csv round-trip") {
    const fs::path dir = fs::temp_directory_path() / "mixopt_test_table";
    fs::create_directories(dir);
    const auto m = manifest_of({{"a", {"a-0"}}}, MixingRatio::uniform(1));
    {
        std::ofstream out(dir / "table.csv");
        out << "digest,loss\n" << m.digest() << ",1.75\n";
    }
    const auto eval = EvaluatorHandle::table_lookup_csv((dir / "table.csv").string());
    CHECK(eval.evaluate(m, 0, 0, 1) == 1.75);

    {
        std::ofstream out(dir / "bad.csv");
        out << "hash,value\nxx,1.0\n";
    }
    CHECK_THROWS_AS(EvaluatorHandle::table_lookup_csv((dir / "bad.csv").string()), Error);
    fs::remove_all(dir);
}

TEST_CASE("evaluator config dispatch") {
    const std::vector<DomainDataset> domains = {domain_with("a", {0.0, 1.0})};
    const fs::path base = fs::temp_directory_path();

    const json quad{{"kind", "synthetic_quadratic"},
                    {"optimum_ratio", {1.0}},
                    {"base_loss", 0.5},
                    {"curvature", 3.0}};
    CHECK(EvaluatorHandle::from_config(quad, domains, base).kind() ==
          EvaluatorKind::SyntheticQuadratic);

    const json texp{{"kind", "synthetic_truncexp"}, {"noise", {{"rate", 1.0}, {"cutoff", 1.0}}}};
    CHECK(EvaluatorHandle::from_config(texp, domains, base).kind() ==
          EvaluatorKind::SyntheticTruncexp);

    const json unknown{{"kind", "oracle"}};
    CHECK(kind_of([&] { EvaluatorHandle::from_config(unknown, domains, base); }) ==
          ErrorKind::ConfigInvalid);
}

TEST_CASE("external process evaluator") {
    std::vector<DomainPoint> pts{{"a-0", 1.0, std::optional<std::string>("ref/a0")},
                                 {"a-1", 2.0, {}},
                                 {"a-2", 3.0, std::optional<std::string>("ref/a2")}};
    const std::vector<DomainDataset> domains = {DomainDataset("a", pts)};
    const auto m = manifest_of({{"a", {"a-0", "a-2"}}}, MixingRatio::uniform(1));
    const fs::path dir = fs::temp_directory_path() / "mixopt_test_external";
    fs::remove_all(dir);

    SUBCASE("well-behaved child round-trips the protocol") {
        const auto eval = helper_evaluator("eval_ok.py", 30.0, domains, dir / "ok");
        // loss = iteration + sample_index / 10 + non-null payload refs / 1000
        CHECK(eval.evaluate(m, 4, 2, 1) == doctest::Approx(4.0 + 0.2 + 0.002));
        CHECK(eval.evaluate(m, 0, 0, 1) == doctest::Approx(0.002));
        CHECK(!eval.true_optimum().has_value());
        CHECK(!eval.supports_concurrency());

        // the manifest file is left behind for the child and carries aligned refs
        const json payload = json::parse(std::ifstream(dir / "ok" / "eval_4_2.json"));
        CHECK(payload.at("digest") == m.digest());
        CHECK(payload.at("total_size") == 2);
        const auto& refs = payload.at("payload_refs").at(0);
        CHECK(refs.at("domain") == "a");
        CHECK(refs.at("refs").at(0) == "ref/a0");
        CHECK(refs.at("refs").at(1) == "ref/a2");
    }
    SUBCASE("a reported error maps to an evaluator failure") {
        const auto eval = helper_evaluator("eval_error.py", 30.0, domains, dir / "err");
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::EvaluatorFailure);
    }
    SUBCASE("non-JSON replies violate the protocol") {
        const auto eval = helper_evaluator("eval_malformed.py", 30.0, domains, dir / "mal");
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::ProtocolViolation);
    }
    SUBCASE("a reply without a loss violates the protocol") {
        const auto eval = helper_evaluator("eval_missing_loss.py", 30.0, domains, dir / "mis");
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::ProtocolViolation);
    }
    SUBCASE("an overflowing loss is rejected at parse time") {
        const auto eval = helper_evaluator("eval_inf.py", 30.0, domains, dir / "inf");
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::ProtocolViolation);
    }
    SUBCASE("a child that dies mid-request is an evaluator failure") {
        const auto eval = helper_evaluator("eval_crash.py", 30.0, domains, dir / "crash");
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::EvaluatorFailure);
    }
    SUBCASE("a silent child times out") {
        const auto eval = helper_evaluator("eval_sleep.py", 0.4, domains, dir / "slow");
        CHECK(kind_of([&] { eval.evaluate(m, 0, 0, 1); }) == ErrorKind::Timeout);
    }
    SUBCASE("the evaluator respawns a dead child on the next request") {
        const auto eval = helper_evaluator("eval_once.py", 30.0, domains, dir / "once");
        CHECK(eval.evaluate(m, 0, 0, 1) == 1.0);
        CHECK(kind_of([&] { eval.evaluate(m, 0, 1, 1); }) == ErrorKind::EvaluatorFailure);
        CHECK(eval.evaluate(m, 0, 2, 1) == 1.0);
    }
    SUBCASE("a command that cannot execute fails cleanly") {
        ExternalProcessConfig config;
        config.command = {"/definitely/not/a/binary"};
        config.manifest_dir = dir / "none";
        const auto eval = EvaluatorHandle::external_process(std::move(config), domains);
        CHECK_THROWS_AS(eval.evaluate(m, 0, 0, 1), Error);
    }
    fs::remove_all(dir);
}
