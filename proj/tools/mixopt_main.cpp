#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "mixopt/engine.hpp"
#include "mixopt/error.hpp"
#include "mixopt/evaluate.hpp"
#include "mixopt/ifweights.hpp"
#include "mixopt/regret.hpp"
#include "mixopt/validation.hpp"

namespace {

namespace fs = std::filesystem;
using mixopt::Error;
using mixopt::ErrorKind;
using mixopt::json;

// 0 success, 1 configuration problem, 2 evaluator failure, 3 numerical
// breakdown; replay mismatches report as 1
int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::EvaluatorFailure:
        case ErrorKind::ProtocolViolation:
        case ErrorKind::Timeout:
        case ErrorKind::NonFiniteLoss:
            return 2;
        case ErrorKind::NumericalBreakdown:
        case ErrorKind::SingularHessian:
            return 3;
        default:
            return 1;
    }
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ConfigInvalid, "cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigInvalid, path.string() + ": " + e.what());
    }
}

struct RunOverrides {
    std::optional<std::int64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<std::string> estimator;
    std::optional<std::size_t> sampling_size;
    std::optional<std::size_t> iterations;
    std::optional<double> beta;
};

struct LoadedRun {
    mixopt::RunConfig run;
    std::vector<mixopt::DomainDataset> domains;
    json evaluator_spec;
    fs::path output_dir;
};

LoadedRun load_run_config(const fs::path& config_path, const RunOverrides& overrides) {
    const json root = read_json_file(config_path);
    const fs::path base_dir = fs::absolute(config_path).parent_path();

    LoadedRun loaded;
    if (!root.contains("run")) {
        throw Error(ErrorKind::ConfigInvalid, config_path.string() + ": missing 'run' section");
    }
    loaded.run = root.at("run").get<mixopt::RunConfig>();
    if (overrides.seed) loaded.run.seed = *overrides.seed;
    if (overrides.estimator) {
        loaded.run.estimator_kind = mixopt::estimator_kind_from_string(*overrides.estimator);
    }
    if (overrides.sampling_size) loaded.run.sampling_size = *overrides.sampling_size;
    if (overrides.iterations) loaded.run.iterations = *overrides.iterations;
    if (overrides.beta) {
        loaded.run.beta = *overrides.beta;
        loaded.run.acquire.beta = *overrides.beta;
    }
    loaded.run.validate();

    if (!root.contains("domains") || !root.at("domains").is_array() ||
        root.at("domains").empty()) {
        throw Error(ErrorKind::ConfigInvalid,
                    config_path.string() + ": 'domains' must be a non-empty array");
    }
    for (const auto& spec : root.at("domains")) {
        const auto name = spec.at("name").get<std::string>();
        fs::path csv(spec.at("influence_csv").get<std::string>());
        if (csv.is_relative()) csv = base_dir / csv;
        loaded.domains.push_back(mixopt::ifweights::load_influence_csv(name, csv.string()));
    }
    if (loaded.domains.size() != loaded.run.n_domains) {
        throw Error(ErrorKind::ConfigInvalid,
                    "config declares " + std::to_string(loaded.run.n_domains) +
                        " domains but lists " + std::to_string(loaded.domains.size()));
    }

    if (!root.contains("evaluator")) {
        throw Error(ErrorKind::ConfigInvalid, config_path.string() + ": missing 'evaluator'");
    }
    loaded.evaluator_spec = root.at("evaluator");

    std::string out_dir = root.value("output_dir", std::string());
    if (overrides.output_dir) out_dir = *overrides.output_dir;
    if (out_dir.empty()) {
        throw Error(ErrorKind::ConfigInvalid,
                    "no output directory (config 'output_dir' or --output-dir)");
    }
    loaded.output_dir = out_dir;
    return loaded;
}

int cmd_run(const fs::path& config_path, const RunOverrides& overrides) {
    const LoadedRun loaded = load_run_config(config_path, overrides);
    const fs::path base_dir = fs::absolute(config_path).parent_path();
    const mixopt::evaluate::EvaluatorHandle evaluator =
        mixopt::evaluate::EvaluatorHandle::from_config(loaded.evaluator_spec, loaded.domains,
                                                       base_dir);

    mixopt::engine::RunWriter writer(loaded.output_dir);
    json extra;
    extra["evaluator"] = loaded.evaluator_spec;
    extra["domains"] = loaded.domains;
    writer.write_config(loaded.run, extra);

    const mixopt::engine::RunState state = mixopt::engine::run_to_completion(
        loaded.run, loaded.domains, evaluator, &writer, &std::clog);

    std::cout << "run complete: best loss " << state.best.loss << " at iteration "
              << state.best.iteration << "\n";
    std::cout << "best ratio [";
    const auto& w = state.best.manifest.target_ratio.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        std::cout << (i ? "," : "") << w[i];
    }
    std::cout << "]\n";
    std::cout << "run directory: " << writer.dir().string() << "\n";
    return 0;
}

int cmd_replay(const fs::path& run_dir) {
    const json config = read_json_file(run_dir / "config.json");
    const auto run = config.at("run").get<mixopt::RunConfig>();
    const auto domains = config.at("domains").get<std::vector<mixopt::DomainDataset>>();

    // recorded raw losses keyed by manifest digest
    std::unordered_map<std::string, double> table;
    const fs::path manifest_dir = run_dir / "manifests";
    if (!fs::is_directory(manifest_dir)) {
        throw Error(ErrorKind::ConfigInvalid, "no manifests directory in " + run_dir.string());
    }
    for (const auto& entry : fs::directory_iterator(manifest_dir)) {
        if (entry.path().extension() != ".json") continue;
        const json sample = read_json_file(entry.path());
        const auto digest = sample.at("digest").get<std::string>();
        const double loss = sample.at("loss").get<double>();
        const auto [it, inserted] = table.emplace(digest, loss);
        if (!inserted && it->second != loss) {
            throw Error(ErrorKind::ConfigInvalid,
                        "manifest digest " + digest +
                            " was recorded with two different losses; replay is ambiguous");
        }
    }
    if (table.empty()) {
        throw Error(ErrorKind::ConfigInvalid, "no recorded samples in " + manifest_dir.string());
    }

    const auto evaluator = mixopt::evaluate::EvaluatorHandle::table_lookup(std::move(table));
    mixopt::engine::RunWriter writer(run_dir / "replay");
    mixopt::engine::run_to_completion(run, domains, evaluator, &writer, nullptr);

    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string original = slurp(run_dir / "observations.jsonl");
    const std::string replayed = slurp(run_dir / "replay" / "observations.jsonl");
    if (original.empty()) {
        throw Error(ErrorKind::ConfigInvalid,
                    "empty or unreadable " + (run_dir / "observations.jsonl").string());
    }
    if (original == replayed) {
        std::cout << "replay matches: " << run.iterations + 1 << " observations identical\n";
        return 0;
    }
    std::cerr << "replay mismatch: observation logs differ\n";
    return 1;
}

int cmd_report(const fs::path& run_dir) {
    const json config = read_json_file(run_dir / "config.json");
    const auto history =
        mixopt::read_observation_log((run_dir / "observations.jsonl").string());
    if (history.empty()) {
        throw Error(ErrorKind::ConfigInvalid, "no observations recorded in " + run_dir.string());
    }
    const fs::path report_dir = run_dir / "report";
    std::error_code ec;
    fs::create_directories(report_dir, ec);
    if (ec) {
        throw Error(ErrorKind::ConfigInvalid,
                    "cannot create " + report_dir.string() + ": " + ec.message());
    }
    const auto write_file = [](const fs::path& p, const std::string& body) {
        std::ofstream out(p);
        out << body;
        if (!out) {
            throw Error(ErrorKind::ConfigInvalid, "cannot write " + p.string());
        }
        std::cout << "wrote " << p.string() << "\n";
    };

    // best loss so far per iteration
    {
        std::ostringstream csv;
        csv.precision(17);
        csv << "t,loss,best_loss\n";
        double best = history.front().loss;
        for (const auto& obs : history) {
            best = std::min(best, obs.loss);
            csv << obs.iteration << "," << obs.loss << "," << best << "\n";
        }
        write_file(report_dir / "best_loss.csv", csv.str());
    }

    // final mixing ratio, one row per domain
    {
        const json result = read_json_file(run_dir / "result.json");
        const auto ratio = result.at("best_ratio").get<std::vector<double>>();
        std::vector<std::string> names;
        for (const auto& d : config.at("domains")) {
            names.push_back(d.at("name").get<std::string>());
        }
        if (names.size() != ratio.size()) {
            throw Error(ErrorKind::ConfigInvalid, "domain list does not match the stored ratio");
        }
        std::ostringstream csv;
        csv.precision(17);
        csv << "domain,weight\n";
        for (std::size_t i = 0; i < names.size(); ++i) {
            csv << names[i] << "," << ratio[i] << "\n";
        }
        write_file(report_dir / "final_ratio.csv", csv.str());
    }

    // regret trace only when the task's true optimum is known
    const std::string kind = config.at("evaluator").value("kind", std::string());
    if (kind == "synthetic_quadratic" || kind == "synthetic_truncexp") {
        const double f_star = config.at("evaluator").value("base_loss", 0.0);
        const auto trace = mixopt::regret::compute_trace(history, f_star);
        write_file(report_dir / "regret.csv", mixopt::regret::trace_csv(history, trace));
    } else {
        std::cout << "regret trace skipped: true optimum unknown for evaluator kind '" << kind
                  << "'\n";
    }
    return 0;
}

int cmd_validate(const std::string& suite) {
    std::vector<mixopt::validation::SuiteResult> results;
    if (suite == "all") {
        for (const auto& name : mixopt::validation::suite_names()) {
            results.push_back(mixopt::validation::run_suite(name));
        }
    } else {
        results.push_back(mixopt::validation::run_suite(suite));
    }
    bool all_passed = true;
    for (const auto& result : results) {
        std::cout << (result.passed ? "[PASS] " : "[FAIL] ") << result.name << "\n";
        for (const auto& line : result.lines) {
            std::cout << "       " << line << "\n";
        }
        all_passed = all_passed && result.passed;
    }
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"global-to-local data mixture optimizer"};
    app.require_subcommand(1);

    std::string config_path;
    RunOverrides overrides;
    auto* run = app.add_subcommand("run", "execute an optimization run from a config file");
    run->add_option("--config", config_path, "config file (JSON)")->required();
    std::int64_t seed_override = 0;
    auto* seed_opt = run->add_option("--seed-override", seed_override, "replace the config seed");
    std::string output_dir_override;
    auto* out_opt = run->add_option("--output-dir", output_dir_override, "run directory");
    std::string estimator_override;
    auto* est_opt =
        run->add_option("--estimator", estimator_override, "estimator variant")
            ->check(CLI::IsMember({"uniform_random", "if_driven", "remove_harmful"}));
    std::size_t k_override = 0;
    auto* k_opt = run->add_option("--k", k_override, "inner sampling size");
    std::size_t iterations_override = 0;
    auto* iter_opt = run->add_option("--iterations", iterations_override, "outer iterations");
    double beta_override = 0.0;
    auto* beta_opt = run->add_option("--beta", beta_override, "confidence-bound weight");

    std::string replay_dir;
    auto* replay = app.add_subcommand("replay", "re-run a recorded run and verify the history");
    replay->add_option("run_dir", replay_dir, "run directory")->required();

    std::string report_dir;
    auto* report = app.add_subcommand("report", "emit CSV reports for a completed run");
    report->add_option("run_dir", report_dir, "run directory")->required();

    std::string suite;
    auto* validate = app.add_subcommand("validate", "run a statistical validation suite");
    validate->add_option("suite", suite, "gp_oracle, order_stat, sampling, ridge_if, or all")
        ->required()
        ->check(CLI::IsMember({"gp_oracle", "order_stat", "sampling", "ridge_if", "all"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            if (*seed_opt) overrides.seed = seed_override;
            if (*out_opt) overrides.output_dir = output_dir_override;
            if (*est_opt) overrides.estimator = estimator_override;
            if (*k_opt) overrides.sampling_size = k_override;
            if (*iter_opt) overrides.iterations = iterations_override;
            if (*beta_opt) overrides.beta = beta_override;
            return cmd_run(config_path, overrides);
        }
        if (replay->parsed()) {
            return cmd_replay(replay_dir);
        }
        if (report->parsed()) {
            return cmd_report(report_dir);
        }
        if (validate->parsed()) {
            return cmd_validate(suite);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
