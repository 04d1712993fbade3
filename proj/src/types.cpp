#include "mixopt/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mixopt {

namespace {

constexpr double kNegativeTolerance = 1e-12;
constexpr double kSimplexDrift = 1e-6;

std::vector<double> renormalize(std::vector<double> weights) {
    double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= sum;
    return weights;
}

void check_entries(const std::vector<double>& weights) {
    if (weights.empty()) {
        throw Error(ErrorKind::DimensionMismatch, "ratio needs at least one weight");
    }
    for (double w : weights) {
        if (!std::isfinite(w)) {
            throw Error(ErrorKind::NegativeWeight, "non-finite weight");
        }
        if (w < -kNegativeTolerance) {
            throw Error(ErrorKind::NegativeWeight, "weight " + std::to_string(w) + " is negative");
        }
    }
}

std::vector<double> clamp_noise(std::vector<double> weights) {
    for (double& w : weights) {
        if (w < 0.0) w = 0.0;
    }
    return weights;
}

}  // namespace

MixingRatio MixingRatio::normalized(std::vector<double> weights) {
    check_entries(weights);
    weights = clamp_noise(std::move(weights));
    double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (sum <= 0.0) {
        throw Error(ErrorKind::ZeroSum, "weights sum to zero");
    }
    return MixingRatio(renormalize(std::move(weights)));
}

MixingRatio MixingRatio::from_simplex(std::vector<double> weights) {
    check_entries(weights);
    weights = clamp_noise(std::move(weights));
    double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (sum <= 0.0) {
        throw Error(ErrorKind::ZeroSum, "weights sum to zero");
    }
    if (std::abs(sum - 1.0) > kSimplexDrift) {
        throw Error(ErrorKind::ConfigInvalid,
                    "ratio sum " + std::to_string(sum) + " deviates from 1 beyond tolerance");
    }
    return MixingRatio(renormalize(std::move(weights)));
}

MixingRatio MixingRatio::uniform(std::size_t n_domains) {
    if (n_domains == 0) {
        throw Error(ErrorKind::DimensionMismatch, "ratio needs at least one weight");
    }
    return MixingRatio(std::vector<double>(n_domains, 1.0 / static_cast<double>(n_domains)));
}

double MixingRatio::squared_distance(const MixingRatio& other) const {
    if (size() != other.size()) {
        throw Error(ErrorKind::DimensionMismatch, "ratio dimensions differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        double d = weights_[i] - other.weights_[i];
        acc += d * d;
    }
    return acc;
}

double MixingRatio::linf_distance(const MixingRatio& other) const {
    if (size() != other.size()) {
        throw Error(ErrorKind::DimensionMismatch, "ratio dimensions differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        acc = std::max(acc, std::abs(weights_[i] - other.weights_[i]));
    }
    return acc;
}

MixingRatio validate_ratio(const std::vector<double>& weights) {
    return MixingRatio::normalized(weights);
}

DomainDataset::DomainDataset(std::string name, std::vector<DomainPoint> points)
    : name_(std::move(name)), points_(std::move(points)) {
    if (points_.empty()) {
        throw Error(ErrorKind::EmptyDomain, "domain '" + name_ + "' has no points");
    }
    min_influence_ = points_.front().influence;
    max_influence_ = points_.front().influence;
    index_.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const DomainPoint& p = points_[i];
        if (!std::isfinite(p.influence)) {
            throw Error(ErrorKind::NonFiniteInfluence,
                        "point '" + p.id + "' in domain '" + name_ + "'");
        }
        if (!index_.emplace(p.id, i).second) {
            throw Error(ErrorKind::ConfigInvalid,
                        "duplicate point id '" + p.id + "' in domain '" + name_ + "'");
        }
        min_influence_ = std::min(min_influence_, p.influence);
        max_influence_ = std::max(max_influence_, p.influence);
    }
}

double DomainDataset::influence_of(const std::string& point_id) const {
    auto it = index_.find(point_id);
    if (it == index_.end()) {
        throw Error(ErrorKind::ConfigInvalid,
                    "unknown point id '" + point_id + "' in domain '" + name_ + "'");
    }
    return points_[it->second].influence;
}

namespace {

std::uint64_t fnv1a(std::uint64_t hash, const std::string& data) {
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace

std::string MixtureManifest::digest() const {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(total_size);
    for (const auto& sel : selections) {
        for (const auto& id : sel.point_ids) {
            pairs.emplace_back(sel.domain, id);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const auto& [domain, id] : pairs) {
        hash = fnv1a(hash, domain);
        hash = fnv1a(hash, "\x1f");
        hash = fnv1a(hash, id);
        hash = fnv1a(hash, "\x1e");
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(buf);
}

MixingRatio ratio_of(const MixtureManifest& manifest) {
    if (manifest.total_size == 0) {
        throw Error(ErrorKind::ConfigInvalid, "manifest has zero total_size");
    }
    std::vector<double> counts;
    counts.reserve(manifest.selections.size());
    for (const auto& sel : manifest.selections) {
        counts.push_back(static_cast<double>(sel.point_ids.size()));
    }
    return MixingRatio::normalized(std::move(counts));
}

std::vector<std::size_t> apportion_largest_remainder(const MixingRatio& ratio, std::size_t total) {
    const std::size_t n = ratio.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<std::pair<double, std::size_t>> remainders;  // (-fraction, index) for stable sort
    remainders.reserve(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double exact = ratio[i] * static_cast<double>(total);
        double floored = std::floor(exact);
        counts[i] = static_cast<std::size_t>(floored);
        assigned += counts[i];
        remainders.emplace_back(-(exact - floored), i);
    }
    std::sort(remainders.begin(), remainders.end());  // largest remainder first, index ties ascending
    std::size_t leftover = total - assigned;
    for (std::size_t j = 0; j < leftover; ++j) {
        counts[remainders[j % n].second] += 1;
    }
    return counts;
}

void validate_manifest(const MixtureManifest& manifest) {
    if (manifest.selections.size() != manifest.target_ratio.size()) {
        throw Error(ErrorKind::DimensionMismatch, "manifest domains do not match target ratio");
    }
    std::size_t total = 0;
    for (const auto& sel : manifest.selections) total += sel.point_ids.size();
    if (total != manifest.total_size) {
        throw Error(ErrorKind::ConfigInvalid, "manifest counts do not sum to total_size");
    }
    const auto expected = apportion_largest_remainder(manifest.target_ratio, manifest.total_size);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (manifest.selections[i].point_ids.size() != expected[i]) {
            throw Error(ErrorKind::ConfigInvalid,
                        "domain '" + manifest.selections[i].domain +
                            "' count deviates from largest-remainder apportionment");
        }
    }
    if (!manifest.with_replacement) {
        for (const auto& sel : manifest.selections) {
            auto ids = sel.point_ids;
            std::sort(ids.begin(), ids.end());
            if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
                throw Error(ErrorKind::ConfigInvalid,
                            "duplicate selection in domain '" + sel.domain + "'");
            }
        }
    }
}

void validate_manifest(const MixtureManifest& manifest, const std::vector<DomainDataset>& domains) {
    validate_manifest(manifest);
    if (manifest.selections.size() != domains.size()) {
        throw Error(ErrorKind::DimensionMismatch, "manifest domains do not match dataset list");
    }
    for (std::size_t i = 0; i < domains.size(); ++i) {
        const auto& sel = manifest.selections[i];
        if (sel.domain != domains[i].name()) {
            throw Error(ErrorKind::ConfigInvalid,
                        "manifest domain '" + sel.domain + "' out of order");
        }
        for (const auto& id : sel.point_ids) {
            if (!domains[i].contains(id)) {
                throw Error(ErrorKind::ConfigInvalid,
                            "manifest references unknown id '" + id + "' in domain '" +
                                sel.domain + "'");
            }
        }
    }
}

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NegativeWeight: return "NegativeWeight";
        case ErrorKind::ZeroSum: return "ZeroSum";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NumericalBreakdown: return "NumericalBreakdown";
        case ErrorKind::InsufficientData: return "InsufficientData";
        case ErrorKind::EmptyDomain: return "EmptyDomain";
        case ErrorKind::NonFiniteInfluence: return "NonFiniteInfluence";
        case ErrorKind::CountExceedsDomain: return "CountExceedsDomain";
        case ErrorKind::EvaluatorFailure: return "EvaluatorFailure";
        case ErrorKind::SingularHessian: return "SingularHessian";
        case ErrorKind::ProtocolViolation: return "ProtocolViolation";
        case ErrorKind::Timeout: return "Timeout";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::UnknownOptimum: return "UnknownOptimum";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    }
    return "UnknownError";
}

const char* to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::UniformRandom: return "uniform_random";
        case EstimatorKind::IfDriven: return "if_driven";
        case EstimatorKind::RemoveHarmful: return "remove_harmful";
    }
    return "unknown";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
    if (name == "uniform_random") return EstimatorKind::UniformRandom;
    if (name == "if_driven") return EstimatorKind::IfDriven;
    if (name == "remove_harmful") return EstimatorKind::RemoveHarmful;
    throw Error(ErrorKind::ConfigInvalid, "unknown estimator kind '" + name + "'");
}

void RunConfig::validate() const {
    if (n_domains == 0) throw Error(ErrorKind::ConfigInvalid, "n_domains must be positive");
    if (mixture_size < n_domains) {
        throw Error(ErrorKind::ConfigInvalid, "mixture_size must be at least n_domains");
    }
    if (sampling_size == 0) throw Error(ErrorKind::ConfigInvalid, "sampling_size must be >= 1");
    if (!(beta > 0.0)) throw Error(ErrorKind::ConfigInvalid, "beta must be positive");
    if (!(zeta > 0.0)) throw Error(ErrorKind::ConfigInvalid, "zeta must be positive");
    if (acquire.n_candidates == 0) {
        throw Error(ErrorKind::ConfigInvalid, "n_candidates must be positive");
    }
    if (!(acquire.refine_step_size > 0.0)) {
        throw Error(ErrorKind::ConfigInvalid, "refine_step_size must be positive");
    }
}

void to_json(json& j, const MixingRatio& ratio) { j = ratio.weights(); }

void from_json(const json& j, MixingRatio& ratio) {
    ratio = MixingRatio::from_simplex(j.get<std::vector<double>>());
}

void to_json(json& j, const DomainPoint& point) {
    j = json{{"id", point.id}, {"influence", point.influence}};
    if (point.payload_ref) j["payload_ref"] = *point.payload_ref;
}

void from_json(const json& j, DomainPoint& point) {
    point.id = j.at("id").get<std::string>();
    point.influence = j.at("influence").get<double>();
    if (j.contains("payload_ref")) {
        point.payload_ref = j.at("payload_ref").get<std::string>();
    } else {
        point.payload_ref.reset();
    }
}

void to_json(json& j, const DomainDataset& domain) {
    j = json{{"name", domain.name()}, {"points", domain.points()}};
}

void from_json(const json& j, DomainDataset& domain) {
    domain = DomainDataset(j.at("name").get<std::string>(),
                           j.at("points").get<std::vector<DomainPoint>>());
}

void to_json(json& j, const MixtureManifest& manifest) {
    json sels = json::array();
    for (const auto& sel : manifest.selections) {
        sels.push_back(json{{"domain", sel.domain}, {"point_ids", sel.point_ids}});
    }
    j = json{{"selections", std::move(sels)},
             {"target_ratio", manifest.target_ratio},
             {"total_size", manifest.total_size},
             {"with_replacement", manifest.with_replacement}};
}

void from_json(const json& j, MixtureManifest& manifest) {
    manifest.selections.clear();
    for (const auto& sel : j.at("selections")) {
        manifest.selections.push_back(DomainSelection{
            sel.at("domain").get<std::string>(),
            sel.at("point_ids").get<std::vector<std::string>>()});
    }
    manifest.target_ratio = j.at("target_ratio").get<MixingRatio>();
    manifest.total_size = j.at("total_size").get<std::size_t>();
    manifest.with_replacement = j.value("with_replacement", false);
}

void to_json(json& j, const Observation& obs) {
    j = json{{"iteration", obs.iteration},
             {"loss", obs.loss},
             {"manifest_digest", obs.manifest_digest},
             {"ratio", obs.ratio}};
}

void from_json(const json& j, Observation& obs) {
    obs.iteration = j.at("iteration").get<std::int64_t>();
    obs.loss = j.at("loss").get<double>();
    obs.manifest_digest = j.at("manifest_digest").get<std::string>();
    obs.ratio = j.at("ratio").get<MixingRatio>();
    if (!std::isfinite(obs.loss)) {
        throw Error(ErrorKind::NonFiniteLoss, "observation loss is not finite");
    }
}

void to_json(json& j, const AcquireConfig& cfg) {
    j = json{{"beta", cfg.beta},
             {"n_candidates", cfg.n_candidates},
             {"n_refine_steps", cfg.n_refine_steps},
             {"refine_step_size", cfg.refine_step_size}};
}

void from_json(const json& j, AcquireConfig& cfg) {
    cfg.beta = j.value("beta", 0.5);
    cfg.n_candidates = j.value("n_candidates", std::size_t{4096});
    cfg.n_refine_steps = j.value("n_refine_steps", std::size_t{50});
    cfg.refine_step_size = j.value("refine_step_size", 0.05);
}

void to_json(json& j, const RunConfig& cfg) {
    j = json{{"n_domains", cfg.n_domains},
             {"mixture_size", cfg.mixture_size},
             {"sampling_size", cfg.sampling_size},
             {"iterations", cfg.iterations},
             {"beta", cfg.beta},
             {"zeta", cfg.zeta},
             {"seed", cfg.seed},
             {"estimator", std::string(to_string(cfg.estimator_kind))},
             {"maximize", cfg.maximize},
             {"with_replacement", cfg.with_replacement},
             {"acquire", cfg.acquire}};
}

void from_json(const json& j, RunConfig& cfg) {
    cfg.n_domains = j.at("n_domains").get<std::size_t>();
    cfg.mixture_size = j.at("mixture_size").get<std::size_t>();
    cfg.sampling_size = j.value("sampling_size", std::size_t{1});
    cfg.iterations = j.value("iterations", std::size_t{10});
    cfg.beta = j.value("beta", 0.5);
    cfg.zeta = j.value("zeta", 0.01);
    cfg.seed = j.value("seed", std::int64_t{0});
    cfg.estimator_kind = estimator_kind_from_string(j.value("estimator", std::string("if_driven")));
    cfg.maximize = j.value("maximize", false);
    cfg.with_replacement = j.value("with_replacement", false);
    if (j.contains("acquire")) {
        cfg.acquire = j.at("acquire").get<AcquireConfig>();
    } else {
        cfg.acquire = AcquireConfig{};
    }
    cfg.acquire.beta = cfg.beta;
    cfg.validate();
}

std::string observation_line(const Observation& obs) {
    return json(obs).dump();
}

std::vector<Observation> read_observation_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ConfigInvalid, "cannot open observation log '" + path + "'");
    }
    std::vector<Observation> out;
    std::string line;
    std::int64_t last_iteration = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Observation obs = json::parse(line).get<Observation>();
        if (obs.iteration <= last_iteration) {
            throw Error(ErrorKind::ConfigInvalid,
                        "observation iterations not strictly increasing in '" + path + "'");
        }
        last_iteration = obs.iteration;
        out.push_back(std::move(obs));
    }
    return out;
}

}  // namespace mixopt
