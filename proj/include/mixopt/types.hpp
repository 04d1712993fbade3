#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixopt/error.hpp"

namespace mixopt {

using json = nlohmann::json;

// Point on the probability simplex over the data domains. Immutable after
// construction; construction always renormalizes so the weights sum to 1.
class MixingRatio {
  public:
    // Normalizing factory: accepts any non-negative vector with positive sum
    // (scale invariant). Entries in [-1e-12, 0) are treated as numeric noise
    // and clamped to zero.
    static MixingRatio normalized(std::vector<double> weights);

    // Strict factory for values that are supposed to be on the simplex
    // already (decoded files, refined proposals): the sum may drift from 1 by
    // at most 1e-6, anything larger is an error.
    static MixingRatio from_simplex(std::vector<double> weights);

    static MixingRatio uniform(std::size_t n_domains);

    const std::vector<double>& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }

    double squared_distance(const MixingRatio& other) const;
    double linf_distance(const MixingRatio& other) const;

    bool operator==(const MixingRatio& other) const { return weights_ == other.weights_; }
    bool operator!=(const MixingRatio& other) const { return !(*this == other); }

    // lexicographic order on the weight vector, used for deterministic ties
    bool lex_less(const MixingRatio& other) const { return weights_ < other.weights_; }

  private:
    explicit MixingRatio(std::vector<double> weights) : weights_(std::move(weights)) {}

    std::vector<double> weights_;
};

// Spec-facing name for the normalizing factory.
MixingRatio validate_ratio(const std::vector<double>& weights);

struct DomainPoint {
    std::string id;
    double influence = 0.0;
    std::optional<std::string> payload_ref;

    bool operator==(const DomainPoint&) const = default;
};

// A named data domain. Influence values are signed and must be finite;
// point ids are unique within the domain.
class DomainDataset {
  public:
    DomainDataset(std::string name, std::vector<DomainPoint> points);

    const std::string& name() const noexcept { return name_; }
    const std::vector<DomainPoint>& points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }

    bool contains(const std::string& point_id) const { return index_.count(point_id) > 0; }
    double influence_of(const std::string& point_id) const;

    double min_influence() const noexcept { return min_influence_; }
    double max_influence() const noexcept { return max_influence_; }

    bool operator==(const DomainDataset& other) const {
        return name_ == other.name_ && points_ == other.points_;
    }

  private:
    std::string name_;
    std::vector<DomainPoint> points_;
    std::unordered_map<std::string, std::size_t> index_;
    double min_influence_ = 0.0;
    double max_influence_ = 0.0;
};

// One domain's slice of a mixture.
struct DomainSelection {
    std::string domain;
    std::vector<std::string> point_ids;

    bool operator==(const DomainSelection&) const = default;
};

// Concrete selection of total_size point ids across domains, stored in
// domain order so index i lines up with target_ratio[i].
struct MixtureManifest {
    std::vector<DomainSelection> selections;
    MixingRatio target_ratio = MixingRatio::uniform(1);
    std::size_t total_size = 0;
    bool with_replacement = false;

    // Stable content hash over the sorted (domain, point_id) pairs.
    std::string digest() const;

    bool operator==(const MixtureManifest&) const = default;
};

MixingRatio ratio_of(const MixtureManifest& manifest);

// Integer counts per domain from ratio * total via the largest-remainder
// rule; remainder ties go to the smaller domain index.
std::vector<std::size_t> apportion_largest_remainder(const MixingRatio& ratio, std::size_t total);

// Structural checks (counts, apportionment, duplicates); pass domains to also
// verify that every selected id exists.
void validate_manifest(const MixtureManifest& manifest);
void validate_manifest(const MixtureManifest& manifest, const std::vector<DomainDataset>& domains);

struct Observation {
    MixingRatio ratio = MixingRatio::uniform(1);
    double loss = 0.0;
    std::int64_t iteration = 0;
    std::string manifest_digest;

    bool operator==(const Observation&) const = default;
};

enum class EstimatorKind { UniformRandom, IfDriven, RemoveHarmful };

const char* to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

// Knobs for the acquisition search (candidate count and local refinement).
struct AcquireConfig {
    double beta = 0.5;
    std::size_t n_candidates = 4096;
    std::size_t n_refine_steps = 50;
    double refine_step_size = 0.05;

    bool operator==(const AcquireConfig&) const = default;
};

struct RunConfig {
    std::size_t n_domains = 0;
    std::size_t mixture_size = 0;  // M
    std::size_t sampling_size = 1;  // k
    std::size_t iterations = 10;  // T
    double beta = 0.5;
    double zeta = 0.01;
    std::int64_t seed = 0;
    EstimatorKind estimator_kind = EstimatorKind::IfDriven;
    bool maximize = false;
    bool with_replacement = false;
    AcquireConfig acquire;

    void validate() const;  // throws ConfigInvalid

    bool operator==(const RunConfig&) const = default;
};

// JSON codecs (schemas documented in the README).
void to_json(json& j, const MixingRatio& ratio);
void from_json(const json& j, MixingRatio& ratio);
void to_json(json& j, const DomainPoint& point);
void from_json(const json& j, DomainPoint& point);
void to_json(json& j, const DomainDataset& domain);
void from_json(const json& j, DomainDataset& domain);
void to_json(json& j, const MixtureManifest& manifest);
void from_json(const json& j, MixtureManifest& manifest);
void to_json(json& j, const Observation& obs);
void from_json(const json& j, Observation& obs);
void to_json(json& j, const AcquireConfig& cfg);
void from_json(const json& j, AcquireConfig& cfg);
void to_json(json& j, const RunConfig& cfg);
void from_json(const json& j, RunConfig& cfg);

// Observation logs are append-only line-delimited JSON, one object per line.
std::string observation_line(const Observation& obs);
std::vector<Observation> read_observation_log(const std::string& path);

}  // namespace mixopt

// MixingRatio and DomainDataset validate in their constructors and have no
// default state, so json::get<> needs the returning-form serializers.
namespace nlohmann {

template <>
struct adl_serializer<mixopt::MixingRatio> {
    static void to_json(json& j, const mixopt::MixingRatio& ratio) { mixopt::to_json(j, ratio); }
    static mixopt::MixingRatio from_json(const json& j) {
        return mixopt::MixingRatio::from_simplex(j.get<std::vector<double>>());
    }
    static void from_json(const json& j, mixopt::MixingRatio& ratio) {
        mixopt::from_json(j, ratio);
    }
};

template <>
struct adl_serializer<mixopt::DomainDataset> {
    static void to_json(json& j, const mixopt::DomainDataset& domain) {
        mixopt::to_json(j, domain);
    }
    static mixopt::DomainDataset from_json(const json& j) {
        return mixopt::DomainDataset(j.at("name").get<std::string>(),
                                     j.at("points").get<std::vector<mixopt::DomainPoint>>());
    }
    static void from_json(const json& j, mixopt::DomainDataset& domain) {
        mixopt::from_json(j, domain);
    }
};

}  // namespace nlohmann
