#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <doctest.h>
#include <Eigen/Dense>

#include "mixopt/ifweights.hpp"
#include "mixopt/rng.hpp"

using namespace mixopt;
using namespace mixopt::ifweights;

namespace {

DomainDataset domain_with(const std::string& name, const std::vector<double>& influences) {
    std::vector<DomainPoint> points;
    for (std::size_t i = 0; i < influences.size(); ++i) {
        points.push_back({name + "-" + std::to_string(i), influences[i], {}});
    }
    return DomainDataset(name, std::move(points));
}

double prob_of(const NormalizedWeights& w, const std::string& id) {
    for (std::size_t i = 0; i < w.point_ids.size(); ++i) {
        if (w.point_ids[i] == id) return w.probs[i];
    }
    FAIL(("id not present: " + id));
    return 0.0;
}

}  // namespace

TEST_CASE("shift epsilon is a millionth of the influence range plus one") {
    CHECK(default_shift_epsilon(domain_with("d", {0.0, 2.0})) == doctest::Approx(3e-6));
    CHECK(default_shift_epsilon(domain_with("d", {5.0, 5.0})) == doctest::Approx(1e-6));
    CHECK(default_shift_epsilon(domain_with("d", {-1.0, 3.0})) == doctest::Approx(5e-6));
}

TEST_CASE("weight normalization hits its closed forms") {
    SUBCASE("equal influence gives equal probability") {
        const auto w = normalize_weights(domain_with("d", {5.0, 5.0, 5.0}), 0.5);
        for (double p : w.probs) CHECK(p == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("two points with unit shift") {
        // influences {-1, 1}: shifted {0, 2}, plus eps 1 -> {1, 3} -> {0.25, 0.75}
        const auto w = normalize_weights(domain_with("d", {-1.0, 1.0}), 1.0);
        CHECK(w.probs[0] == doctest::Approx(0.25));
        CHECK(w.probs[1] == doctest::Approx(0.75));
        CHECK(w.shift_epsilon == 1.0);
    }
    SUBCASE("probabilities sum to one and order by influence") {
        const auto w = normalize_weights(domain_with("d", {0.3, -2.0, 1.7, 0.3}));
        double sum = 0.0;
        for (double p : w.probs) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(prob_of(w, "d-1") < prob_of(w, "d-0"));
        CHECK(prob_of(w, "d-0") == doctest::Approx(prob_of(w, "d-3")));
        CHECK(prob_of(w, "d-3") < prob_of(w, "d-2"));
    }
    SUBCASE("adding a constant to every influence changes nothing") {
        const std::vector<double> base{0.1, -0.4, 2.2, 0.9};
        std::vector<double> shifted = base;
        for (double& x : shifted) x += 37.5;
        const auto w0 = normalize_weights(domain_with("d", base));
        const auto w1 = normalize_weights(domain_with("d", shifted));
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(w0.probs[i] == doctest::Approx(w1.probs[i]).epsilon(1e-12));
        }
    }
    SUBCASE("the shift must be positive") {
        CHECK_THROWS_AS(normalize_weights(domain_with("d", {1.0, 2.0}), 0.0), Error);
        CHECK_THROWS_AS(normalize_weights(domain_with("d", {1.0, 2.0}), -1.0), Error);
    }
}

TEST_CASE("uniform weights ignore influence") {
    const auto w = uniform_weights(domain_with("d", {9.0, -3.0, 0.0, 1.0}));
    for (double p : w.probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("harmful-point filter drops the influence floor") {
    SUBCASE("drops exactly floor(fraction * n)") {
        const auto w =
            filtered_uniform_weights(domain_with("d", {1.0, 2.0, 3.0, 4.0, 5.0}), 0.2);
        REQUIRE(w.point_ids.size() == 4);
        CHECK(std::find(w.point_ids.begin(), w.point_ids.end(), "d-0") == w.point_ids.end());
        for (double p : w.probs) CHECK(p == doctest::Approx(0.25));
    }
    SUBCASE("ties at the cutoff keep the lexicographically smaller id") {
        std::vector<DomainPoint> points{{"a", 1.0, {}}, {"b", 1.0, {}}, {"c", 3.0, {}},
                                        {"d", 4.0, {}}};
        const auto w = filtered_uniform_weights(DomainDataset("t", points), 0.25);
        REQUIRE(w.point_ids.size() == 3);
        CHECK(std::find(w.point_ids.begin(), w.point_ids.end(), "a") != w.point_ids.end());
        CHECK(std::find(w.point_ids.begin(), w.point_ids.end(), "b") == w.point_ids.end());
    }
    SUBCASE("fraction zero keeps everything") {
        const auto w = filtered_uniform_weights(domain_with("d", {1.0, 2.0}), 0.0);
        CHECK(w.point_ids.size() == 2);
    }
    SUBCASE("survivors preserve the domain order") {
        const auto w =
            filtered_uniform_weights(domain_with("d", {5.0, 1.0, 4.0, 0.0, 3.0}), 0.4);
        CHECK(w.point_ids == std::vector<std::string>{"d-0", "d-2", "d-4"});
    }
    SUBCASE("a full drop is rejected") {
        CHECK_THROWS_AS(filtered_uniform_weights(domain_with("d", {1.0}), 1.0), Error);
        CHECK_THROWS_AS(filtered_uniform_weights(domain_with("d", {1.0}), -0.1), Error);
    }
}

TEST_CASE("domain sampling honours counts, replacement, and the seed") {
    const auto domain = domain_with("d", {0.0, 1.0, 2.0, 3.0, 4.0, 5.0});
    const auto weights = normalize_weights(domain);

    SUBCASE("zero draws") {
        CHECK(sample_domain(weights, 0, false, 1).empty());
    }
    SUBCASE("a full draw without replacement is a permutation") {
        const auto ids = sample_domain(weights, 6, false, 2);
        CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 6);
    }
    SUBCASE("without replacement never repeats") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const auto ids = sample_domain(weights, 4, false, seed);
            CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 4);
        }
    }
    SUBCASE("asking for more than the domain holds is an error") {
        try {
            sample_domain(weights, 7, false, 3);
            FAIL("expected a throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::CountExceedsDomain);
            CHECK(std::string(e.what()).find("d") != std::string::npos);
        }
    }
    SUBCASE("with replacement can exceed the domain size") {
        const auto ids = sample_domain(weights, 20, true, 4);
        CHECK(ids.size() == 20);
    }
    SUBCASE("the seed pins the draw") {
        CHECK(sample_domain(weights, 3, false, 11) == sample_domain(weights, 3, false, 11));
        CHECK(sample_domain(weights, 3, true, 11) == sample_domain(weights, 3, true, 11));
    }
    SUBCASE("marginals follow the probabilities") {
        const auto skewed = normalize_weights(domain_with("s", {0.0, 0.0, 8.0}), 1.0);
        // probs (1 + {0, 0, 8}) / 11 = {1/11, 1/11, 9/11}... with eps 1:
        // shifted {0,0,8} + 1 -> {1,1,9} over 11
        std::map<std::string, int> hits;
        const int n = 30000;
        for (int i = 0; i < n; ++i) {
            hits[sample_domain(skewed, 1, false, 1000 + static_cast<std::uint64_t>(i))[0]] += 1;
        }
        CHECK(static_cast<double>(hits["s-0"]) / n == doctest::Approx(1.0 / 11.0).epsilon(0.1));
        CHECK(static_cast<double>(hits["s-2"]) / n == doctest::Approx(9.0 / 11.0).epsilon(0.03));
    }
}

TEST_CASE("ridge fit solves the regularized normal equations") {
    // X = [1; 1], y = [1, 3], lambda = 1: theta = X'y / (X'X + 1) = 4/3
    Eigen::MatrixXd X(2, 1);
    X << 1.0, 1.0;
    Eigen::VectorXd y(2);
    y << 1.0, 3.0;
    const auto theta = ridge_fit(X, y, 1.0);
    CHECK(theta(0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

    RidgeProblem problem;
    problem.features = X;
    problem.labels = y;
    problem.reg_lambda = 1.0;
    problem.test_features = Eigen::MatrixXd(1, 1);
    problem.test_features << 2.0;
    problem.test_labels = Eigen::VectorXd(1);
    problem.test_labels << 2.0;
    problem.validate();
    // residual 2 * 4/3 - 2 = 2/3, squared 4/9
    CHECK(ridge_test_loss(problem, theta) == doctest::Approx(4.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("ridge problem validation bounds the feature dimension") {
    RidgeProblem problem;
    problem.features = Eigen::MatrixXd::Ones(4, 21);
    problem.labels = Eigen::VectorXd::Ones(4);
    problem.test_features = Eigen::MatrixXd::Ones(2, 21);
    problem.test_labels = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(problem.validate(), Error);

    problem.features = Eigen::MatrixXd::Ones(4, 2);
    problem.test_features = Eigen::MatrixXd::Ones(2, 2);
    problem.reg_lambda = 0.0;
    CHECK_THROWS_AS(problem.validate(), Error);
}

TEST_CASE("influence matches the closed form computed with an independent solver") {
    rng::Stream stream(515);
    const int n = 12, d = 3, m = 5;
    Eigen::MatrixXd X(n, d), Xt(m, d);
    Eigen::VectorXd y(n), yt(m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = 2.0 * stream.uniform() - 1.0;
        y(i) = 2.0 * stream.uniform() - 1.0;
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) Xt(i, j) = 2.0 * stream.uniform() - 1.0;
        yt(i) = 2.0 * stream.uniform() - 1.0;
    }
    RidgeProblem problem{X, y, 0.1, Xt, yt};
    const auto influences = ridge_influences(problem);
    REQUIRE(influences.size() == static_cast<std::size_t>(n));

    // gradient/Hessian algebra evaluated with a full-pivot LU inverse
    const Eigen::VectorXd theta = ridge_fit(X, y, 0.1);
    const Eigen::MatrixXd H = 2.0 * (X.transpose() * X + 0.1 * Eigen::MatrixXd::Identity(d, d));
    const Eigen::VectorXd g_test = 2.0 * Xt.transpose() * (Xt * theta - yt);
    const Eigen::MatrixXd H_inv = Eigen::FullPivLU<Eigen::MatrixXd>(H).inverse();
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd grad_i = 2.0 * (X.row(i).dot(theta) - y(i)) * X.row(i).transpose();
        const double expected = g_test.dot(H_inv * grad_i);
        CHECK(influences[static_cast<std::size_t>(i)] ==
              doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("influence sign separates helpful from harmful points") {
    // y = 2x everywhere except one corrupted training label
    const int n = 30, d = 1;
    Eigen::MatrixXd X(n, d), Xt(8, d);
    Eigen::VectorXd y(n), yt(8);
    rng::Stream stream(77);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 2.0 * stream.uniform() - 1.0;
        y(i) = 2.0 * X(i, 0);
    }
    y(4) = -10.0;  // poison
    for (int i = 0; i < 8; ++i) {
        Xt(i, 0) = 2.0 * stream.uniform() - 1.0;
        yt(i) = 2.0 * Xt(i, 0);
    }
    RidgeProblem problem{X, y, 0.05, Xt, yt};
    const auto influences = ridge_influences(problem);
    const auto argmin = std::min_element(influences.begin(), influences.end());
    CHECK(std::distance(influences.begin(), argmin) == 4);
    CHECK(*argmin < 0.0);
}

TEST_CASE("influence csv loader round-trips and rejects damage") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mixopt_test_csv";
    fs::create_directories(dir);

    SUBCASE("two-column file") {
        const fs::path path = dir / "ok.csv";
        std::ofstream(path) << "point_id,influence\nalpha,0.5\nbeta,-1.25\n";
        const auto domain = load_influence_csv("mydomain", path.string());
        CHECK(domain.name() == "mydomain");
        REQUIRE(domain.size() == 2);
        CHECK(domain.influence_of("alpha") == 0.5);
        CHECK(domain.influence_of("beta") == -1.25);
        CHECK(!domain.points()[0].payload_ref.has_value());
    }
    SUBCASE("three-column file keeps the payload reference") {
        const fs::path path = dir / "refs.csv";
        std::ofstream(path) << "point_id,influence,payload_ref\na,1.0,s3://bucket/a\nb,2.0,\n";
        const auto domain = load_influence_csv("d", path.string());
        CHECK(domain.points()[0].payload_ref == std::optional<std::string>("s3://bucket/a"));
        CHECK(!domain.points()[1].payload_ref.has_value());
    }
    SUBCASE("wrong header") {
        const fs::path path = dir / "header.csv";
        std::ofstream(path) << "id,score\na,1.0\n";
        CHECK_THROWS_AS(load_influence_csv("d", path.string()), Error);
    }
    SUBCASE("non-numeric influence") {
        const fs::path path = dir / "text.csv";
        std::ofstream(path) << "point_id,influence\na,abc\n";
        CHECK_THROWS_AS(load_influence_csv("d", path.string()), Error);
    }
    SUBCASE("non-finite influence") {
        const fs::path path = dir / "nan.csv";
        std::ofstream(path) << "point_id,influence\na,nan\n";
        try {
            load_influence_csv("d", path.string());
            FAIL("expected a throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NonFiniteInfluence);
        }
    }
    SUBCASE("duplicate ids") {
        const fs::path path = dir / "dup.csv";
        std::ofstream(path) << "point_id,influence\na,1.0\na,2.0\n";
        CHECK_THROWS_AS(load_influence_csv("d", path.string()), Error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_influence_csv("d", (dir / "absent.csv").string()), Error);
    }
    fs::remove_all(dir);
}
