#include <doctest.h>

#include <sstream>

#include "test_support.hpp"

using namespace conceptvae;

namespace {

ElementProfile prof(std::string id, KpiVector v) { return ElementProfile{std::move(id), v}; }

KMeansOptions opts(std::size_t k, std::uint64_t seed = 7) {
    KMeansOptions o;
    o.k = k;
    o.seed = seed;
    return o;
}

}  // namespace

TEST_CASE("element_profiles: means of normalized values") {
    NormStats s;
    s.min = {0, 0, 0, 0, 0};
    s.max = {1, 1, 1, 1, 1};
    const Dataset d = {{"b", 1, {0.2, 0, 0, 0, 0}}, {"a", 5, {0.7, 1, 0, 0, 0.5}},
                       {"b", 2, {0.4, 1, 0, 0, 0}}};
    const auto p = element_profiles(d, s);
    REQUIRE(p.size() == 2);
    CHECK(p[0].element_id == "b");
    CHECK(p[0].profile[0] == doctest::Approx(0.3));
    CHECK(p[0].profile[1] == doctest::Approx(0.5));
    CHECK(p[1].profile == KpiVector{0.7, 1, 0, 0, 0.5});

    const Dataset swapped = {d[1], d[2], d[0]};
    const auto q = element_profiles(swapped, s);
    REQUIRE(q.size() == 2);
    CHECK(q[0].element_id == "a");
    CHECK(q[0].profile == p[1].profile);
    CHECK(q[1].profile[0] == doctest::Approx(p[0].profile[0]));
}

TEST_CASE("kmeans: k = 1 gives the global mean") {
    std::mt19937_64 rng(1);
    const auto pts = testsupport::random_profiles(9, rng);
    const auto m = kmeans_fit(pts, opts(1));
    REQUIRE(m.k() == 1);
    for (std::size_t d = 0; d < kKpiCount; ++d) {
        double mean = 0;
        for (const auto& p : pts) mean += p.profile[d];
        CHECK(m.centroids[0][d] == doctest::Approx(mean / 9.0));
    }
    for (const auto& p : pts) CHECK(m.cluster_of(p.element_id) == 0u);
}

TEST_CASE("kmeans: k = n gives zero inertia and zero variances") {
    std::mt19937_64 rng(2);
    const auto pts = testsupport::random_profiles(7, rng);
    const auto m = kmeans_fit(pts, opts(7));
    CHECK(m.inertia == doctest::Approx(0.0));
    const auto q = cluster_quality(m, pts);
    for (double v : q.variance) CHECK(v == doctest::Approx(0.0));
    for (auto s : q.size) CHECK(s == 1);
}

TEST_CASE("kmeans: two tight groups recover the optimal partition") {
    std::vector<ElementProfile> pts;
    const double lo[3] = {0.08, 0.1, 0.12};
    for (int i = 0; i < 3; ++i) {
        pts.push_back(prof("lo" + std::to_string(i), {lo[i], 0.1, 0.1, 0.1, lo[i]}));
        pts.push_back(prof("hi" + std::to_string(i), {0.9, 1 - lo[i], 0.9, 0.9, 0.9}));
    }
    const auto m = kmeans_fit(pts, opts(2));
    CHECK(m.inertia == doctest::Approx(testsupport::brute_force_inertia(pts, 2)).epsilon(1e-12));
    CHECK(m.cluster_of("lo0") == m.cluster_of("lo2"));
    CHECK(m.cluster_of("hi0") == m.cluster_of("hi1"));
    CHECK(m.cluster_of("lo0") != m.cluster_of("hi0"));
}

TEST_CASE("kmeans: errors and determinism") {
    std::mt19937_64 rng(3);
    const auto pts = testsupport::random_profiles(5, rng);
    CHECK_THROWS_AS(kmeans_fit(pts, opts(6)), std::invalid_argument);
    CHECK_THROWS_AS(kmeans_fit(pts, opts(0)), std::invalid_argument);
    const auto a = kmeans_fit(pts, opts(2, 11));
    const auto b = kmeans_fit(pts, opts(2, 11));
    CHECK(a.centroids == b.centroids);
    CHECK(a.assignment == b.assignment);
}

TEST_CASE("kmeans: duplicate points force empty-cluster reseeding") {
    std::vector<ElementProfile> pts = {prof("a", {0.1, 0.1, 0.1, 0.1, 0.1}),
                                       prof("b", {0.1, 0.1, 0.1, 0.1, 0.1}),
                                       prof("c", {0.9, 0.9, 0.9, 0.9, 0.9})};
    const auto m = kmeans_from(pts, {pts[0].profile, pts[1].profile}, 50, 0.0);
    CHECK(m.inertia == doctest::Approx(0.0));
    CHECK(m.cluster_of("a") != m.cluster_of("c"));
}

TEST_CASE("kmeans: Lloyd monotonicity and assignment optimality") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const auto pts = testsupport::random_profiles(40, rng);
        const auto m = kmeans_fit(pts, opts(4, seed));
        for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
            CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] + 1e-12);
        }
        for (const auto& p : pts) {
            const auto own = *m.cluster_of(p.element_id);
            const double d_own = squared_distance(p.profile, m.centroids[own]);
            for (std::size_t j = 0; j < m.k(); ++j) {
                CHECK(squared_distance(p.profile, m.centroids[j]) >= d_own);
            }
        }
        for (std::size_t j = 0; j < m.k(); ++j) {
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                CHECK(m.prior_means[j][d] == centroid_to_prior(m.centroids[j][d]));
            }
        }
    }
}

TEST_CASE("kmeans: best of all seedings equals the exhaustive optimum") {
    std::mt19937_64 rng(99);
    for (int instance = 0; instance < 6; ++instance) {
        const std::size_t n = 4 + static_cast<std::size_t>(instance % 4);
        const std::size_t k = 2 + static_cast<std::size_t>(instance % 2);
        const auto pts = testsupport::random_profiles(n, rng);
        CHECK(std::abs(testsupport::best_of_all_seedings(pts, k) -
                       testsupport::brute_force_inertia(pts, k)) < 1e-9);
    }
}

TEST_CASE("scale_centroids") {
    ConceptModel m;
    m.centroids = {{0.0, 0.5, 1.0, 0.25, 0.75}};
    const auto s = scale_centroids(m);
    CHECK(s.prior_means[0] == KpiVector{-1.0, 0.0, 1.0, -0.5, 0.5});
    for (std::size_t d = 0; d < kKpiCount; ++d) {
        CHECK(prior_to_centroid(s.prior_means[0][d]) == m.centroids[0][d]);
    }
    m.centroids = {{0.0, 0.5, 1.01, 0.25, 0.75}};
    CHECK_THROWS(scale_centroids(m));
    m.centroids = {{-0.01, 0.5, 1.0, 0.25, 0.75}};
    CHECK_THROWS(scale_centroids(m));
}

TEST_CASE("assign_concept: nearest, tie to lowest index, unseen element") {
    ConceptModel m;
    m.centroids = {{0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}, {0.2, 0, 0, 0, 0},
                   {1, 0, 1, 0, 1},  {0.9, 0.9, 0.9, 0.9, 0.9}, {0.4, 0, 0, 0, 0}};
    m = scale_centroids(m);
    CHECK(assign_concept(m.centroids[3], m) == 3);
    CHECK(assign_concept({0.3, 0, 0, 0, 0}, m) == 2);
    CHECK(assign_concept({0.6, 0.6, 0.6, 0.6, 0.6}, m) == 4);
    CHECK_FALSE(m.cluster_of("never-seen").has_value());
}

TEST_CASE("cluster_quality: variance and order invariance") {
    ConceptModel m;
    m.centroids = {{0.5, 0, 0, 0, 0}};
    m = scale_centroids(m);
    std::vector<ElementProfile> pts = {prof("x", {0, 0, 0, 0, 0}), prof("y", {1, 0, 0, 0, 0})};
    m.assignment = {{"x", 0}, {"y", 0}};
    const auto q = cluster_quality(m, pts);
    CHECK(q.variance[0] == doctest::Approx(0.25));
    CHECK(q.size[0] == 2);
    CHECK(q.inertia == doctest::Approx(0.5));

    std::mt19937_64 rng(4);
    auto many = testsupport::random_profiles(30, rng);
    const auto fit = kmeans_fit(many, opts(3));
    const auto before = cluster_quality(fit, many);
    std::shuffle(many.begin(), many.end(), rng);
    const auto after = cluster_quality(fit, many);
    CHECK(before.variance == after.variance);
    CHECK(before.size == after.size);
    CHECK(before.inertia == after.inertia);
    CHECK(before.inertia == doctest::Approx(fit.inertia));

    std::ostringstream csv;
    write_quality_csv(csv, fit, before);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == kQualityHeader);
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("concept model round trip") {
    std::mt19937_64 rng(5);
    const auto pts = testsupport::random_profiles(12, rng);
    const auto m = kmeans_fit(pts, opts(3));
    std::stringstream ss;
    write_concept_model(ss, m);
    const auto r = read_concept_model(ss);
    CHECK(r.centroids == m.centroids);
    CHECK(r.prior_means == m.prior_means);
    CHECK(r.assignment == m.assignment);
    CHECK(r.inertia == m.inertia);
    std::istringstream bad("conceptvae-concepts v1\nk 2\n0,0\n");
    CHECK_THROWS(read_concept_model(bad));
}
