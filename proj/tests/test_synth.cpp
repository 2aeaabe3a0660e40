#include <doctest.h>

#include <set>
#include <sstream>

#include "conceptvae/synth.hpp"

using namespace conceptvae;

namespace {

SynthConfig small_config(double rate) {
    SynthConfig c;
    c.element_count = 12;
    c.days = 40;
    c.cluster_profiles = default_cluster_profiles(3, 5);
    c.anomaly_rate = rate;
    c.rng_seed = 21;
    return c;
}

}  // namespace

TEST_CASE("rate zero gives no labels") {
    const auto d = synth_generate(small_config(0.0));
    CHECK(d.labels.empty());
    CHECK(d.records.size() == 12 * 40);
    CHECK(d.element_cluster.size() == 12);
}

TEST_CASE("same seed gives identical datasets, different seed differs") {
    const auto a = synth_generate(small_config(0.05));
    const auto b = synth_generate(small_config(0.05));
    CHECK(a.records == b.records);
    CHECK(a.labels == b.labels);
    auto other = small_config(0.05);
    other.rng_seed = 22;
    CHECK_FALSE(synth_generate(other).records == a.records);
}

TEST_CASE("derived KPIs hold on every record") {
    const auto d = synth_generate(small_config(0.05));
    for (const auto& r : d.records) {
        CHECK(r.kpis[1] == r.kpis[2] + r.kpis[3]);
        CHECK(r.kpis[0] == doctest::Approx(100.0 * r.kpis[1] / std::max(r.kpis[4], 1.0)));
        for (double v : r.kpis) CHECK(v >= 0.0);
    }
    KpiVector k{0, 0, 1, 99, 446};
    derive_kpis(k);
    CHECK(k[1] == 100);
    CHECK(k[0] == doctest::Approx(100.0 * 100 / 446));
    KpiVector zero{0, 0, 1, 1, 0};
    derive_kpis(zero);
    CHECK(zero[0] == 200.0);
}

TEST_CASE("injected cells differ from the counterfactual by the multiplier") {
    const auto clean = synth_generate(small_config(0.0));
    const auto dirty = synth_generate(small_config(0.05));
    REQUIRE(clean.records.size() == dirty.records.size());
    CHECK(dirty.labels.size() == static_cast<std::size_t>(std::lround(0.05 * 12 * 40)));

    std::set<std::pair<std::string, std::int64_t>> labelled;
    for (const auto& l : dirty.labels) {
        CHECK(l.kpi_index >= 2);
        CHECK(l.kpi_index <= 4);
        labelled.insert({l.element_id, l.date});
    }
    CHECK(labelled.size() == dirty.labels.size());
    for (std::size_t i = 0; i < clean.records.size(); ++i) {
        const auto& c = clean.records[i];
        const auto& d = dirty.records[i];
        REQUIRE(c.element_id == d.element_id);
        REQUIRE(c.date == d.date);
        if (!labelled.count({d.element_id, d.date})) {
            CHECK(c.kpis == d.kpis);
        }
    }
    for (const auto& l : dirty.labels) {
        for (std::size_t i = 0; i < clean.records.size(); ++i) {
            if (clean.records[i].element_id == l.element_id && clean.records[i].date == l.date) {
                CHECK(dirty.records[i].kpis[l.kpi_index] ==
                      clean.records[i].kpis[l.kpi_index] * 10.0);
            }
        }
    }
}

TEST_CASE("anomalies respect the first eligible day") {
    auto c = small_config(0.1);
    c.anomaly_first_day = 31;
    const auto d = synth_generate(c);
    CHECK(d.labels.size() == static_cast<std::size_t>(std::lround(0.1 * 12 * 10)));
    for (const auto& l : d.labels) CHECK(l.date >= 31);
}

TEST_CASE("invalid configs are rejected") {
    auto c = small_config(0.0);
    c.anomaly_rate = 1.5;
    CHECK_THROWS(synth_generate(c));
    c = small_config(0.0);
    c.element_count = 0;
    CHECK_THROWS(synth_generate(c));
    c = small_config(0.0);
    c.anomaly_magnitude = 1.0;
    CHECK_THROWS(synth_generate(c));
    c = small_config(0.0);
    c.cluster_profiles.clear();
    CHECK_THROWS(synth_generate(c));
}

TEST_CASE("labels round trip") {
    const auto d = synth_generate(small_config(0.05));
    std::stringstream ss;
    write_labels(ss, d.labels);
    CHECK(read_labels(ss) == d.labels);
    CHECK(synth_element_id(7) == "E0007");
}
