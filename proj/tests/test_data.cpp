#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "conceptvae/data.hpp"

using namespace conceptvae;

namespace {

std::string csv(const std::string& body) { return std::string(kRecordHeader) + "\n" + body; }

Dataset parse(const std::string& text) {
    std::istringstream in(text);
    return parse_records(in);
}

KpiRecord rec(std::string id, std::int64_t date, KpiVector k = {1, 2, 1, 1, 100}) {
    return KpiRecord{std::move(id), date, k};
}

Dataset days(const std::string& id, std::int64_t first, std::int64_t count) {
    Dataset d;
    for (std::int64_t i = 0; i < count; ++i) {
        d.push_back(rec(id, first + i, {double(i), double(i), 0, double(i), 10}));
    }
    return d;
}

NormStats unit_stats() {
    NormStats s;
    s.min = {0, 0, 0, 0, 0};
    s.max = {1000, 1000, 1000, 1000, 1000};
    return s;
}

}  // namespace

TEST_CASE("load: header only gives an empty dataset") {
    CHECK(parse(csv("")).empty());
    CHECK(parse(csv("\n\n")).empty());
}

TEST_CASE("load: reported row parses field for field") {
    const auto d = parse(csv("A,1,28.82,100,1,99,446\n"));
    REQUIRE(d.size() == 1);
    CHECK(d[0].element_id == "A");
    CHECK(d[0].date == 1);
    CHECK(d[0].kpis == KpiVector{28.82, 100, 1, 99, 446});
}

TEST_CASE("load: ISO dates become day ordinals, row order preserved, CRLF accepted") {
    const auto d = parse(csv("B,2024-01-02,1,2,1,1,10\r\nA,2024-01-01,1,2,1,1,10\r\n"));
    REQUIRE(d.size() == 2);
    CHECK(d[0].element_id == "B");
    CHECK(d[0].date - d[1].date == 1);
    CHECK(parse_date("1970-01-01") == 0);
    CHECK(parse_date("42") == 42);
    CHECK_THROWS_AS(parse_date("2024-13-01"), std::invalid_argument);
    CHECK_THROWS_AS(parse_date("yesterday"), std::invalid_argument);
}

TEST_CASE("load: errors") {
    CHECK_THROWS_AS(parse(csv("A,1,1,-1,0,0,10\n")), ValidationError);
    CHECK_THROWS_AS(parse(csv("A,1,1,2,1,1,10\nA,1,1,2,1,1,10\n")), ValidationError);
    CHECK_THROWS_AS(parse(csv("A,1,1,2,1,1,nan\n")), ValidationError);
    CHECK_THROWS_AS(parse("wrong,header\n"), ParseError);
    CHECK_THROWS_AS(parse(""), ParseError);
    try {
        parse(csv("A,1,1,2,1,1,10\nA,2,1,2,1\n"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    try {
        parse(csv("A,1,x,2,1,1,10\n"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS(load_records("/nonexistent/definitely/missing.csv"));
}

TEST_CASE("load/serialize round trip") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    Dataset d;
    for (int e = 0; e < 4; ++e) {
        for (int t = 0; t < 7; ++t) {
            d.push_back(rec("el" + std::to_string(e), t * 3 - 5, {u(rng), u(rng), u(rng), 0, 1e-300}));
        }
    }
    std::stringstream ss;
    write_records(ss, d);
    CHECK(parse_records(ss) == d);

    const auto path = std::filesystem::temp_directory_path() / "conceptvae_test_data" / "r.csv";
    save_records(path, d);
    CHECK(load_records(path) == d);
    std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("fit_normalization") {
    const Dataset d = {rec("a", 1, {0, 2, 3, 0, 0}), rec("a", 2, {5, 4, 3, 0, 0}),
                       rec("a", 3, {10, 3, 3, 0, 0})};
    const auto s = fit_normalization(d);
    CHECK(s.min[0] == 0);
    CHECK(s.max[0] == 10);
    CHECK(s.min[1] == 2);
    CHECK(s.max[1] == 4);
    CHECK(s.min[2] == 3);
    CHECK(s.max[2] == 3);
    CHECK(s.degenerate[2]);
    CHECK_FALSE(s.degenerate[0]);
    CHECK_THROWS(fit_normalization(Dataset{}));
}

TEST_CASE("normalize: examples, clipping, degenerate") {
    NormStats s;
    s.min = {0, 0, 3, 0, 0};
    s.max = {10, 10, 3, 10, 10};
    s.degenerate = {false, false, true, false, false};
    const auto v = normalize(KpiVector{5, 15, 3, 0, 10}, s);
    CHECK(v[0] == 0.5);
    CHECK(v[1] == 1.0);
    CHECK(v[2] == 0.0);
    CHECK(v[3] == 0.0);
    CHECK(v[4] == 1.0);
    CHECK(normalize(KpiVector{-4, 1e9, 100, -1e9, 7}, s)[0] == 0.0);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-50.0, 60.0);
    for (int i = 0; i < 1000; ++i) {
        const KpiVector x{u(rng), u(rng), u(rng), u(rng), u(rng)};
        const auto y = normalize(x, s);
        for (std::size_t k = 0; k < kKpiCount; ++k) {
            CHECK(y[k] >= 0.0);
            CHECK(y[k] <= 1.0);
            if (!s.degenerate[k] && x[k] <= s.min[k]) CHECK(y[k] == 0.0);
            if (!s.degenerate[k] && x[k] >= s.max[k]) CHECK(y[k] == 1.0);
        }
    }
}

TEST_CASE("norm stats round trip") {
    const Dataset d = {rec("a", 1, {0.1, 2, 3, 0, 0}), rec("a", 2, {5.3, 4, 3, 0, 1.0 / 3})};
    const auto s = fit_normalization(d);
    std::stringstream ss;
    write_norm_stats(ss, s);
    CHECK(read_norm_stats(ss) == s);
    std::istringstream bad("conceptvae-normstats v9\n");
    CHECK_THROWS(read_norm_stats(bad));
}

TEST_CASE("window_sequences: counts and contents") {
    const auto stats = unit_stats();
    CHECK(window_sequences(days("a", 1, 100), 100, 1, stats).size() == 1);
    CHECK(window_sequences(days("a", 1, 99), 100, 1, stats).empty());

    const auto w = window_sequences(days("a", 1, 150), 100, 50, stats);
    REQUIRE(w.size() == 2);
    CHECK(w[0].start_date == 1);
    CHECK(w[1].start_date == 51);
    CHECK(w[1].date_at(99) == 150);
    CHECK(w[1].length() == 100);
    CHECK(w[1].values(0, 0) == doctest::Approx(50.0 / 1000.0));
    CHECK(w[1].raw[0][0] == 50.0);
    CHECK(w[0].element_id == "a");

    CHECK_THROWS(window_sequences(days("a", 1, 5), 0, 1, stats));
    CHECK_THROWS(window_sequences(days("a", 1, 5), 2, 0, stats));
}

TEST_CASE("window_sequences: gaps split runs, no padding") {
    auto d = days("a", 1, 10);
    auto tail = days("a", 15, 6);
    d.insert(d.end(), tail.begin(), tail.end());
    auto other = days("b", 1, 3);
    d.insert(d.begin(), other.begin(), other.end());
    const auto w = window_sequences(d, 5, 1, unit_stats());
    CHECK(w.size() == 6 + 2);
    for (const auto& x : w) {
        CHECK(x.element_id == "a");
        CHECK(x.length() == 5);
        CHECK(x.values.minCoeff() >= 0.0);
        CHECK(x.values.maxCoeff() <= 1.0);
    }
    const auto runs = consecutive_runs(d);
    REQUIRE(runs.size() == 3);
    CHECK(runs[0].element_id == "b");
    CHECK(runs[1].records.size() == 10);
    CHECK(runs[2].records.front()->date == 15);

    const auto whole = run_sequences(d, unit_stats(), 4);
    REQUIRE(whole.size() == 2);
    CHECK(whole[0].length() == 10);
    CHECK(whole[1].length() == 6);
}

TEST_CASE("window count property") {
    const auto stats = unit_stats();
    for (std::size_t L = 0; L <= 40; L += 3) {
        for (std::size_t length : {1u, 5u, 12u, 40u}) {
            for (std::size_t stride : {1u, 2u, 7u}) {
                const std::size_t expected =
                    L < length ? 0 : (L - length) / stride + 1;
                CHECK(window_count(L, length, stride) == expected);
                const auto d = days("z", 100, static_cast<std::int64_t>(L));
                CHECK(window_sequences(d, length, stride, stats).size() == expected);
            }
        }
    }
}

TEST_CASE("kpi names") {
    CHECK(kpi_column(0) == "call_drop_rate");
    CHECK(kpi_column(4) == "total_call_attempts");
    CHECK(kpi_display_name(3) == "MME Drops");
    CHECK(kpi_display_name(2) == "eNodeB Drops");
}
