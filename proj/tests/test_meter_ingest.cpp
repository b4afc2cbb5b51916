#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hpflex/meter_ingest.hpp"

using namespace hpflex;

namespace {

MeterSeries meter_from(const std::string& body, MeterLoadOptions opt = {}) {
    std::istringstream in("timestamp_utc,energy_kwh\n" + body);
    return parse_meter_csv(in, opt);
}

std::string day_of_rows(int skip) {
    std::ostringstream s;
    const auto t0 = parse_iso8601("2021-01-01T00:00:00Z");
    for (int k = 0; k < 288; ++k) {
        if (k == skip) continue;
        s << format_iso8601(t0 + Seconds(300.0 * k)) << ',' << 0.1 * k << '\n';
    }
    return s.str();
}

TemperatureSeries hourly(std::vector<double> v) {
    TemperatureSeries t;
    t.t0 = parse_iso8601("2021-01-01T00:00:00Z");
    t.step_s = 3600;
    t.theta = std::move(v);
    return t;
}

}  // namespace

TEST(MeterIngest, ThreeRows) {
    const auto m = meter_from("2021-01-01T00:00:00Z,0.0\n2021-01-01T00:05:00Z,0.1\n2021-01-01T00:10:00Z,0.3\n");
    EXPECT_EQ(m.size(), 3u);
    EXPECT_TRUE(m.gaps.empty());
    EXPECT_DOUBLE_EQ(m.e[2], 0.3);
}

TEST(MeterIngest, DecreasingRegister) {
    EXPECT_THROW(meter_from("2021-01-01T00:00:00Z,0.3\n2021-01-01T00:05:00Z,0.2\n2021-01-01T00:10:00Z,0.4\n"),
                 MonotonicityError);
}

TEST(MeterIngest, SingleMissingRowIsAGapRecord) {
    const auto m = meter_from(day_of_rows(100));
    EXPECT_EQ(m.size(), 288u);
    ASSERT_EQ(m.gaps.size(), 1u);
    EXPECT_EQ(m.gaps[0], 100u);
    EXPECT_TRUE(is_missing(m.e[100]));
}

TEST(MeterIngest, EmptyValueIsAGap) {
    const auto m = meter_from("2021-01-01T00:00:00Z,0.0\n2021-01-01T00:05:00Z,\n2021-01-01T00:10:00Z,0.3\n",
                              {300, 0.5, ""});
    ASSERT_EQ(m.gaps.size(), 1u);
    EXPECT_EQ(m.gaps[0], 1u);
}

TEST(MeterIngest, GapFractionLimit) {
    EXPECT_THROW(meter_from("2021-01-01T00:00:00Z,0.0\n2021-01-01T00:15:00Z,0.3\n"), GapError);
}

TEST(MeterIngest, MalformedRows) {
    EXPECT_THROW(meter_from("2021-01-01T00:00:00Z,abc\n"), ParseError);
    EXPECT_THROW(meter_from("2021-01-01T00:00:00Z,0\n2021-01-01T00:07:00Z,1\n"), ParseError);
    EXPECT_THROW(meter_from("2021-01-01T00:00:00Z,0\n2021-01-01T00:05:00Z,1\n"), LengthError);
    std::istringstream wrong("time,energy\n");
    EXPECT_THROW(parse_meter_csv(wrong), ParseError);
}

TEST(PowerFromEnergy, HandArithmetic) {
    MeterSeries m;
    m.e = {0, 0.25, 0.50};
    auto p = power_from_energy(m);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_DOUBLE_EQ(p.p[0], 3.0);
    EXPECT_DOUBLE_EQ(p.p[1], 3.0);

    m.e = {5, 5, 5};
    p = power_from_energy(m);
    EXPECT_EQ(p.p, (std::vector<double>{0, 0}));

    m.e = {0, 0.1, 0.3};
    p = power_from_energy(m);
    EXPECT_NEAR(p.p[0], 1.2, 1e-12);
    EXPECT_NEAR(p.p[1], 2.4, 1e-12);
}

TEST(PowerFromEnergy, GapsAndProductionAreMasked) {
    MeterSeries m;
    m.e = {0, 0.1, kMissing, 0.3, 0.2, 0.4};
    const auto p = power_from_energy(m);
    EXPECT_TRUE(p.valid(0));
    EXPECT_FALSE(p.valid(1));
    EXPECT_FALSE(p.valid(2));
    EXPECT_FALSE(p.valid(3));
    EXPECT_TRUE(p.valid(4));
    EXPECT_TRUE(p.net_negative_flag);
}

TEST(PowerFromEnergy, IntegratesBackToRegister) {
    MeterSeries m;
    m.e = {10.0};
    for (int k = 1; k < 500; ++k) m.e.push_back(m.e.back() + 0.01 * ((k * 37) % 11));
    const auto p = power_from_energy(m);
    double e = m.e[0];
    for (std::size_t k = 0; k < p.size(); ++k) {
        e += p.p[k] * p.step_h();
        EXPECT_NEAR(e, m.e[k + 1], 1e-9);
    }
}

TEST(AlignTemperature, PiecewiseConstantSource) {
    const auto t = hourly({0, 12});
    const auto a = align_temperature(t, t.t0, 1800, 2);
    EXPECT_EQ(a.theta, (std::vector<double>{0, 0}));
}

TEST(AlignTemperature, ConstantIsPreserved) {
    const auto t = hourly(std::vector<double>(10, 5.0));
    const auto a = align_temperature(t, t.t0 + Seconds(420), 300, 50);
    for (double v : a.theta) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(AlignTemperature, WeightedMean) {
    const auto t = hourly({0, 10});
    const auto a = align_temperature(t, t.t0, 7200, 1);
    EXPECT_DOUBLE_EQ(a.theta[0], 5.0);
}

TEST(AlignTemperature, PreservesIntervalMeans) {
    const auto t = hourly({1, 4, -2, 7, 3, 0});
    const auto a = align_temperature(t, t.t0, 900, 24);
    for (int h = 0; h < 6; ++h) {
        double s = 0;
        for (int q = 0; q < 4; ++q) s += a.theta[4 * h + q];
        EXPECT_NEAR(s / 4, t.theta[h], 1e-9);
    }
    EXPECT_NEAR(mean_temperature(a, a.t0, a.end()), mean_temperature(t, t.t0, t.end()), 1e-9);
}

TEST(AlignTemperature, Coverage) {
    const auto t = hourly({0, 10});
    EXPECT_THROW(align_temperature(t, t.t0, 300, 25), CoverageError);
    EXPECT_THROW(align_temperature(t, t.t0 - Seconds(300), 300, 2), CoverageError);
}

TEST(TemperatureCsv, SanityBounds) {
    std::istringstream ok("timestamp_utc,temp_c\n2021-01-01T00:00:00Z,-3.5\n2021-01-01T01:00:00Z,-4\n");
    const auto t = parse_temperature_csv(ok);
    EXPECT_EQ(t.step_s, 3600);
    EXPECT_EQ(t.theta.size(), 2u);
    std::istringstream hot("timestamp_utc,temp_c\n2021-01-01T00:00:00Z,61\n2021-01-01T01:00:00Z,-4\n");
    EXPECT_THROW(parse_temperature_csv(hot), ParseError);
}
