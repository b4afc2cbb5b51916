#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hpflex/csv.hpp"
#include "hpflex/stats.hpp"
#include "hpflex/time.hpp"

using namespace hpflex;

TEST(Time, ParseFormatRoundTrip) {
    const auto t = parse_iso8601("2021-01-15T06:05:00Z");
    EXPECT_EQ(format_iso8601(t), "2021-01-15T06:05:00Z");
    EXPECT_EQ(format_iso8601(parse_iso8601("2021-01-15 06:05:00+00:00")), "2021-01-15T06:05:00Z");
    EXPECT_EQ(format_iso8601(parse_iso8601("2020-02-29T23:59:59")), "2020-02-29T23:59:59Z");
}

TEST(Time, FractionalSeconds) {
    const auto t = parse_iso8601("2021-01-01T00:00:00.250Z");
    EXPECT_NEAR(hours_between(parse_iso8601("2021-01-01T00:00:00Z"), t) * 3600.0, 0.25, 1e-9);
    EXPECT_EQ(format_iso8601(t), "2021-01-01T00:00:00.250Z");
}

TEST(Time, RejectsBadInput) {
    EXPECT_THROW(parse_iso8601("2021-13-01T00:00:00Z"), ParseError);
    EXPECT_THROW(parse_iso8601("2021-01-01"), ParseError);
    EXPECT_THROW(parse_iso8601("2021-01-01T00:00:00+01:00"), ParseError);
    EXPECT_THROW(parse_iso8601("yesterday"), ParseError);
}

TEST(Time, EpochAnchor) {
    EXPECT_EQ(parse_iso8601("1970-01-01T00:00:00Z").time_since_epoch().count(), 0.0);
    EXPECT_DOUBLE_EQ(parse_iso8601("1970-01-02T00:00:00Z").time_since_epoch().count(), 86400.0);
}

TEST(Csv, HeaderAndFieldCount) {
    std::istringstream ok("a,b\n1,2\n\n3,4\n");
    const auto t = csv::read(ok, {"a", "b"});
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1].fields[0], "3");

    std::istringstream bad_header("a,c\n1,2\n");
    EXPECT_THROW(csv::read(bad_header, {"a", "b"}), ParseError);
    std::istringstream bad_row("a,b\n1,2,3\n");
    EXPECT_THROW(csv::read(bad_row, {"a", "b"}), ParseError);
}

TEST(Csv, Numbers) {
    EXPECT_DOUBLE_EQ(csv::parse_number(" 1.5 ", 2), 1.5);
    EXPECT_TRUE(std::isnan(csv::parse_number("", 2)));
    EXPECT_THROW(csv::parse_number("1.5x", 2), ParseError);
    EXPECT_EQ(csv::fmt(0.1), "0.1");
    EXPECT_EQ(csv::fmt(std::nan("")), "");
}

TEST(Stats, QuantileType7) {
    EXPECT_DOUBLE_EQ(stats::quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
    EXPECT_DOUBLE_EQ(stats::quantile({1, 2, 3, 4}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(stats::quantile({4, 1, 3, 2}, 0.05), 1.15);
    EXPECT_DOUBLE_EQ(stats::quantile({7}, 0.9), 7.0);
}

TEST(Stats, KMeansSeparatesPointMasses) {
    std::vector<double> v;
    for (double x : {-20.0, -0.5, 0.5, 20.0})
        for (int i = 0; i < 10; ++i) v.push_back(x);
    const auto km = stats::kmeans3(v, {-20.0, 0.0, 20.0});
    EXPECT_DOUBLE_EQ(km.centroids[0], -20.0);
    EXPECT_DOUBLE_EQ(km.centroids[1], 0.0);
    EXPECT_DOUBLE_EQ(km.centroids[2], 20.0);
    EXPECT_EQ(km.counts[1], 20u);
}
