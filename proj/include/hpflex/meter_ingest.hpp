#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hpflex/csv.hpp"
#include "hpflex/errors.hpp"
#include "hpflex/time.hpp"

namespace hpflex {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// Cumulative energy register of one building on a fixed grid. Missing reads
// are NaN and listed in `gaps`; they are never interpolated.
struct MeterSeries {
    std::string building_id;
    Timestamp t0{};
    double step_s = 300.0;
    std::vector<double> e;           // kWh
    std::vector<std::size_t> gaps;   // indices into e that are missing

    std::size_t size() const { return e.size(); }
    Timestamp time_at(std::size_t k) const { return t0 + Seconds(step_s * static_cast<double>(k)); }
};

// Interval-average power. p[k] covers [t0 + k*step, t0 + (k+1)*step).
// Masked intervals (gaps, net-negative production) are NaN.
struct PowerSeries {
    Timestamp t0{};
    double step_s = 300.0;
    std::vector<double> p;  // kW
    bool net_negative_flag = false;

    std::size_t size() const { return p.size(); }
    double step_h() const { return step_s / kSecondsPerHour; }
    bool valid(std::size_t k) const { return k < p.size() && !is_missing(p[k]); }
    Timestamp time_at(std::size_t k) const { return t0 + Seconds(step_s * static_cast<double>(k)); }
};

// Outdoor air temperature, piecewise constant over each sample's interval.
struct TemperatureSeries {
    Timestamp t0{};
    double step_s = 3600.0;
    std::vector<double> theta;  // degC, NaN when missing

    std::size_t size() const { return theta.size(); }
    Timestamp end() const { return t0 + Seconds(step_s * static_cast<double>(theta.size())); }
};

inline constexpr double kThetaMin = -60.0;
inline constexpr double kThetaMax = 60.0;

struct MeterLoadOptions {
    double step_s = 300.0;
    double max_gap_fraction = 0.05;
    std::string building_id;  // defaults to the file stem
};

namespace detail {

inline std::size_t grid_index(Timestamp t0, Timestamp t, double step_s, std::size_t line_no) {
    const double offset = (t - t0).count() / step_s;
    const double k = std::round(offset);
    if (std::abs(offset - k) > 1e-6 || k < 0)
        throw ParseError("row " + std::to_string(line_no) + ": timestamp not on the " +
                         std::to_string(step_s) + " s grid or out of order");
    return static_cast<std::size_t>(k);
}

}  // namespace detail

inline MeterSeries parse_meter_csv(std::istream& in, const MeterLoadOptions& opt = {}) {
    if (!(opt.step_s > 0)) throw ParseError("step_s must be positive");
    const auto table = csv::read(in, {"timestamp_utc", "energy_kwh"});
    MeterSeries m;
    m.building_id = opt.building_id;
    m.step_s = opt.step_s;
    if (table.rows.empty()) throw LengthError("meter file has no readings");

    m.t0 = parse_iso8601(table.rows.front().fields[0]);
    std::size_t next = 0;
    for (const auto& row : table.rows) {
        const auto k = detail::grid_index(m.t0, parse_iso8601(row.fields[0]), m.step_s, row.line_no);
        if (k < next)
            throw ParseError("row " + std::to_string(row.line_no) + ": duplicate or decreasing timestamp");
        for (; next < k; ++next) {
            m.e.push_back(kMissing);
            m.gaps.push_back(next);
        }
        const double e = csv::parse_number(row.fields[1], row.line_no);
        if (is_missing(e)) m.gaps.push_back(next);
        m.e.push_back(e);
        ++next;
    }

    double last = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.e.size(); ++k) {
        if (is_missing(m.e[k])) continue;
        if (m.e[k] < last)
            throw MonotonicityError("energy register decreases at index " + std::to_string(k) + " (" +
                                    csv::fmt(last) + " -> " + csv::fmt(m.e[k]) + " kWh)");
        last = m.e[k];
    }
    if (m.e.size() < 3) throw LengthError("meter series needs at least 3 readings");
    const double gap_fraction = static_cast<double>(m.gaps.size()) / static_cast<double>(m.e.size());
    if (gap_fraction > opt.max_gap_fraction)
        throw GapError("gap fraction " + csv::fmt(gap_fraction) + " exceeds limit " +
                       csv::fmt(opt.max_gap_fraction));
    return m;
}

inline MeterSeries load_meter_csv(const std::filesystem::path& path, MeterLoadOptions opt = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open meter file " + path.string());
    if (opt.building_id.empty()) opt.building_id = path.stem().string();
    return parse_meter_csv(in, opt);
}

inline TemperatureSeries parse_temperature_csv(std::istream& in) {
    const auto table = csv::read(in, {"timestamp_utc", "temp_c"});
    if (table.rows.size() < 2) throw LengthError("temperature file needs at least 2 rows");
    TemperatureSeries t;
    t.t0 = parse_iso8601(table.rows[0].fields[0]);
    t.step_s = (parse_iso8601(table.rows[1].fields[0]) - t.t0).count();
    if (!(t.step_s > 0)) throw ParseError("temperature timestamps must increase");
    std::size_t next = 0;
    for (const auto& row : table.rows) {
        const auto k = detail::grid_index(t.t0, parse_iso8601(row.fields[0]), t.step_s, row.line_no);
        if (k < next)
            throw ParseError("row " + std::to_string(row.line_no) + ": duplicate or decreasing timestamp");
        for (; next < k; ++next) t.theta.push_back(kMissing);
        const double v = csv::parse_number(row.fields[1], row.line_no);
        if (!is_missing(v) && (v < kThetaMin || v > kThetaMax))
            throw ParseError("row " + std::to_string(row.line_no) + ": temperature " + csv::fmt(v) +
                             " degC outside sanity bounds");
        t.theta.push_back(v);
        ++next;
    }
    return t;
}

inline TemperatureSeries load_temperature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open temperature file " + path.string());
    return parse_temperature_csv(in);
}

// p_k = (e_{k+1} - e_k) / t_s in kW. Pairs touching a gap are masked, as are
// net-negative intervals (production); the latter sets net_negative_flag.
inline PowerSeries power_from_energy(const MeterSeries& m) {
    PowerSeries out;
    out.t0 = m.t0;
    out.step_s = m.step_s;
    if (m.e.size() < 2) return out;
    const double step_h = m.step_s / kSecondsPerHour;
    out.p.resize(m.e.size() - 1, kMissing);
    for (std::size_t k = 0; k + 1 < m.e.size(); ++k) {
        if (is_missing(m.e[k]) || is_missing(m.e[k + 1])) continue;
        const double p = (m.e[k + 1] - m.e[k]) / step_h;
        if (p < 0) {
            out.net_negative_flag = true;
            continue;
        }
        out.p[k] = p;
    }
    return out;
}

// Time-weighted mean of the temperature over [from, to). Missing samples are
// excluded from the weights. NaN if nothing inside the window is known.
inline double mean_temperature(const TemperatureSeries& t, Timestamp from, Timestamp to) {
    if (!(to > from)) throw CoverageError("empty averaging window");
    if (from < t.t0 - Seconds(1e-6) || to > t.end() + Seconds(1e-6))
        throw CoverageError("temperature series does not cover " + format_iso8601(from) + " .. " +
                            format_iso8601(to));
    const double a = (from - t.t0).count() / t.step_s;
    const double b = (to - t.t0).count() / t.step_s;
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(a)));
    const auto last = std::min(t.theta.size(), static_cast<std::size_t>(std::ceil(b)));
    double weighted = 0.0;
    double weight = 0.0;
    for (std::size_t i = first; i < last; ++i) {
        const double lo = std::max(a, static_cast<double>(i));
        const double hi = std::min(b, static_cast<double>(i + 1));
        if (hi <= lo || is_missing(t.theta[i])) continue;
        weighted += (hi - lo) * t.theta[i];
        weight += hi - lo;
    }
    return weight > 0 ? weighted / weight : kMissing;
}

inline TemperatureSeries align_temperature(const TemperatureSeries& t, Timestamp grid_t0, double grid_step_s,
                                           std::size_t n) {
    TemperatureSeries out;
    out.t0 = grid_t0;
    out.step_s = grid_step_s;
    const Timestamp grid_end = grid_t0 + Seconds(grid_step_s * static_cast<double>(n));
    if (grid_t0 < t.t0 - Seconds(1e-6) || grid_end > t.end() + Seconds(1e-6))
        throw CoverageError("temperature series " + format_iso8601(t.t0) + " .. " + format_iso8601(t.end()) +
                            " does not span the meter grid " + format_iso8601(grid_t0) + " .. " +
                            format_iso8601(grid_end));
    out.theta.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Timestamp a = grid_t0 + Seconds(grid_step_s * static_cast<double>(k));
        out.theta.push_back(mean_temperature(t, a, a + Seconds(grid_step_s)));
    }
    return out;
}

inline TemperatureSeries align_temperature(const TemperatureSeries& t, const PowerSeries& grid) {
    return align_temperature(t, grid.t0, grid.step_s, grid.size());
}

}  // namespace hpflex
