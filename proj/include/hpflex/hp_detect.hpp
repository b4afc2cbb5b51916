#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hpflex/csv.hpp"
#include "hpflex/errors.hpp"
#include "hpflex/meter_ingest.hpp"
#include "hpflex/stats.hpp"
#include "hpflex/time.hpp"

namespace hpflex {

// Differences below 1 mW are float dust from the register subtraction.
constexpr double kDelta2FloorKw = 1e-6;

// values[k] = p[k] - p[k-2]; values[0], values[1] and any pair touching a
// masked interval are NaN.
struct Delta2Series {
    std::vector<double> values;
    std::vector<std::size_t> extrema_idx;
};

struct SwitchThresholds {
    double delta2_on = 0.0;   // kW, > 0
    double delta2_off = 0.0;  // kW, < 0
};

enum class SwitchKind { On, Off };

inline const char* to_string(SwitchKind k) { return k == SwitchKind::On ? "on" : "off"; }

struct SwitchEvent {
    SwitchKind kind = SwitchKind::On;
    std::size_t k = 0;
    Timestamp t_hat{};
};

struct HeatingCycle {
    Timestamp t_off{};
    Timestamp t_on{};
    Timestamp t_off_next{};
    double d_on = 0.0;   // h
    double d_off = 0.0;  // h
    double theta_mean_off = kMissing;
    double theta_mean_cycle = kMissing;
};

struct DetectionParams {
    double min_on_h = 0.25;
    double min_off_h = 0.25;
};

namespace detail {

// A plateau [first, last] of equal values is an extremum when it is strictly
// above (below) every existing neighbour; at least one neighbour must exist.
inline std::vector<std::size_t> local_extrema(const std::vector<double>& v, std::size_t begin) {
    std::vector<std::size_t> out;
    std::size_t i = begin;
    while (i < v.size()) {
        if (is_missing(v[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
        const bool has_left = i > begin && !is_missing(v[i - 1]);
        const bool has_right = j + 1 < v.size() && !is_missing(v[j + 1]);
        if (has_left || has_right) {
            const bool above = (!has_left || v[i] > v[i - 1]) && (!has_right || v[i] > v[j + 1]);
            const bool below = (!has_left || v[i] < v[i - 1]) && (!has_right || v[i] < v[j + 1]);
            if (above || below) out.push_back(i);
        }
        i = j + 1;
    }
    return out;
}

}  // namespace detail

inline Delta2Series delta2(const PowerSeries& p) {
    if (p.size() < 3) throw LengthError("delta2 needs at least 3 power values");
    Delta2Series d;
    d.values.assign(p.size(), kMissing);
    for (std::size_t k = 2; k < p.size(); ++k)
        if (p.valid(k) && p.valid(k - 2)) {
            const double v = p.p[k] - p.p[k - 2];
            d.values[k] = std::abs(v) < kDelta2FloorKw ? 0.0 : v;
        }
    d.extrema_idx = detail::local_extrema(d.values, 2);
    return d;
}

// Cluster the extrema into switch-off / noise / switch-on groups and take
// the inner quantiles of the outer clusters as detection thresholds.
inline SwitchThresholds cluster_thresholds(const Delta2Series& d2) {
    std::vector<double> ext;
    ext.reserve(d2.extrema_idx.size());
    for (auto k : d2.extrema_idx) ext.push_back(d2.values[k]);
    if (ext.size() < 3) throw DegenerateClusterError("fewer than 3 extrema in delta2 series");
    const auto [mn, mx] = std::minmax_element(ext.begin(), ext.end());
    if (!(*mn < 0.0) || !(*mx > 0.0))
        throw DegenerateClusterError("delta2 extrema lack positive or negative values");

    const auto km = stats::kmeans3(ext, {*mn, 0.0, *mx});
    if (km.counts[0] == 0 || km.counts[1] == 0 || km.counts[2] == 0)
        throw DegenerateClusterError("k-means produced an empty cluster");
    if (!(km.centroids[0] < 0.0) || !(km.centroids[2] > 0.0))
        throw DegenerateClusterError("switch clusters do not separate by sign");

    std::vector<double> off_vals, on_vals;
    for (std::size_t i = 0; i < ext.size(); ++i) {
        if (km.labels[i] == 0) off_vals.push_back(ext[i]);
        if (km.labels[i] == 2) on_vals.push_back(ext[i]);
    }
    return {stats::quantile(on_vals, 0.05), stats::quantile(off_vals, 0.95)};
}

// Continuous switching time in seconds since the series start, from the
// average-power geometry of intervals k-2, k-1, k.
inline double estimate_switch_time(const PowerSeries& p, std::size_t k) {
    if (k < 2 || k >= p.size()) throw LengthError("switch index out of range");
    const double pk = p.p[k], pk1 = p.p[k - 1], pk2 = p.p[k - 2];
    if (is_missing(pk) || is_missing(pk1) || is_missing(pk2))
        throw UndefinedEdge("switch time needs three unmasked intervals");
    if (pk == pk2) throw UndefinedEdge("p_k == p_{k-2}");
    const double ts = p.step_s;
    const double kd = static_cast<double>(k);
    const double t = ts * (kd - 1.0) + ts * (pk - pk1) / (pk - pk2);
    return std::clamp(t, ts * (kd - 1.0), ts * (kd + 1.0));
}

// Candidate edges are the delta2 extrema crossing a threshold. A candidate is
// accepted only if it flips the tracked state and the phase it ends lasted at
// least the applicable minimum.
inline std::vector<SwitchEvent> detect_switch_events(const PowerSeries& p, const Delta2Series& d2,
                                                     const SwitchThresholds& th,
                                                     const DetectionParams& params = {}) {
    if (!(th.delta2_on > 0.0 && th.delta2_off < 0.0))
        throw Error("invalid thresholds: need delta2_on > 0 > delta2_off");
    std::vector<SwitchEvent> events;
    for (auto k : d2.extrema_idx) {
        const double v = d2.values[k];
        std::optional<SwitchKind> kind;
        if (v >= th.delta2_on) kind = SwitchKind::On;
        else if (v <= th.delta2_off) kind = SwitchKind::Off;
        if (!kind) continue;

        double t_rel;
        try {
            t_rel = estimate_switch_time(p, k);
        } catch (const UndefinedEdge&) {
            if (!(p.valid(k) && p.valid(k - 1) && p.valid(k - 2))) continue;
            t_rel = p.step_s * static_cast<double>(k);
        }
        const Timestamp t_hat = p.t0 + Seconds(t_rel);

        if (!events.empty()) {
            const auto& last = events.back();
            if (last.kind == *kind) continue;
            const double min_h = last.kind == SwitchKind::On ? params.min_on_h : params.min_off_h;
            if (hours_between(last.t_hat, t_hat) < min_h) continue;
        }
        events.push_back({*kind, k, t_hat});
    }
    return events;
}

inline std::vector<SwitchEvent> detect_switch_events(const PowerSeries& p, const SwitchThresholds& th,
                                                     const DetectionParams& params = {}) {
    return detect_switch_events(p, delta2(p), th, params);
}

// True if any masked power interval overlaps [a, b).
inline bool overlaps_mask(const PowerSeries& p, Timestamp a, Timestamp b) {
    const double lo = (a - p.t0).count() / p.step_s;
    const double hi = (b - p.t0).count() / p.step_s;
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(lo)));
    const auto last = std::min(p.size(), static_cast<std::size_t>(std::max(0.0, std::ceil(hi))));
    for (std::size_t k = first; k < last; ++k)
        if (!p.valid(k)) return true;
    return false;
}

// One cycle per consecutive (off, on, off) triple. If `mask` is given, cycles
// overlapping masked intervals are dropped since edges may be missing there.
inline std::vector<HeatingCycle> cycles_from_events(const std::vector<SwitchEvent>& events,
                                                    const TemperatureSeries& theta,
                                                    const PowerSeries* mask = nullptr) {
    std::vector<HeatingCycle> cycles;
    for (std::size_t i = 0; i + 2 < events.size(); ++i) {
        const auto& a = events[i];
        const auto& b = events[i + 1];
        const auto& c = events[i + 2];
        if (a.kind != SwitchKind::Off || b.kind != SwitchKind::On || c.kind != SwitchKind::Off) continue;
        HeatingCycle cy;
        cy.t_off = a.t_hat;
        cy.t_on = b.t_hat;
        cy.t_off_next = c.t_hat;
        cy.d_off = hours_between(cy.t_off, cy.t_on);
        cy.d_on = hours_between(cy.t_on, cy.t_off_next);
        if (!(cy.d_off > 0 && cy.d_on > 0)) continue;
        if (mask && overlaps_mask(*mask, cy.t_off, cy.t_off_next)) continue;
        try {
            cy.theta_mean_off = mean_temperature(theta, cy.t_off, cy.t_on);
            cy.theta_mean_cycle = mean_temperature(theta, cy.t_off, cy.t_off_next);
        } catch (const CoverageError&) {
            cy.theta_mean_off = cy.theta_mean_cycle = kMissing;
        }
        cycles.push_back(cy);
    }
    return cycles;
}

// Rated power as half the spread between the median on-edge and the median
// off-edge delta2 value.
inline double estimate_rated_power(const Delta2Series& d2, const std::vector<std::size_t>& on_idx,
                                   const std::vector<std::size_t>& off_idx) {
    if (on_idx.empty() || off_idx.empty()) throw EmptySetError("rated power needs on and off edges");
    std::vector<double> on, off;
    for (auto k : on_idx) on.push_back(d2.values.at(k));
    for (auto k : off_idx) off.push_back(d2.values.at(k));
    return (stats::median(on) - stats::median(off)) / 2.0;
}

inline double estimate_rated_power(const Delta2Series& d2, const std::vector<SwitchEvent>& events) {
    std::vector<std::size_t> on, off;
    for (const auto& e : events) (e.kind == SwitchKind::On ? on : off).push_back(e.k);
    return estimate_rated_power(d2, on, off);
}

struct SwitchingAnalysis {
    Delta2Series d2;
    SwitchThresholds thresholds;
    std::vector<SwitchEvent> events;
    double p_r = 0.0;
};

inline SwitchingAnalysis analyze_switching(const PowerSeries& p, const DetectionParams& params = {}) {
    SwitchingAnalysis a;
    a.d2 = delta2(p);
    a.thresholds = cluster_thresholds(a.d2);
    a.events = detect_switch_events(p, a.d2, a.thresholds, params);
    a.p_r = estimate_rated_power(a.d2, a.events);
    return a;
}

inline void write_events_csv(std::ostream& out, const std::vector<SwitchEvent>& events) {
    out << "kind,k,t_hat_iso\n";
    for (const auto& e : events) out << to_string(e.kind) << ',' << e.k << ',' << format_iso8601(e.t_hat) << '\n';
}

inline void write_cycles_csv(std::ostream& out, const std::vector<HeatingCycle>& cycles) {
    out << "t_off,t_on,t_off_next,d_on_h,d_off_h,theta_off_c,theta_cycle_c\n";
    for (const auto& c : cycles)
        out << format_iso8601(c.t_off) << ',' << format_iso8601(c.t_on) << ',' << format_iso8601(c.t_off_next)
            << ',' << csv::fmt(c.d_on) << ',' << csv::fmt(c.d_off) << ',' << csv::fmt(c.theta_mean_off) << ','
            << csv::fmt(c.theta_mean_cycle) << '\n';
}

}  // namespace hpflex
