#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpflex/errors.hpp"
#include "hpflex/meter_ingest.hpp"
#include "hpflex/simulate.hpp"
#include "hpflex/stats.hpp"
#include "hpflex/time.hpp"

namespace hpflex {

struct BaselineResult {
    double alpha = 1.0;
    Timestamp t0{};  // start of the scored window
    double step_s = 300.0;
    std::vector<double> baseline;   // kW
    std::vector<double> deviation;  // controlled - baseline, kW
};

struct EventPredictions {
    double reduction_kw = 0.0;
    double peak_rebound_kw = 0.0;
};

struct PredictionReport {
    double predicted_reduction_kw = 0.0;
    double realized_avg_reduction_kw = 0.0;
    double predicted_peak_rebound_kw = 0.0;
    double realized_peak_rebound_kw = 0.0;
    double ape_reduction = kMissing;  // fraction, NaN when undefined
    double ape_rebound = kMissing;
    BaselineResult baseline;
};

struct ScoreOptions {
    double reference_window_h = 8.0;
    double rebound_horizon_h = 3.0;
    double lambda = 100.0;
};

// Least-squares gain of ref onto ctrl.
inline double scale_reference(std::span<const double> ctrl, std::span<const double> ref) {
    if (ctrl.size() != ref.size()) throw LengthError("scale_reference: length mismatch");
    double num = 0, den = 0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        if (is_missing(ctrl[k]) || is_missing(ref[k])) continue;
        num += ctrl[k] * ref[k];
        den += ref[k] * ref[k];
    }
    if (!(den > 0)) throw ZeroReferenceError("reference group has no energy in the scaling window");
    return num / den;
}

namespace detail {

// Index of the interval starting at t; throws CoverageError if outside.
inline std::size_t interval_index(const PowerSeries& p, Timestamp t, const char* what) {
    const double pos = (t - p.t0).count() / p.step_s;
    const double k = std::round(pos);
    if (k < -1e-9 || k > static_cast<double>(p.size()))
        throw CoverageError(std::string("series does not cover ") + what + " at " + format_iso8601(t));
    return static_cast<std::size_t>(k);
}

inline void require_same_grid(const PowerSeries& a, const PowerSeries& b) {
    if (a.step_s != b.step_s || std::abs((a.t0 - b.t0).count()) > 1e-6)
        throw Error("controlled and reference series must share a grid");
}

}  // namespace detail

// Fits alpha over the window_h hours immediately before `event_start`.
inline double scale_reference(const PowerSeries& ctrl, const PowerSeries& ref, Timestamp event_start,
                              double window_h = 8.0) {
    detail::require_same_grid(ctrl, ref);
    const auto hi = detail::interval_index(ctrl, event_start, "event start");
    const auto lo = detail::interval_index(ctrl, add_hours(event_start, -window_h), "reference window");
    if (hi > std::min(ctrl.size(), ref.size())) throw CoverageError("series end before event start");
    return scale_reference(std::span(ctrl.p).subspan(lo, hi - lo), std::span(ref.p).subspan(lo, hi - lo));
}

// Whittaker smoother with a second-difference penalty:
// (I + lambda D'D) z = y, solved as a banded LDL' system.
inline std::vector<double> smooth_baseline(std::span<const double> y, double lambda = 100.0) {
    const std::size_t n = y.size();
    if (n < 5) throw LengthError("smoother needs at least 5 samples");
    if (!(lambda >= 0)) throw Error("lambda must be non-negative");
    for (double v : y)
        if (is_missing(v)) throw Error("smoother input contains missing values");

    // Rows of D'D: diagonals c0 (main), c1 (first off), c2 (second off).
    std::vector<double> c0(n), c1(n, 0.0), c2(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 6.0;
        if (i == 0 || i == n - 1) d = 1.0;
        else if (i == 1 || i == n - 2) d = 5.0;
        c0[i] = 1.0 + lambda * d;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) c1[i] = lambda * ((i == 0 || i == n - 2) ? -2.0 : -4.0);
    for (std::size_t i = 0; i + 2 < n; ++i) c2[i] = lambda;

    // LDL' with unit lower band (l1, l2).
    std::vector<double> d(n), l1(n, 0.0), l2(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double di = c0[i];
        if (i >= 1) di -= l1[i - 1] * l1[i - 1] * d[i - 1];
        if (i >= 2) di -= l2[i - 2] * l2[i - 2] * d[i - 2];
        d[i] = di;
        if (i + 1 < n) {
            double v = c1[i];
            if (i >= 1) v -= l2[i - 1] * l1[i - 1] * d[i - 1];
            l1[i] = v / di;
        }
        if (i + 2 < n) l2[i] = c2[i] / di;
    }
    std::vector<double> z(y.begin(), y.end());
    for (std::size_t i = 1; i < n; ++i) {
        z[i] -= l1[i - 1] * z[i - 1];
        if (i >= 2) z[i] -= l2[i - 2] * z[i - 2];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] /= d[i];
    for (std::size_t i = n - 1; i-- > 0;) {
        z[i] -= l1[i] * z[i + 1];
        if (i + 2 < n) z[i] -= l2[i] * z[i + 2];
    }
    return z;
}

// Realized kW values this small are smoother round-off, not a measured effect.
constexpr double kZeroRealizedKw = 1e-9;

// |predicted - realized| / |realized|; NaN with a warning when realized is 0.
inline double ape(double predicted, double realized, const char* what = "quantity") {
    if (std::abs(realized) <= kZeroRealizedKw) {
        warn(std::string("realized ") + what + " is zero; APE undefined");
        return kMissing;
    }
    return std::abs(predicted - realized) / std::abs(realized);
}

inline PredictionReport score_event(const PowerSeries& ctrl, const PowerSeries& ref, const DREventPlan& event,
                                    const EventPredictions& pred, const ScoreOptions& opt = {}) {
    detail::require_same_grid(ctrl, ref);
    Timestamp first_release = event.t_end(), last_release = event.t_end();
    if (!event.release_times.empty()) {
        const auto [a, b] = std::minmax_element(event.release_times.begin(), event.release_times.end(),
                                                [](const auto& x, const auto& y) { return x.second < y.second; });
        first_release = a->second;
        last_release = std::max(b->second, event.t_end());
    }
    const Timestamp win_lo = add_hours(event.t_start, -opt.reference_window_h);
    const Timestamp win_hi = add_hours(last_release, opt.rebound_horizon_h);
    const std::size_t n_avail = std::min(ctrl.size(), ref.size());
    const auto lo = detail::interval_index(ctrl, win_lo, "scoring window start");
    const auto hi = detail::interval_index(ctrl, win_hi, "scoring window end");
    if (hi > n_avail) throw CoverageError("series end before " + format_iso8601(win_hi));
    for (std::size_t k = lo; k < hi; ++k)
        if (!ctrl.valid(k) || !ref.valid(k)) throw CoverageError("missing power inside the scoring window");

    PredictionReport r;
    r.predicted_reduction_kw = pred.reduction_kw;
    r.predicted_peak_rebound_kw = pred.peak_rebound_kw;
    auto& b = r.baseline;
    b.alpha = scale_reference(ctrl, ref, event.t_start, opt.reference_window_h);
    b.t0 = ctrl.time_at(lo);
    b.step_s = ctrl.step_s;
    std::vector<double> scaled(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) scaled[k - lo] = b.alpha * ref.p[k];
    b.baseline = smooth_baseline(scaled, opt.lambda);
    b.deviation.resize(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) b.deviation[k - lo] = ctrl.p[k] - b.baseline[k - lo];

    const auto s0 = detail::interval_index(ctrl, event.t_start, "event start") - lo;
    const auto s1 = detail::interval_index(ctrl, event.t_end(), "event end") - lo;
    if (s1 <= s0) throw Error("throttle window shorter than one meter interval");
    double sum = 0;
    for (std::size_t k = s0; k < s1; ++k) sum -= b.deviation[k];
    r.realized_avg_reduction_kw = sum / static_cast<double>(s1 - s0);

    const auto rel = detail::interval_index(ctrl, first_release, "release") - lo;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = rel; k < b.deviation.size(); ++k) peak = std::max(peak, b.deviation[k]);
    r.realized_peak_rebound_kw = peak;

    r.ape_reduction = ape(r.predicted_reduction_kw, r.realized_avg_reduction_kw, "load reduction");
    r.ape_rebound = ape(r.predicted_peak_rebound_kw, r.realized_peak_rebound_kw, "peak rebound");
    return r;
}

struct Quartiles {
    double q25 = kMissing;
    double q50 = kMissing;
    double q75 = kMissing;
};

struct ApeSummary {
    std::size_t events = 0;
    Quartiles reduction;
    Quartiles rebound;
};

namespace detail {

inline Quartiles quartiles(std::vector<double> v) {
    std::erase_if(v, [](double x) { return is_missing(x); });
    if (v.empty()) return {};
    return {stats::quantile(v, 0.25), stats::quantile(v, 0.5), stats::quantile(v, 0.75)};
}

}  // namespace detail

inline ApeSummary ape_statistics(const std::vector<PredictionReport>& reports) {
    if (reports.empty()) throw EmptySetError("no reports to summarize");
    std::vector<double> red, reb;
    for (const auto& r : reports) {
        red.push_back(r.ape_reduction);
        reb.push_back(r.ape_rebound);
    }
    return {reports.size(), detail::quartiles(red), detail::quartiles(reb)};
}

namespace detail {

inline nlohmann::json nullable(double v) { return is_missing(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

}  // namespace detail

inline nlohmann::json to_json(const PredictionReport& r) {
    return {{"predicted_reduction_kw", r.predicted_reduction_kw},
            {"realized_avg_reduction_kw", r.realized_avg_reduction_kw},
            {"predicted_peak_rebound_kw", r.predicted_peak_rebound_kw},
            {"realized_peak_rebound_kw", r.realized_peak_rebound_kw},
            {"ape_reduction", detail::nullable(r.ape_reduction)},
            {"ape_rebound", detail::nullable(r.ape_rebound)},
            {"alpha", r.baseline.alpha}};
}

inline nlohmann::json to_json(const ApeSummary& s) {
    auto q = [](const Quartiles& x) {
        return nlohmann::json{{"q25", detail::nullable(x.q25)},
                              {"median", detail::nullable(x.q50)},
                              {"q75", detail::nullable(x.q75)}};
    };
    return {{"events", s.events}, {"ape_reduction", q(s.reduction)}, {"ape_rebound", q(s.rebound)}};
}

inline void write_baseline_csv(std::ostream& out, const BaselineResult& b) {
    out << "t_iso,baseline_kw,deviation_kw\n";
    for (std::size_t k = 0; k < b.baseline.size(); ++k)
        out << format_iso8601(b.t0 + Seconds(b.step_s * static_cast<double>(k))) << ',' << csv::fmt(b.baseline[k])
            << ',' << csv::fmt(b.deviation[k]) << '\n';
}

}  // namespace hpflex
