#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hpflex/csv.hpp"
#include "hpflex/errors.hpp"
#include "hpflex/thermal_id.hpp"
#include "hpflex/time.hpp"

namespace hpflex {

struct FlexHorizon {
    std::size_t N = 0;
    double t_s = 5.0 / 60.0;          // h per step
    std::vector<double> theta_hat;    // forecast per step, degC

    void validate() const {
        if (N < 1) throw LengthError("horizon needs N >= 1");
        if (!(t_s > 0)) throw Error("horizon step must be positive");
        if (theta_hat.size() != N) throw LengthError("forecast length differs from N");
    }
};

inline FlexHorizon constant_horizon(std::size_t n, double t_s, double theta) {
    return {n, t_s, std::vector<double>(n, theta)};
}

// x_hat = x0 * 1 + B u - d with u = p / p_r. B is stored row-major (N x N);
// row i (0-based) holds t_s * r_c(theta^j) for j <= i.
struct FlexPolytope {
    std::size_t N = 0;
    double t_s = 0.0;
    double x0 = 0.0;
    double p_r = 0.0;
    std::vector<double> B;
    std::vector<double> d;
    std::vector<double> charge_step;  // t_s * r_c(theta^k)
    std::vector<double> loss_step;    // t_s * r_l(theta^k)

    double b(std::size_t i, std::size_t j) const { return B[i * N + j]; }
};

struct EnergyEnvelope {
    std::vector<double> e_min_cum;  // kWh after steps 1..N
    std::vector<double> e_max_cum;
};

inline constexpr double kSocTolerance = 1e-9;

inline std::vector<double> predict_soc(const BuildingModel& m, const FlexHorizon& h, double x0,
                                       const std::vector<int>& u) {
    h.validate();
    if (u.size() != h.N) throw LengthError("input sequence length differs from N");
    std::vector<double> x(h.N);
    double xk = x0;
    for (std::size_t k = 0; k < h.N; ++k) {
        const double th = h.theta_hat[k];
        xk += h.t_s * (m.charge_rate(th) * u[k] - m.loss_rate(th));
        x[k] = xk;
    }
    return x;
}

// SOC at `now` from the most recent switching action; clamped to [0, 1].
inline double initial_soc(const BuildingModel& m, Timestamp last_on, Timestamp last_off, Timestamp now,
                          double theta_mean) {
    if (now < std::max(last_on, last_off)) throw Error("initial_soc: now precedes the last switching action");
    double x;
    if (last_off > last_on)
        x = 1.0 - m.loss_rate(theta_mean) * hours_between(last_off, now);
    else
        x = m.charge_rate(theta_mean) * hours_between(last_on, now);
    return std::clamp(x, 0.0, 1.0);
}

inline FlexPolytope build_polytope(const BuildingModel& m, const FlexHorizon& h, double x0) {
    h.validate();
    if (x0 < 0.0 || x0 > 1.0) throw Error("initial SOC outside [0, 1]");
    FlexPolytope poly;
    poly.N = h.N;
    poly.t_s = h.t_s;
    poly.x0 = x0;
    poly.p_r = m.p_r;
    poly.charge_step.resize(h.N);
    poly.loss_step.resize(h.N);
    for (std::size_t k = 0; k < h.N; ++k) {
        const double rc = m.charge_rate(h.theta_hat[k]);
        if (!(rc > 0)) throw Error("charge rate not positive over the horizon");
        poly.charge_step[k] = h.t_s * rc;
        poly.loss_step[k] = h.t_s * m.loss_rate(h.theta_hat[k]);
    }
    poly.B.assign(h.N * h.N, 0.0);
    for (std::size_t i = 0; i < h.N; ++i)
        for (std::size_t j = 0; j <= i; ++j) poly.B[i * h.N + j] = poly.charge_step[j];
    // d_i accumulates the losses of steps 0..i, matching the recursion
    poly.d.resize(h.N);
    double acc = 0.0;
    for (std::size_t i = 0; i < h.N; ++i) {
        acc += poly.loss_step[i];
        poly.d[i] = acc;
    }
    return poly;
}

struct FeasibilityReport {
    bool feasible = true;
    // Row of the stacked system [B; -B] p <= rhs (0..2N-1), or the step index
    // for a power-level violation.
    std::optional<std::size_t> first_violated_row;
    std::string reason;
};

inline FeasibilityReport is_feasible(const FlexPolytope& poly, const std::vector<double>& p) {
    if (p.size() != poly.N) throw LengthError("power trajectory length differs from N");
    const double level_tol = 1e-9 * poly.p_r;
    for (std::size_t k = 0; k < poly.N; ++k) {
        if (std::abs(p[k]) > level_tol && std::abs(p[k] - poly.p_r) > level_tol)
            return {false, k, "power level at step " + std::to_string(k) + " is neither 0 nor p_r"};
    }
    const double tol = kSocTolerance * poly.p_r;
    std::optional<std::size_t> lower_violation;
    for (std::size_t i = 0; i < poly.N; ++i) {
        double bp = 0.0;
        for (std::size_t j = 0; j <= i; ++j) bp += poly.b(i, j) * p[j];
        const double upper_rhs = poly.p_r * ((1.0 - poly.x0) + poly.d[i]);
        const double lower_rhs = poly.p_r * (poly.x0 - poly.d[i]);
        if (bp > upper_rhs + tol) return {false, i, "SOC above 1 after step " + std::to_string(i + 1)};
        if (-bp > lower_rhs + tol && !lower_violation) lower_violation = i;
    }
    if (lower_violation)
        return {false, poly.N + *lower_violation, "SOC below 0 after step " + std::to_string(*lower_violation + 1)};
    return {};
}

namespace detail {

struct SocInterval {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double x) const { return x >= lo - kSocTolerance && x <= hi + kSocTolerance; }
};

// Backward recursion for the set of SOC values at each step from which the
// rest of the horizon can be completed. Returns N+1 intervals (step 0..N).
inline std::vector<SocInterval> completable_sets(const FlexPolytope& poly) {
    std::vector<SocInterval> sets(poly.N + 1);
    sets[poly.N] = {0.0, 1.0};
    for (std::size_t k = poly.N; k-- > 0;) {
        const auto& next = sets[k + 1];
        const double l = poly.loss_step[k];
        const double b = poly.charge_step[k];
        SocInterval idle{std::max(0.0, next.lo + l), std::min(1.0, next.hi + l)};
        SocInterval charge{std::max(0.0, next.lo + l - b), std::min(1.0, next.hi + l - b)};
        const bool idle_ok = idle.lo <= idle.hi + kSocTolerance;
        const bool charge_ok = charge.lo <= charge.hi + kSocTolerance;
        if (!idle_ok && !charge_ok)
            throw InfeasibleStateError("no SOC at step " + std::to_string(k) + " can complete the horizon");
        if (idle_ok && charge_ok) {
            if (charge.hi + kSocTolerance < idle.lo)
                throw InfeasibleStateError("step " + std::to_string(k) +
                                           ": completable SOC set splits; t_s too coarse for the charge rate");
            sets[k] = {std::min(idle.lo, charge.lo), std::max(idle.hi, charge.hi)};
        } else {
            sets[k] = idle_ok ? idle : charge;
        }
    }
    return sets;
}

}  // namespace detail

// Extreme cumulative energies over all feasible binary trajectories.
// Forward pass over (step, count); only SOC values that can still complete
// the horizon survive. For the upper envelope the lowest SOC per count is
// kept (it admits at least as many later charges as any higher one), for the
// lower envelope the highest.
inline EnergyEnvelope energy_envelope(const FlexPolytope& poly) {
    const auto sets = detail::completable_sets(poly);
    if (!sets[0].contains(poly.x0)) throw InfeasibleStateError("no feasible trajectory from the initial SOC");

    constexpr double kNone = std::numeric_limits<double>::quiet_NaN();
    const double step_energy = poly.p_r * poly.t_s;
    EnergyEnvelope env;
    env.e_min_cum.resize(poly.N);
    env.e_max_cum.resize(poly.N);

    std::vector<double> low(1, poly.x0), high(1, poly.x0);  // indexed by count
    for (std::size_t k = 0; k < poly.N; ++k) {
        const double l = poly.loss_step[k];
        const double b = poly.charge_step[k];
        const auto& next = sets[k + 1];
        std::vector<double> low_next(k + 2, kNone), high_next(k + 2, kNone);
        auto keep = [&](std::vector<double>& v, std::size_t c, double x, bool want_low) {
            if (!next.contains(x)) return;
            if (std::isnan(v[c]) || (want_low ? x < v[c] : x > v[c])) v[c] = x;
        };
        for (std::size_t c = 0; c < low.size(); ++c) {
            if (!std::isnan(low[c])) {
                keep(low_next, c, low[c] - l, true);
                keep(low_next, c + 1, low[c] + b - l, true);
            }
            if (!std::isnan(high[c])) {
                keep(high_next, c, high[c] - l, false);
                keep(high_next, c + 1, high[c] + b - l, false);
            }
        }
        low = std::move(low_next);
        high = std::move(high_next);

        std::size_t c_max = 0, c_min = low.size();
        bool found = false;
        for (std::size_t c = 0; c < low.size(); ++c)
            if (!std::isnan(low[c])) {
                c_max = c;
                found = true;
            }
        for (std::size_t c = high.size(); c-- > 0;)
            if (!std::isnan(high[c])) c_min = c;
        if (!found || c_min == high.size())
            throw InfeasibleStateError("no admissible input at step " + std::to_string(k));
        env.e_max_cum[k] = step_energy * static_cast<double>(c_max);
        env.e_min_cum[k] = step_energy * static_cast<double>(c_min);
    }
    return env;
}

// Longest all-off prefix that keeps the SOC >= 0.
inline std::size_t max_deferral(const FlexPolytope& poly) {
    double x = poly.x0;
    for (std::size_t k = 0; k < poly.N; ++k) {
        x -= poly.loss_step[k];
        if (x < -kSocTolerance) return k;
    }
    return poly.N;
}

inline void write_envelope_csv(std::ostream& out, const EnergyEnvelope& env, Timestamp start, double t_s) {
    out << "step,t_iso,e_min_kwh,e_max_kwh\n";
    for (std::size_t k = 0; k < env.e_min_cum.size(); ++k)
        out << (k + 1) << ',' << format_iso8601(add_hours(start, t_s * static_cast<double>(k + 1))) << ','
            << csv::fmt(env.e_min_cum[k]) << ',' << csv::fmt(env.e_max_cum[k]) << '\n';
}

}  // namespace hpflex
