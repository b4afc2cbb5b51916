#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hpflex/errors.hpp"
#include "hpflex/hp_detect.hpp"
#include "hpflex/robust.hpp"

namespace hpflex {

inline constexpr double kCelsiusToKelvin = 273.15;

// Normalised per-cycle rates, 1/h.
struct CycleRates {
    double r_c = 0.0;
    double r_l = 0.0;
    double theta_off = kMissing;
    double theta_cycle = kMissing;
};

// r_l(theta) = max(0, a_l * theta + b_l)
struct LossRateModel {
    double a_l = 0.0;
    double b_l = 0.0;

    double rate(double theta) const { return std::max(0.0, a_l * theta + b_l); }
    double zero_loss_temperature() const { return -b_l / a_l; }
};

// r_c(theta) = c_c * (a_c * theta + b_c + 273.15) / ((a_c - 1) * theta + b_c)
struct ChargeRateModel {
    double a_c = 0.0;
    double b_c = 0.0;
    double c_c = 0.0;

    double denominator(double theta) const { return (a_c - 1.0) * theta + b_c; }
    double rate(double theta) const { return c_c * (a_c * theta + b_c + kCelsiusToKelvin) / denominator(theta); }
    bool denominator_positive(double lo, double hi) const { return denominator(lo) > 0 && denominator(hi) > 0; }
};

struct ValidityRange {
    double lo = -30.0;
    double hi = 25.0;
    bool contains(double theta) const { return theta >= lo && theta <= hi; }
};

struct BuildingModel {
    std::string building_id;
    double p_r = 0.0;  // kW
    LossRateModel loss;
    ChargeRateModel charge;
    double f = 1.0;
    ValidityRange valid;

    void check_theta(double theta) const {
        if (!valid.contains(theta))
            warn("building " + building_id + ": theta " + std::to_string(theta) +
                 " degC outside validity range [" + std::to_string(valid.lo) + ", " + std::to_string(valid.hi) +
                 "], extrapolating");
    }
    double loss_rate(double theta) const { return loss.rate(theta); }
    double charge_rate(double theta) const { return charge.rate(theta); }
};

inline void validate(const BuildingModel& m) {
    if (!(m.p_r > 0)) throw Error("building " + m.building_id + ": p_r must be positive");
    if (!(m.f >= 1)) throw Error("building " + m.building_id + ": flexibility factor must be >= 1");
    if (!(m.valid.lo < m.valid.hi)) throw Error("building " + m.building_id + ": empty validity range");
}

inline std::vector<CycleRates> rates_from_cycles(const std::vector<HeatingCycle>& cycles) {
    std::vector<CycleRates> out;
    out.reserve(cycles.size());
    for (const auto& c : cycles) {
        if (!(c.d_on > 0 && c.d_off > 0)) throw Error("heating cycle with non-positive duration");
        out.push_back({1.0 / c.d_on + 1.0 / c.d_off, 1.0 / c.d_off, c.theta_mean_off, c.theta_mean_cycle});
    }
    return out;
}

struct Sample {
    double theta = 0.0;
    double rate = 0.0;
};

struct FitOptions {
    robust::HuberOptions huber{};
    int max_outer_iterations = 200;
    std::size_t min_samples = 10;
    double min_theta_span = 5.0;
    ValidityRange valid{};
};

namespace detail {

inline void check_samples(const std::vector<Sample>& s, const FitOptions& opt, const char* what) {
    if (s.size() < opt.min_samples)
        throw InsufficientDataError(std::string(what) + ": " + std::to_string(s.size()) + " samples, need " +
                                    std::to_string(opt.min_samples));
    const auto [mn, mx] = std::minmax_element(s.begin(), s.end(),
                                              [](const Sample& a, const Sample& b) { return a.theta < b.theta; });
    if (mx->theta - mn->theta < opt.min_theta_span)
        throw InsufficientDataError(std::string(what) + ": temperature span " +
                                    std::to_string(mx->theta - mn->theta) + " degC below " +
                                    std::to_string(opt.min_theta_span));
}

inline std::pair<std::vector<double>, std::vector<double>> unzip(const std::vector<Sample>& s) {
    std::vector<double> x, y;
    x.reserve(s.size());
    y.reserve(s.size());
    for (const auto& v : s) {
        x.push_back(v.theta);
        y.push_back(v.rate);
    }
    return {std::move(x), std::move(y)};
}

}  // namespace detail

// Affine Huber fit; the max(0, .) clamp only applies at evaluation.
inline LossRateModel fit_loss_rate(const std::vector<Sample>& samples, const FitOptions& opt = {}) {
    detail::check_samples(samples, opt, "loss-rate fit");
    const auto [x, y] = detail::unzip(samples);
    const auto fit = robust::huber_affine(x, y, opt.huber);
    if (!(fit.slope < 0))
        throw SlopeSignError("loss-rate slope a_l = " + std::to_string(fit.slope) + " is not negative");
    return {fit.slope, fit.intercept};
}

// The fit runs in (log D(lo), log D(hi), c_c) where D is the denominator at
// the validity bounds; D is affine in theta, so positivity at both bounds is
// positivity on the whole range and the constraint becomes unconstrained.
// D keeps a small floor so an optimum pressed against the bound does not
// round to zero when a_c, b_c are rebuilt.
struct ChargeParametrization {
    static constexpr double kMinDenominator = 1e-3;
    ValidityRange valid;

    double span() const { return valid.hi - valid.lo; }

    std::array<double, 3> to_internal(const ChargeRateModel& m) const {
        return {std::log(m.denominator(valid.lo) - kMinDenominator),
                std::log(m.denominator(valid.hi) - kMinDenominator), m.c_c};
    }
    ChargeRateModel to_model(const std::array<double, 3>& q) const {
        const double d_lo = kMinDenominator + std::exp(q[0]);
        const double d_hi = kMinDenominator + std::exp(q[1]);
        const double slope = (d_hi - d_lo) / span();  // a_c - 1
        return {1.0 + slope, d_hi - valid.hi * slope, q[2]};
    }
};

inline robust::Model3 charge_rate_model(ValidityRange valid) {
    const ChargeParametrization par{valid};
    robust::Model3 m;
    m.value = [par](double t, const std::array<double, 3>& q) { return par.to_model(q).rate(t); };
    m.gradient = [par](double t, const std::array<double, 3>& q) {
        const auto cm = par.to_model(q);
        const double a = cm.a_c, b = cm.b_c, c = cm.c_c;
        const double num = a * t + b + kCelsiusToKelvin;
        const double den = (a - 1.0) * t + b;
        const double den2 = den * den;
        const double d_a = -c * t * (t + kCelsiusToKelvin) / den2;
        const double d_b = -c * (t + kCelsiusToKelvin) / den2;
        const double d_lo = std::exp(q[0]);
        const double d_hi = std::exp(q[1]);
        const double span = par.span();
        // a = 1 + (D_hi - D_lo)/span, b = D_hi - hi*(D_hi - D_lo)/span
        const double da_dlo = -1.0 / span, da_dhi = 1.0 / span;
        const double db_dlo = par.valid.hi / span, db_dhi = 1.0 - par.valid.hi / span;
        return std::array<double, 3>{(d_a * da_dlo + d_b * db_dlo) * d_lo, (d_a * da_dhi + d_b * db_dhi) * d_hi,
                                     num / den};
    };
    return m;
}

inline ChargeRateModel fit_charge_rate(const std::vector<Sample>& samples, const FitOptions& opt = {}) {
    detail::check_samples(samples, opt, "charge-rate fit");
    const auto [x, y] = detail::unzip(samples);
    double mean = 0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    const ChargeRateModel init{-2.0, 330.0, mean};
    if (!init.denominator_positive(opt.valid.lo, opt.valid.hi))
        throw Error("charge-rate initial point violates the denominator constraint");
    const ChargeParametrization par{opt.valid};
    const auto fit =
        robust::huber_nonlinear(charge_rate_model(opt.valid), x, y, par.to_internal(init), opt.huber,
                                opt.max_outer_iterations);
    return par.to_model(fit.params);
}

inline double duty_cycle(const BuildingModel& m, double theta) {
    m.check_theta(theta);
    const double rc = m.charge_rate(theta);
    if (!(rc > 0)) return 1.0;
    return std::min(1.0, std::max(0.0, m.loss_rate(theta) / rc));
}

// f / r_l(theta); +inf where the loss rate vanishes.
inline double max_off_duration(const BuildingModel& m, double theta) {
    m.check_theta(theta);
    const double rl = m.loss_rate(theta);
    if (!(rl > 0)) return std::numeric_limits<double>::infinity();
    return m.f / rl;
}

// (f - 1) / r_l(theta); zero for f == 1, +inf where the loss rate vanishes
// and f > 1.
inline double max_throttle_duration(const BuildingModel& m, double theta) {
    m.check_theta(theta);
    if (m.f == 1.0) return 0.0;
    const double rl = m.loss_rate(theta);
    if (!(rl > 0)) return std::numeric_limits<double>::infinity();
    return (m.f - 1.0) / rl;
}

struct ThermalFitOptions {
    FitOptions fit{};
    double min_phase_h = 10.0 / 60.0;
};

struct ThermalFit {
    LossRateModel loss;
    ChargeRateModel charge;
    std::size_t cycles_used = 0;
};

// Drops cycles with a phase shorter than min_phase_h or without temperature,
// then fits both rate functions.
inline ThermalFit fit_thermal(const std::vector<HeatingCycle>& cycles, const ThermalFitOptions& opt = {}) {
    std::vector<HeatingCycle> kept;
    for (const auto& c : cycles)
        if (c.d_on >= opt.min_phase_h && c.d_off >= opt.min_phase_h && !is_missing(c.theta_mean_off) &&
            !is_missing(c.theta_mean_cycle))
            kept.push_back(c);
    std::vector<Sample> loss, charge;
    for (const auto& r : rates_from_cycles(kept)) {
        loss.push_back({r.theta_off, r.r_l});
        charge.push_back({r.theta_cycle, r.r_c});
    }
    ThermalFit out;
    out.loss = fit_loss_rate(loss, opt.fit);
    out.charge = fit_charge_rate(charge, opt.fit);
    out.cycles_used = kept.size();
    return out;
}

inline nlohmann::json to_json(const BuildingModel& m) {
    return {{"building_id", m.building_id},
            {"p_r_kw", m.p_r},
            {"f", m.f},
            {"loss", {{"a_l", m.loss.a_l}, {"b_l", m.loss.b_l}}},
            {"charge", {{"a_c", m.charge.a_c}, {"b_c", m.charge.b_c}, {"c_c", m.charge.c_c}}},
            {"valid_theta_c", {m.valid.lo, m.valid.hi}}};
}

inline BuildingModel building_model_from_json(const nlohmann::json& j) {
    try {
        BuildingModel m;
        m.building_id = j.at("building_id").get<std::string>();
        m.p_r = j.at("p_r_kw").get<double>();
        m.f = j.at("f").get<double>();
        m.loss = {j.at("loss").at("a_l").get<double>(), j.at("loss").at("b_l").get<double>()};
        const auto& c = j.at("charge");
        m.charge = {c.at("a_c").get<double>(), c.at("b_c").get<double>(), c.at("c_c").get<double>()};
        if (j.contains("valid_theta_c")) {
            const auto& v = j.at("valid_theta_c");
            if (!v.is_array() || v.size() != 2) throw ParseError("valid_theta_c must be [lo, hi]");
            m.valid = {v[0].get<double>(), v[1].get<double>()};
        }
        validate(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("building model JSON: ") + e.what());
    }
}

}  // namespace hpflex
