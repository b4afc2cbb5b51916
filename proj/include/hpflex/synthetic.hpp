#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hpflex/hp_detect.hpp"
#include "hpflex/meter_ingest.hpp"
#include "hpflex/population.hpp"
#include "hpflex/random.hpp"
#include "hpflex/simulate.hpp"
#include "hpflex/thermal_id.hpp"
#include "hpflex/time.hpp"

// Synthetic buildings, weather and meter data for demos and tests.
namespace hpflex::synthetic {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    double draw(Rng& rng) const { return uniform(rng, lo, hi); }
};

struct PopulationOptions {
    std::size_t size = 100;
    Range p_r{2.0, 5.0};          // kW
    Range a_l{-0.12, -0.05};      // 1/(h K)
    Range theta_star{17.0, 23.0}; // zero-loss temperature, degC
    Range c_c{1.4, 3.0};
    double a_c = -17.85;
    double b_c = 473.26;
    Range f{2.0, 4.0};
    double sigma_red = kDefaultSuccessRate;
    double sigma_reb = kDefaultSuccessRate;
    std::string id_prefix = "b";
};

inline std::string building_id(const std::string& prefix, std::size_t i) {
    std::string n = std::to_string(i);
    if (n.size() < 4) n.insert(0, 4 - n.size(), '0');
    return prefix + n;
}

inline BuildingModel random_building(const PopulationOptions& opt, std::size_t index, std::uint64_t seed) {
    auto rng = make_rng(seed, index, 10);
    BuildingModel m;
    m.building_id = building_id(opt.id_prefix, index);
    m.p_r = opt.p_r.draw(rng);
    m.loss.a_l = opt.a_l.draw(rng);
    m.loss.b_l = -m.loss.a_l * opt.theta_star.draw(rng);
    m.charge = {opt.a_c, opt.b_c, opt.c_c.draw(rng)};
    m.f = opt.f.draw(rng);
    return m;
}

inline Population random_population(const PopulationOptions& opt, std::uint64_t seed) {
    Population pop;
    pop.sigma_red = opt.sigma_red;
    pop.sigma_reb = opt.sigma_reb;
    pop.members.reserve(opt.size);
    for (std::size_t i = 0; i < opt.size; ++i) pop.members.push_back(random_building(opt, i, seed));
    return pop;
}

inline TemperatureSeries constant_temperature(Timestamp t0, double hours, double theta) {
    TemperatureSeries t;
    t.t0 = t0;
    t.step_s = 3600.0;
    t.theta.assign(static_cast<std::size_t>(std::ceil(hours)) + 1, theta);
    return t;
}

struct WinterOptions {
    double days = 120.0;
    double mean_c = 2.5;
    double seasonal_amplitude_c = 6.0;  // slow swing over the whole period
    double diurnal_amplitude_c = 3.0;
    double weather_sd_c = 2.0;          // stationary sd of the AR(1) weather term
    double weather_corr_h = 36.0;
    double lo_c = -12.0;
    double hi_c = 17.0;
};

// Hourly outdoor temperature: seasonal cosine, diurnal sine and an AR(1)
// weather term, clipped to [lo_c, hi_c].
inline TemperatureSeries winter(Timestamp t0, const WinterOptions& opt, std::uint64_t seed) {
    auto rng = make_rng(seed, 0, 20);
    TemperatureSeries t;
    t.t0 = t0;
    t.step_s = 3600.0;
    const auto n = static_cast<std::size_t>(std::ceil(opt.days * 24.0)) + 1;
    t.theta.resize(n);
    const double phi = std::exp(-1.0 / opt.weather_corr_h);
    const double innov = opt.weather_sd_c * std::sqrt(1.0 - phi * phi);
    double w = opt.weather_sd_c * standard_normal(rng);
    for (std::size_t k = 0; k < n; ++k) {
        const double h = static_cast<double>(k);
        const double season = -opt.seasonal_amplitude_c * std::cos(2.0 * std::numbers::pi * h / (opt.days * 24.0));
        const double day = opt.diurnal_amplitude_c * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0);
        t.theta[k] = std::clamp(opt.mean_c + season + day + w, opt.lo_c, opt.hi_c);
        w = phi * w + innov * standard_normal(rng);
    }
    return t;
}

struct MeterOptions {
    double step_s = 300.0;
    double dt_min = 1.0;
    double noise_sd_kw = 0.2;
    Range base_kw{0.2, 0.6};
    double base_jump_rate_per_h = 0.0;  // random base-load level changes
    Range base_jump_kw{0.0, 0.0};
    double register_start_kwh = 1000.0;
};

struct TrueSwitch {
    SwitchKind kind = SwitchKind::On;
    Timestamp t{};
};

struct SyntheticMeter {
    MeterSeries meter;
    PowerSeries power;  // what the meter implies, including base load and noise
    std::vector<TrueSwitch> switches;
};

// Runs one building under its thermostat and records the cumulative register
// of heat pump plus base load with additive Gaussian noise.
inline SyntheticMeter synthesize_meter(const BuildingModel& m, const TemperatureSeries& theta, Timestamp start,
                                       double hours, const MeterOptions& opt, std::uint64_t seed,
                                       std::uint64_t entity = 0) {
    auto phase_rng = make_rng(seed, entity, 30);
    auto noise_rng = make_rng(seed, entity, 31);
    auto base_rng = make_rng(seed, entity, 32);
    const double step_h = opt.step_s / kSecondsPerHour;
    const auto per_step = static_cast<std::size_t>(std::llround(opt.step_s / (opt.dt_min * 60.0)));
    const auto n = static_cast<std::size_t>(std::floor(hours / step_h));

    SyntheticMeter out;
    out.power.t0 = start;
    out.power.step_s = opt.step_s;
    out.power.p.resize(n);

    auto state = initial_state(m, temperature_at(theta, start), phase_rng);
    double base = opt.base_kw.draw(base_rng);
    const double dt_h = opt.dt_min / 60.0;
    for (std::size_t k = 0; k < n; ++k) {
        double on_h = 0.0;
        for (std::size_t j = 0; j < per_step; ++j) {
            const double t_h = static_cast<double>(k) * step_h + static_cast<double>(j) * dt_h;
            const Timestamp t = add_hours(start, t_h);
            const auto r = step(state, m, temperature_at(theta, t + Seconds(opt.dt_min * 30.0)), false, opt.dt_min,
                                phase_rng);
            for (const auto& tr : r.transitions)
                out.switches.push_back({tr.turned_on ? SwitchKind::On : SwitchKind::Off, add_hours(t, tr.offset_h)});
            on_h += r.on_time_h;
            state = r.state;
        }
        if (opt.base_jump_rate_per_h > 0 && uniform01(base_rng) < opt.base_jump_rate_per_h * step_h)
            base = std::max(0.0, base + (uniform01(base_rng) < 0.5 ? -1.0 : 1.0) * opt.base_jump_kw.draw(base_rng));
        const double hp = m.p_r * on_h / step_h;
        out.power.p[k] = std::max(0.0, hp + base + opt.noise_sd_kw * standard_normal(noise_rng));
    }

    out.meter.building_id = m.building_id;
    out.meter.t0 = start;
    out.meter.step_s = opt.step_s;
    out.meter.e.resize(n + 1);
    out.meter.e[0] = opt.register_start_kwh;
    for (std::size_t k = 0; k < n; ++k) out.meter.e[k + 1] = out.meter.e[k] + out.power.p[k] * step_h;
    return out;
}

inline void write_meter_csv(std::ostream& out, const MeterSeries& m) {
    out << "timestamp_utc,energy_kwh\n";
    for (std::size_t k = 0; k < m.e.size(); ++k) out << format_iso8601(m.time_at(k)) << ',' << csv::fmt(m.e[k]) << '\n';
}

inline void write_temperature_csv(std::ostream& out, const TemperatureSeries& t) {
    out << "timestamp_utc,temp_c\n";
    for (std::size_t k = 0; k < t.theta.size(); ++k)
        out << format_iso8601(t.t0 + Seconds(t.step_s * static_cast<double>(k))) << ',' << csv::fmt(t.theta[k]) << '\n';
}

}  // namespace hpflex::synthetic
