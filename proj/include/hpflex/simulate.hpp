#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hpflex/csv.hpp"
#include "hpflex/errors.hpp"
#include "hpflex/meter_ingest.hpp"
#include "hpflex/population.hpp"
#include "hpflex/random.hpp"
#include "hpflex/thermal_id.hpp"
#include "hpflex/time.hpp"

namespace hpflex {

// x stays in [0, 1] under thermostat control. While a responsive unit is
// held off by a throttle it keeps losing charge and x may drop below 0; that
// is the comfort band widened by the flexibility factor.
struct SimBuildingState {
    double x = 0.5;
    bool on = false;
    bool throttled = false;          // throttle command currently active
    double rundown_remaining = 0.0;  // min
    bool responsive = true;
};

struct DREventPlan {
    std::vector<std::string> group;
    Timestamp t_start{};
    double T = 1.0;        // h
    double delta_T = 0.0;  // h
    std::map<std::string, Timestamp> release_times;

    Timestamp t_end() const { return add_hours(t_start, T); }
};

enum class ReleaseMode {
    // t_end + delta with delta ~ U[0, delta_T], capped at t_start + T_max
    RandomDelay,
    // min(t_end + delta_T, t_start + T_max): spread comes from T_max only
    TmaxCapped,
};

struct SimOptions {
    double dt_min = 1.0;
    double report_step_min = 5.0;
    double rundown_lo_min = 2.0;
    double rundown_hi_min = 10.0;
    bool keep_per_building = false;
    bool persistent_nonresponse = false;
    std::optional<double> response_rate;  // defaults to the population's sigma_red
};

struct SimLogRecord {
    Timestamp t{};
    std::string building_id;
    std::string kind;  // on, off, throttle, ignore, release
    double soc = 0.0;
    bool on = false;  // unit state when the record was written
};

struct SimResult {
    Timestamp t0{};
    double step_s = 300.0;
    std::vector<double> aggregate_power;                   // kW per report step
    std::vector<std::vector<double>> per_building_power;   // [building][report step], optional
    std::vector<std::string> building_ids;
    std::vector<double> on_time_h;                         // per building
    std::vector<SimLogRecord> events_log;

    Timestamp time_at(std::size_t k) const { return t0 + Seconds(step_s * static_cast<double>(k)); }
};

struct StepTransition {
    double offset_h = 0.0;  // within the step
    bool turned_on = false;
    double x = 0.0;
};

struct StepOutcome {
    SimBuildingState state;
    double power = 0.0;  // kW, average over the step
    double on_time_h = 0.0;
    std::vector<StepTransition> transitions;
};

// Advances one building by dt minutes with exact thermostat switching inside
// the step. `throttle` is the command level for this step; a rising command
// on a responsive running unit starts a rundown drawn from
// [rundown_lo, rundown_hi] minutes.
inline StepOutcome step(const SimBuildingState& in, const BuildingModel& m, double theta, bool throttle,
                        double dt_min, Rng& rng, double rundown_lo_min = 2.0, double rundown_hi_min = 10.0) {
    StepOutcome out;
    auto& s = out.state;
    s = in;
    if (throttle && !s.throttled) {
        s.throttled = true;
        s.rundown_remaining = (s.responsive && s.on) ? uniform(rng, rundown_lo_min, rundown_hi_min) : 0.0;
    } else if (!throttle && s.throttled) {
        s.throttled = false;
        s.rundown_remaining = 0.0;
    }

    const double rc = m.charge_rate(theta);
    const double rl = m.loss_rate(theta);
    const double dt_h = dt_min / 60.0;
    constexpr double inf = std::numeric_limits<double>::infinity();
    double elapsed = 0.0;
    int guard = 0;
    while (elapsed < dt_h && ++guard < 64) {
        const double remaining = dt_h - elapsed;
        const bool blocked = s.throttled && s.responsive;
        if (s.on) {
            const double net = rc - rl;
            const double t_full = net > 0 ? std::max(0.0, (1.0 - s.x) / net) : inf;
            const double t_rundown = blocked ? s.rundown_remaining / 60.0 : inf;
            const double seg = std::min({remaining, t_full, t_rundown});
            s.x += net * seg;
            out.on_time_h += seg;
            elapsed += seg;
            if (blocked) s.rundown_remaining = std::max(0.0, s.rundown_remaining - seg * 60.0);
            if (seg == t_full && seg <= t_rundown) {
                s.x = 1.0;
                s.on = false;
                out.transitions.push_back({elapsed, false, s.x});
            } else if (seg == t_rundown) {
                s.on = false;
                s.rundown_remaining = 0.0;
                out.transitions.push_back({elapsed, false, s.x});
            }
        } else {
            const double t_empty = (!blocked && rl > 0) ? std::max(0.0, s.x / rl) : (!blocked && s.x <= 0 ? 0.0 : inf);
            const double seg = std::min(remaining, t_empty);
            s.x -= rl * seg;
            elapsed += seg;
            if (seg == t_empty) {
                if (s.x > 0.0) s.x = 0.0;
                s.on = true;
                out.transitions.push_back({elapsed, true, s.x});
            }
        }
    }
    out.power = m.p_r * out.on_time_h / dt_h;
    return out;
}

// Stationary start: a uniformly random point of the undisturbed cycle.
inline SimBuildingState initial_state(const BuildingModel& m, double theta, Rng& rng) {
    SimBuildingState s;
    const double rc = m.charge_rate(theta);
    const double rl = m.loss_rate(theta);
    if (!(rl > 0)) {
        s.on = false;
        s.x = uniform01(rng);
    } else if (!(rc > rl)) {
        s.on = true;
        s.x = uniform01(rng);
    } else {
        const double d_off = 1.0 / rl;
        const double d_on = 1.0 / (rc - rl);
        const double phase = uniform(rng, 0.0, d_off + d_on);
        if (phase < d_off) {
            s.on = false;
            s.x = 1.0 - rl * phase;
        } else {
            s.on = true;
            s.x = (phase - d_off) * (rc - rl);
        }
    }
    return s;
}

inline DREventPlan plan_release(const Population& pop, const std::vector<std::string>& group, Timestamp t_start,
                                double T, double delta_T, double theta, std::uint64_t seed,
                                ReleaseMode mode = ReleaseMode::RandomDelay) {
    if (T < 0 || delta_T < 0) throw Error("throttle duration and release spread must be non-negative");
    const auto eligible = throttle_set(pop, theta, T);
    const std::set<std::string> eligible_set(eligible.begin(), eligible.end());
    std::vector<std::string> offending;
    for (const auto& id : group)
        if (!eligible_set.count(id)) offending.push_back(id);
    if (!offending.empty()) throw IneligibleBuildingError(offending);

    DREventPlan plan{group, t_start, T, delta_T, {}};
    for (std::size_t i = 0; i < pop.members.size(); ++i) {
        const auto& m = pop.members[i];
        if (std::find(group.begin(), group.end(), m.building_id) == group.end()) continue;
        const double cap_h = max_throttle_duration(m, theta);
        double delay_h = delta_T;
        if (mode == ReleaseMode::RandomDelay) {
            auto rng = make_rng(seed, i, 3);
            delay_h = uniform(rng, 0.0, delta_T);
        }
        plan.release_times[m.building_id] = add_hours(t_start, std::min(T + delay_h, cap_h));
    }
    return plan;
}

// Temperature of the series sample containing t (piecewise constant).
inline double temperature_at(const TemperatureSeries& t, Timestamp at) {
    const double pos = (at - t.t0).count() / t.step_s;
    if (pos < -1e-9 || pos >= static_cast<double>(t.size()))
        throw CoverageError("temperature series does not cover " + format_iso8601(at));
    const auto k = std::min(t.size() - 1, static_cast<std::size_t>(std::max(0.0, std::floor(pos))));
    if (is_missing(t.theta[k])) throw CoverageError("missing temperature at " + format_iso8601(at));
    return t.theta[k];
}

inline SimResult run(const Population& pop, const std::optional<DREventPlan>& plan, const TemperatureSeries& theta,
                     Timestamp start, double duration_h, std::uint64_t seed, const SimOptions& opt = {}) {
    if (!(opt.dt_min > 0)) throw ConfigError("dt must be positive");
    const double ratio = opt.report_step_min / opt.dt_min;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1)
        throw ConfigError("dt must divide the reporting step");
    const auto per_report = static_cast<std::size_t>(std::round(ratio));
    const auto n_steps = static_cast<std::size_t>(std::llround(duration_h * 60.0 / opt.dt_min));
    const std::size_t n_report = n_steps / per_report;
    const double dt_h = opt.dt_min / 60.0;
    const double response_rate = opt.response_rate.value_or(pop.sigma_red);
    const std::size_t H = pop.members.size();

    SimResult res;
    res.t0 = start;
    res.step_s = opt.report_step_min * 60.0;
    res.aggregate_power.assign(n_report, 0.0);
    res.on_time_h.assign(H, 0.0);
    for (const auto& m : pop.members) res.building_ids.push_back(m.building_id);
    if (opt.keep_per_building) res.per_building_power.assign(H, std::vector<double>(n_report, 0.0));

    std::vector<double> theta_step(n_steps);
    for (std::size_t n = 0; n < n_steps; ++n)
        theta_step[n] = temperature_at(theta, start + Seconds((static_cast<double>(n) + 0.5) * opt.dt_min * 60.0));

    const std::set<std::string> group = plan ? std::set<std::string>(plan->group.begin(), plan->group.end())
                                             : std::set<std::string>{};
    for (std::size_t h = 0; h < H; ++h) {
        const auto& m = pop.members[h];
        auto phase_rng = make_rng(seed, h, 0);
        auto event_rng = make_rng(seed, h, 1);
        auto state = initial_state(m, theta_step.empty() ? temperature_at(theta, start) : theta_step[0], phase_rng);

        const bool in_group = plan && group.count(m.building_id);
        double release_offset_h = 0, start_offset_h = 0;
        if (in_group) {
            start_offset_h = hours_between(start, plan->t_start);
            const auto it = plan->release_times.find(m.building_id);
            release_offset_h = it != plan->release_times.end() ? hours_between(start, it->second)
                                                                : start_offset_h + plan->T;
            if (opt.persistent_nonresponse) {
                auto persistent = make_rng(seed, h, 2);
                state.responsive = uniform01(persistent) < response_rate;
            } else {
                state.responsive = uniform01(event_rng) < response_rate;
            }
        }

        double report_acc = 0.0;
        for (std::size_t n = 0; n < n_steps; ++n) {
            const double t_h = static_cast<double>(n) * dt_h;
            bool cmd = false;
            if (in_group) {
                // command level on the dt grid: active for steps starting in [start, release)
                const double eps = 1e-9;
                cmd = t_h + eps >= start_offset_h && t_h + eps < release_offset_h;
            }
            const bool was_throttled = state.throttled;
            const auto outcome = step(state, m, theta_step[n], cmd, opt.dt_min, event_rng, opt.rundown_lo_min,
                                      opt.rundown_hi_min);
            const Timestamp t_step = start + Seconds(t_h * kSecondsPerHour);
            if (cmd && !was_throttled)
                res.events_log.push_back({t_step, m.building_id, state.responsive ? "throttle" : "ignore", state.x,
                                          state.on});
            if (!cmd && was_throttled) res.events_log.push_back({t_step, m.building_id, "release", state.x, state.on});
            for (const auto& tr : outcome.transitions)
                res.events_log.push_back({add_hours(t_step, tr.offset_h), m.building_id, tr.turned_on ? "on" : "off",
                                          tr.x, tr.turned_on});
            state = outcome.state;
            res.on_time_h[h] += outcome.on_time_h;
            report_acc += outcome.power;
            if ((n + 1) % per_report == 0) {
                const std::size_t r = n / per_report;
                const double avg = report_acc / static_cast<double>(per_report);
                if (r < n_report) {
                    res.aggregate_power[r] += avg;
                    if (opt.keep_per_building) res.per_building_power[h][r] = avg;
                }
                report_acc = 0.0;
            }
        }
    }
    std::stable_sort(res.events_log.begin(), res.events_log.end(),
                     [](const SimLogRecord& a, const SimLogRecord& b) { return a.t < b.t; });
    return res;
}

inline void write_power_csv(std::ostream& out, Timestamp t0, double step_s, const std::vector<double>& power) {
    out << "t_iso,aggregate_kw\n";
    for (std::size_t k = 0; k < power.size(); ++k)
        out << format_iso8601(t0 + Seconds(step_s * static_cast<double>(k))) << ',' << csv::fmt(power[k]) << '\n';
}

inline void write_events_log_csv(std::ostream& out, const SimResult& r) {
    out << "t_iso,building_id,kind,soc\n";
    for (const auto& e : r.events_log)
        out << format_iso8601(e.t) << ',' << e.building_id << ',' << e.kind << ',' << csv::fmt(e.soc) << '\n';
}

// Power CSV back into a series (the aggregate is a power, not a register).
inline PowerSeries parse_power_csv(std::istream& in) {
    const auto table = csv::read(in, {"t_iso", "aggregate_kw"});
    if (table.rows.size() < 2) throw LengthError("power file needs at least 2 rows");
    PowerSeries p;
    p.t0 = parse_iso8601(table.rows[0].fields[0]);
    p.step_s = (parse_iso8601(table.rows[1].fields[0]) - p.t0).count();
    if (!(p.step_s > 0)) throw ParseError("power timestamps must increase");
    for (const auto& row : table.rows) {
        const auto k = detail::grid_index(p.t0, parse_iso8601(row.fields[0]), p.step_s, row.line_no);
        while (p.p.size() < k) p.p.push_back(kMissing);
        if (p.p.size() > k) throw ParseError("row " + std::to_string(row.line_no) + ": duplicate timestamp");
        p.p.push_back(csv::parse_number(row.fields[1], row.line_no));
    }
    return p;
}

}  // namespace hpflex
