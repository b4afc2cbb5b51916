#pragma once

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpflex/csv.hpp"
#include "hpflex/errors.hpp"
#include "hpflex/thermal_id.hpp"

namespace hpflex {

inline constexpr double kDefaultSuccessRate = 0.88;

struct Population {
    std::vector<BuildingModel> members;
    double sigma_red = kDefaultSuccessRate;
    double sigma_reb = kDefaultSuccessRate;

    void validate() const {
        if (!(sigma_red > 0 && sigma_red <= 1) || !(sigma_reb > 0 && sigma_reb <= 1))
            throw ConfigError("success rates must lie in (0, 1]");
        std::set<std::string> ids;
        for (const auto& m : members) {
            hpflex::validate(m);
            if (!ids.insert(m.building_id).second) throw ConfigError("duplicate building id " + m.building_id);
        }
    }

    const BuildingModel* find(const std::string& id) const {
        for (const auto& m : members)
            if (m.building_id == id) return &m;
        return nullptr;
    }
};

// Members whose maximum throttle duration at theta is at least T.
inline std::vector<std::string> throttle_set(const Population& pop, double theta, double T) {
    if (T < 0) throw Error("throttle duration must be non-negative");
    std::vector<std::string> out;
    for (const auto& m : pop.members)
        if (max_throttle_duration(m, theta) >= T) out.push_back(m.building_id);
    return out;
}

namespace detail {

template <typename Fn>
double sum_over_throttle_set(const Population& pop, double theta, double T, Fn&& term) {
    if (T < 0) throw Error("throttle duration must be non-negative");
    double total = 0.0;
    for (const auto& m : pop.members)
        if (max_throttle_duration(m, theta) >= T) total += term(m);
    return total;
}

}  // namespace detail

// Expected load drop: every eligible unit sheds p_r with probability d_c.
inline double expected_reduction(const Population& pop, double theta, double T) {
    return pop.sigma_red * detail::sum_over_throttle_set(pop, theta, T, [theta](const BuildingModel& m) {
               return m.p_r * duty_cycle(m, theta);
           });
}

inline double rebound_probability(const BuildingModel& m, double theta, double T, bool clamp = true) {
    const double p = T * m.loss_rate(theta);
    return clamp ? std::min(1.0, p) : p;
}

// Expected excess power right after release. With clamp = false the
// probability T * r_l is used as is, which can exceed one.
inline double expected_rebound(const Population& pop, double theta, double T, bool clamp = true) {
    return pop.sigma_reb * detail::sum_over_throttle_set(pop, theta, T, [&](const BuildingModel& m) {
               return rebound_probability(m, theta, T, clamp) * (1.0 - duty_cycle(m, theta)) * m.p_r;
           });
}

struct ResponseSurface {
    std::vector<double> theta_grid;
    std::vector<double> T_grid;
    std::vector<double> values;  // row-major, one row per T

    double at(std::size_t iT, std::size_t itheta) const { return values[iT * theta_grid.size() + itheta]; }
};

struct ResponseSurfaces {
    ResponseSurface reduction;
    ResponseSurface rebound;
    std::vector<double> argmax_theta_per_T;  // of the reduction surface
};

inline ResponseSurfaces response_surfaces(const Population& pop, const std::vector<double>& theta_grid,
                                          const std::vector<double>& T_grid, bool clamp_rebound = true) {
    if (theta_grid.empty() || T_grid.empty()) throw Error("response grids must be non-empty");
    if (!std::is_sorted(theta_grid.begin(), theta_grid.end()) || !std::is_sorted(T_grid.begin(), T_grid.end()))
        throw Error("response grids must be sorted");
    ResponseSurfaces s;
    s.reduction = {theta_grid, T_grid, {}};
    s.rebound = {theta_grid, T_grid, {}};
    for (double T : T_grid) {
        double best = -1.0, best_theta = theta_grid.front();
        for (double th : theta_grid) {
            const double red = expected_reduction(pop, th, T);
            s.reduction.values.push_back(red);
            s.rebound.values.push_back(expected_rebound(pop, th, T, clamp_rebound));
            if (red >= best) {  // ties resolve toward the warmer end
                best = red;
                best_theta = th;
            }
        }
        s.argmax_theta_per_T.push_back(best_theta);
    }
    return s;
}

inline void write_surface_csv(std::ostream& out, const ResponseSurfaces& s) {
    out << "theta_c,T_h,reduction_kw,rebound_kw\n";
    const auto& th = s.reduction.theta_grid;
    const auto& Ts = s.reduction.T_grid;
    for (std::size_t i = 0; i < Ts.size(); ++i)
        for (std::size_t j = 0; j < th.size(); ++j)
            out << csv::fmt(th[j]) << ',' << csv::fmt(Ts[i]) << ',' << csv::fmt(s.reduction.at(i, j)) << ','
                << csv::fmt(s.rebound.at(i, j)) << '\n';
}

inline nlohmann::json to_json(const Population& pop) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : pop.members) members.push_back(to_json(m));
    return {{"sigma_red", pop.sigma_red}, {"sigma_reb", pop.sigma_reb}, {"members", members}};
}

// Accepts {sigma_red, sigma_reb, members: [...]} or a bare array of models.
inline Population population_from_json(const nlohmann::json& j) {
    Population pop;
    try {
        const nlohmann::json* members = &j;
        if (j.is_object()) {
            pop.sigma_red = j.value("sigma_red", kDefaultSuccessRate);
            pop.sigma_reb = j.value("sigma_reb", pop.sigma_red);
            members = &j.at("members");
        }
        if (!members->is_array()) throw ParseError("population members must be an array");
        for (const auto& m : *members) pop.members.push_back(building_model_from_json(m));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("population JSON: ") + e.what());
    }
    pop.validate();
    return pop;
}

inline Population load_population(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open population file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("population file " + path + ": " + e.what());
    }
    return population_from_json(j);
}

}  // namespace hpflex
