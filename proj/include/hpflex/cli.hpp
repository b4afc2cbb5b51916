#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpflex/baseline_eval.hpp"
#include "hpflex/errors.hpp"
#include "hpflex/flexibility.hpp"
#include "hpflex/identify.hpp"
#include "hpflex/meter_ingest.hpp"
#include "hpflex/parallel.hpp"
#include "hpflex/population.hpp"
#include "hpflex/simulate.hpp"
#include "hpflex/thermal_id.hpp"

namespace hpflex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3 };

struct RunConfig {
    fs::path meter_dir;
    fs::path temperature_file;
    fs::path model_store = "models";
    fs::path output_dir = "out";

    DetectionParams detection{};
    robust::HuberOptions huber{};
    int max_outer_iterations = 200;
    ValidityRange valid{};

    double sigma_red = kDefaultSuccessRate;
    double sigma_reb = kDefaultSuccessRate;
    double default_f = 2.0;

    std::uint64_t seed = 1;
    double dt_min = 1.0;

    std::size_t N = 144;
    double t_s_min = 5.0;

    ScoreOptions scoring{};
};

namespace detail {

inline json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + " " + path.string() + ": " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Rejects keys outside `allowed` so typos surface as config errors.
inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : obj.items()) {
        (void)v;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
            throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

template <class T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

inline fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

inline void require_range(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    using detail::require_range;
    require_range(c.detection.min_on_h > 0 && c.detection.min_off_h > 0, "detection minima must be positive");
    require_range(c.huber.tuning > 0, "fit.huber_c must be positive");
    require_range(c.huber.max_iterations > 0 && c.max_outer_iterations > 0, "fit iteration limits must be positive");
    require_range(c.valid.lo < c.valid.hi, "fit.valid_theta_c must be [lo, hi] with lo < hi");
    require_range(c.sigma_red > 0 && c.sigma_red <= 1 && c.sigma_reb > 0 && c.sigma_reb <= 1,
                  "success rates must lie in (0, 1]");
    require_range(c.default_f >= 1, "population.default_f must be >= 1");
    require_range(c.dt_min > 0 && c.dt_min <= 5, "sim.dt_min must lie in (0, 5]");
    require_range(c.N >= 1 && c.t_s_min > 0, "horizon needs N >= 1 and t_s_min > 0");
    require_range(c.scoring.reference_window_h > 0 && c.scoring.rebound_horizon_h > 0 && c.scoring.lambda >= 0,
                  "evaluate parameters out of range");
    if (!c.meter_dir.empty() && !fs::is_directory(c.meter_dir))
        throw ConfigError("meter directory " + c.meter_dir.string() + " does not exist");
    if (!c.temperature_file.empty() && !fs::is_regular_file(c.temperature_file))
        throw ConfigError("temperature file " + c.temperature_file.string() + " does not exist");
}

// Relative paths are taken relative to the config file's directory.
inline RunConfig config_from_json(const json& j, const fs::path& base) {
    using detail::read;
    detail::check_keys(j, {"paths", "detection", "fit", "population", "sim", "horizon", "evaluate"}, "config");
    RunConfig c;
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        detail::check_keys(p, {"meter_dir", "temperature_file", "model_store", "output_dir"}, "paths");
        std::string s;
        if (s.clear(), read(p, "meter_dir", s, "paths"), !s.empty()) c.meter_dir = detail::resolve(base, s);
        if (s.clear(), read(p, "temperature_file", s, "paths"), !s.empty()) c.temperature_file = detail::resolve(base, s);
        if (s.clear(), read(p, "model_store", s, "paths"), !s.empty()) c.model_store = detail::resolve(base, s);
        if (s.clear(), read(p, "output_dir", s, "paths"), !s.empty()) c.output_dir = detail::resolve(base, s);
    }
    if (j.contains("detection")) {
        const auto& d = j["detection"];
        detail::check_keys(d, {"min_on_min", "min_off_min"}, "detection");
        double on = c.detection.min_on_h * 60, off = c.detection.min_off_h * 60;
        read(d, "min_on_min", on, "detection");
        read(d, "min_off_min", off, "detection");
        c.detection = {on / 60.0, off / 60.0};
    }
    if (j.contains("fit")) {
        const auto& f = j["fit"];
        detail::check_keys(f, {"huber_c", "max_iterations", "max_outer_iterations", "valid_theta_c"}, "fit");
        read(f, "huber_c", c.huber.tuning, "fit");
        read(f, "max_iterations", c.huber.max_iterations, "fit");
        read(f, "max_outer_iterations", c.max_outer_iterations, "fit");
        std::vector<double> v;
        read(f, "valid_theta_c", v, "fit");
        if (f.contains("valid_theta_c")) {
            if (v.size() != 2) throw ConfigError("fit.valid_theta_c must have two entries");
            c.valid = {v[0], v[1]};
        }
    }
    if (j.contains("population")) {
        const auto& p = j["population"];
        detail::check_keys(p, {"sigma_red", "sigma_reb", "default_f"}, "population");
        read(p, "sigma_red", c.sigma_red, "population");
        c.sigma_reb = c.sigma_red;
        read(p, "sigma_reb", c.sigma_reb, "population");
        read(p, "default_f", c.default_f, "population");
    }
    if (j.contains("sim")) {
        const auto& s = j["sim"];
        detail::check_keys(s, {"seed", "dt_min"}, "sim");
        read(s, "seed", c.seed, "sim");
        read(s, "dt_min", c.dt_min, "sim");
    }
    if (j.contains("horizon")) {
        const auto& h = j["horizon"];
        detail::check_keys(h, {"N", "t_s_min"}, "horizon");
        read(h, "N", c.N, "horizon");
        read(h, "t_s_min", c.t_s_min, "horizon");
    }
    if (j.contains("evaluate")) {
        const auto& e = j["evaluate"];
        detail::check_keys(e, {"reference_window_h", "rebound_horizon_h", "lambda"}, "evaluate");
        read(e, "reference_window_h", c.scoring.reference_window_h, "evaluate");
        read(e, "rebound_horizon_h", c.scoring.rebound_horizon_h, "evaluate");
        read(e, "lambda", c.scoring.lambda, "evaluate");
    }
    return c;
}

inline RunConfig load_config(const fs::path& path) {
    return config_from_json(detail::read_json_file(path, "config"), path.parent_path());
}

inline IdentifyOptions identify_options(const RunConfig& c) {
    IdentifyOptions o;
    o.detection = c.detection;
    o.thermal.fit.huber = c.huber;
    o.thermal.fit.max_outer_iterations = c.max_outer_iterations;
    o.thermal.fit.valid = c.valid;
    o.f = c.default_f;
    return o;
}

// Every *.json in the store that parses as a building model, sorted by name.
inline Population load_model_store(const fs::path& dir, double sigma_red, double sigma_reb) {
    if (!fs::is_directory(dir)) throw ConfigError("model store " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Population pop;
    pop.sigma_red = sigma_red;
    pop.sigma_reb = sigma_reb;
    for (const auto& f : files) {
        std::ifstream in(f);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ParseError("model file " + f.string() + ": " + e.what());
        }
        pop.members.push_back(building_model_from_json(j));
    }
    pop.validate();
    return pop;
}

// "v" or "lo:hi:step" (inclusive of hi up to rounding).
inline std::vector<double> parse_grid(const std::string& s) {
    auto num = [&](const std::string& t) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            throw ConfigError("bad number in grid '" + s + "'");
        }
        if (used != t.size()) throw ConfigError("bad number in grid '" + s + "'");
        return v;
    };
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() == 1) return {num(parts[0])};
    if (parts.size() != 3) throw ConfigError("grid must be 'value' or 'lo:hi:step', got '" + s + "'");
    const double lo = num(parts[0]), hi = num(parts[1]), st = num(parts[2]);
    if (!(st > 0) || hi < lo) throw ConfigError("grid '" + s + "' needs lo <= hi and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / st + 1e-9)) + 1;
    if (n > 100000) throw ConfigError("grid '" + s + "' is too large");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + st * static_cast<double>(i);
    return out;
}

// ---------------------------------------------------------------- identify

struct SkipEntry {
    std::string building_id;
    std::string stage;
    std::string error;
    std::string message;
};

inline int cmd_identify(const RunConfig& c, unsigned jobs, std::ostream& out) {
    if (c.meter_dir.empty()) throw ConfigError("identify needs paths.meter_dir");
    if (c.temperature_file.empty()) throw ConfigError("identify needs paths.temperature_file");
    const auto theta = load_temperature_csv(c.temperature_file);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(c.meter_dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    const auto opt = identify_options(c);
    std::vector<std::optional<BuildingModel>> models(files.size());
    std::vector<std::optional<SkipEntry>> skips(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        const std::string id = files[i].stem().string();
        try {
            const auto meter = hpflex::detail::run_stage(kStageIngest, [&] { return load_meter_csv(files[i]); });
            models[i] = identify_building(meter, theta, opt).model;
        } catch (const StageError& e) {
            skips[i] = SkipEntry{id, e.stage, e.type, e.what()};
        }
    });

    fs::create_directories(c.model_store);
    json skipped = json::array();
    std::size_t n_ok = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (models[i]) {
            detail::write_json(c.model_store / (models[i]->building_id + ".json"), to_json(*models[i]));
            ++n_ok;
        } else {
            const auto& s = *skips[i];
            skipped.push_back({{"building_id", s.building_id}, {"stage", s.stage}, {"error", s.error},
                               {"message", s.message}});
        }
    }
    detail::write_json(c.output_dir / "skip_report.json",
                       {{"identified", n_ok}, {"skipped_count", skipped.size()}, {"skipped", skipped}});
    out << "identified " << n_ok << " of " << files.size() << " buildings, skipped " << skipped.size() << '\n';
    return kOk;
}

// -------------------------------------------------------------------- flex

struct FlexArgs {
    std::string building;
    double x0 = 0.5;
    std::optional<double> theta;
    std::string start;
    std::optional<std::size_t> N;
    std::optional<double> t_s_min;
};

inline int cmd_flex(const RunConfig& c, const FlexArgs& a, std::ostream& out) {
    const fs::path model_file = c.model_store / (a.building + ".json");
    if (!fs::is_regular_file(model_file)) throw ConfigError("no model file " + model_file.string());
    if (a.x0 < 0 || a.x0 > 1) throw ConfigError("--x0 must lie in [0, 1]");
    const auto model = building_model_from_json(detail::read_json_file(model_file, "model"));
    const std::size_t N = a.N.value_or(c.N);
    const double t_s_h = a.t_s_min.value_or(c.t_s_min) / 60.0;
    if (N < 1 || !(t_s_h > 0)) throw ConfigError("horizon needs N >= 1 and t_s > 0");

    Timestamp start{};
    FlexHorizon h;
    if (a.theta) {
        if (!a.start.empty()) start = parse_iso8601(a.start);
        h = constant_horizon(N, t_s_h, *a.theta);
    } else {
        if (c.temperature_file.empty()) throw ConfigError("flex needs --theta or paths.temperature_file");
        if (a.start.empty()) throw ConfigError("flex with a temperature forecast needs --start");
        start = parse_iso8601(a.start);
        const auto theta = load_temperature_csv(c.temperature_file);
        h.N = N;
        h.t_s = t_s_h;
        for (std::size_t k = 0; k < N; ++k)
            h.theta_hat.push_back(mean_temperature(theta, add_hours(start, t_s_h * static_cast<double>(k)),
                                                   add_hours(start, t_s_h * static_cast<double>(k + 1))));
    }
    for (double th : h.theta_hat) model.check_theta(th);
    const auto poly = build_polytope(model, h, a.x0);
    const auto env = energy_envelope(poly);
    const auto deferral = max_deferral(poly);

    std::ostringstream csv_out;
    write_envelope_csv(csv_out, env, start, t_s_h);
    detail::write_text(c.output_dir / ("envelope_" + model.building_id + ".csv"), csv_out.str());
    const json summary{{"building_id", model.building_id}, {"N", N},           {"t_s_h", t_s_h},
                       {"x0", a.x0},                       {"start", format_iso8601(start)},
                       {"max_deferral", deferral},         {"rows", env.e_min_cum.size()}};
    detail::write_json(c.output_dir / ("flex_" + model.building_id + ".json"), summary);
    out << "max_deferral " << deferral << '\n';
    return kOk;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
    std::string theta = "0";
    std::string T = "1";
    bool no_clamp = false;
};

inline int cmd_predict(const RunConfig& c, const PredictArgs& a, std::ostream& out) {
    const auto pop = load_model_store(c.model_store, c.sigma_red, c.sigma_reb);
    if (pop.members.empty()) throw ConfigError("model store " + c.model_store.string() + " is empty");
    const auto theta_grid = parse_grid(a.theta);
    const auto T_grid = parse_grid(a.T);
    const auto s = response_surfaces(pop, theta_grid, T_grid, !a.no_clamp);

    std::ostringstream surface;
    write_surface_csv(surface, s);
    detail::write_text(c.output_dir / "surface.csv", surface.str());
    std::ostringstream argmax;
    argmax << "T_h,theta_c,reduction_kw\n";
    for (std::size_t i = 0; i < T_grid.size(); ++i) {
        const double th = s.argmax_theta_per_T[i];
        const auto j = static_cast<std::size_t>(std::find(theta_grid.begin(), theta_grid.end(), th) - theta_grid.begin());
        argmax << csv::fmt(T_grid[i]) << ',' << csv::fmt(th) << ',' << csv::fmt(s.reduction.at(i, j)) << '\n';
    }
    detail::write_text(c.output_dir / "argmax.csv", argmax.str());
    if (theta_grid.size() * T_grid.size() == 1) out << surface.str();
    else out << "wrote " << theta_grid.size() * T_grid.size() << " grid points\n";
    return kOk;
}

// ---------------------------------------------------------------- simulate

struct Scenario {
    std::string name;
    fs::path population;
    fs::path temperature;
    Timestamp start{};
    double duration_h = 24.0;
    std::optional<std::uint64_t> seed;
    std::optional<double> dt_min;
    bool persistent_nonresponse = false;

    bool has_event = false;
    Timestamp t_start{};
    double T_h = 1.0;
    double delta_T_h = 0.0;
    std::optional<std::vector<std::string>> group_ids;  // empty optional: the eligible set
    double group_fraction = 1.0;
    ReleaseMode release_mode = ReleaseMode::RandomDelay;
};

inline Scenario load_scenario(const fs::path& path) {
    const auto j = detail::read_json_file(path, "scenario");
    const auto base = path.parent_path();
    const std::string where = "scenario " + path.filename().string();
    detail::check_keys(j, {"name", "population", "temperature", "start", "duration_h", "seed", "dt_min",
                           "persistent_nonresponse", "event"},
                       where);
    Scenario s;
    s.name = path.stem().string();
    detail::read(j, "name", s.name, where);
    std::string pop, temp, start;
    detail::read(j, "population", pop, where);
    detail::read(j, "temperature", temp, where);
    detail::read(j, "start", start, where);
    if (pop.empty() || temp.empty() || start.empty())
        throw ConfigError(where + " needs population, temperature and start");
    s.population = detail::resolve(base, pop);
    s.temperature = detail::resolve(base, temp);
    if (!fs::exists(s.population)) throw ConfigError(where + ": population " + s.population.string() + " not found");
    if (!fs::is_regular_file(s.temperature))
        throw ConfigError(where + ": temperature " + s.temperature.string() + " not found");
    try {
        s.start = parse_iso8601(start);
    } catch (const ParseError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    detail::read(j, "duration_h", s.duration_h, where);
    if (!(s.duration_h > 0)) throw ConfigError(where + ": duration_h must be positive");
    if (j.contains("seed")) {
        std::uint64_t v = 0;
        detail::read(j, "seed", v, where);
        s.seed = v;
    }
    if (j.contains("dt_min")) {
        double v = 0;
        detail::read(j, "dt_min", v, where);
        s.dt_min = v;
    }
    detail::read(j, "persistent_nonresponse", s.persistent_nonresponse, where);
    if (j.contains("event")) {
        const auto& e = j["event"];
        const std::string ew = where + ".event";
        detail::check_keys(e, {"t_start", "T_h", "delta_T_min", "group", "group_fraction", "release_mode"}, ew);
        s.has_event = true;
        std::string ts;
        detail::read(e, "t_start", ts, ew);
        if (ts.empty()) throw ConfigError(ew + " needs t_start");
        try {
            s.t_start = parse_iso8601(ts);
        } catch (const ParseError& err) {
            throw ConfigError(ew + ": " + err.what());
        }
        detail::read(e, "T_h", s.T_h, ew);
        double dmin = 0;
        detail::read(e, "delta_T_min", dmin, ew);
        s.delta_T_h = dmin / 60.0;
        if (!(s.T_h > 0) || dmin < 0) throw ConfigError(ew + ": need T_h > 0 and delta_T_min >= 0");
        if (e.contains("group")) {
            if (e["group"].is_string()) {
                if (e["group"] != "eligible") throw ConfigError(ew + ".group must be \"eligible\" or a list of ids");
            } else {
                std::vector<std::string> ids;
                detail::read(e, "group", ids, ew);
                s.group_ids = ids;
            }
        }
        detail::read(e, "group_fraction", s.group_fraction, ew);
        if (!(s.group_fraction > 0 && s.group_fraction <= 1)) throw ConfigError(ew + ".group_fraction must lie in (0, 1]");
        std::string mode = "random_delay";
        detail::read(e, "release_mode", mode, ew);
        if (mode == "random_delay") s.release_mode = ReleaseMode::RandomDelay;
        else if (mode == "tmax_capped") s.release_mode = ReleaseMode::TmaxCapped;
        else throw ConfigError(ew + ".release_mode must be random_delay or tmax_capped");
        if (s.t_start < s.start || hours_between(s.start, s.t_start) >= s.duration_h)
            throw ConfigError(ew + ".t_start lies outside the simulated period");
    }
    return s;
}

// Seeded subset of `ids` of size round(fraction * n), order preserved.
inline std::vector<std::string> sample_group(const std::vector<std::string>& ids, double fraction, std::uint64_t seed) {
    const auto n = ids.size();
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    auto rng = make_rng(seed, 0, 40);
    for (std::size_t i = n; i > 1; --i) {
        const auto r = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(r, i - 1)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(ids[i]);
    return out;
}

inline std::string power_csv(Timestamp t0, double step_s, const std::vector<double>& p) {
    std::ostringstream s;
    write_power_csv(s, t0, step_s, p);
    return s.str();
}

inline void run_scenario(const RunConfig& c, const Scenario& s, std::optional<std::uint64_t> seed_override) {
    const Population pop = fs::is_directory(s.population) ? load_model_store(s.population, c.sigma_red, c.sigma_reb)
                                                          : load_population(s.population.string());
    if (pop.members.empty()) throw ConfigError("scenario " + s.name + ": empty population");
    const auto theta = load_temperature_csv(s.temperature);
    const std::uint64_t seed = seed_override.value_or(s.seed.value_or(c.seed));

    SimOptions opt;
    opt.dt_min = s.dt_min.value_or(c.dt_min);
    opt.keep_per_building = true;
    opt.persistent_nonresponse = s.persistent_nonresponse;

    std::optional<DREventPlan> plan;
    json plan_json;
    if (s.has_event) {
        const double th = temperature_at(theta, s.t_start);
        std::vector<std::string> group =
            s.group_ids ? *s.group_ids : sample_group(throttle_set(pop, th, s.T_h), s.group_fraction, seed);
        if (group.empty()) throw Error("scenario " + s.name + ": no building is eligible for the event");
        try {
            plan = plan_release(pop, group, s.t_start, s.T_h, s.delta_T_h, th, seed, s.release_mode);
        } catch (const IneligibleBuildingError& e) {
            throw ConfigError(std::string("scenario ") + s.name + ": " + e.what());
        }
        Population sub;
        sub.sigma_red = pop.sigma_red;
        sub.sigma_reb = pop.sigma_reb;
        for (const auto& id : group) sub.members.push_back(*pop.find(id));
        json releases = json::object();
        for (const auto& [id, t] : plan->release_times) releases[id] = format_iso8601(t);
        plan_json = {{"scenario", s.name},
                     {"seed", seed},
                     {"theta_c", th},
                     {"t_start", format_iso8601(plan->t_start)},
                     {"T_h", plan->T},
                     {"delta_T_h", plan->delta_T},
                     {"group", group},
                     {"release_times", releases},
                     {"predictions",
                      {{"reduction_kw", expected_reduction(sub, th, s.T_h)},
                       {"peak_rebound_kw", expected_rebound(sub, th, s.T_h)}}},
                     {"controlled_csv", "controlled.csv"},
                     {"reference_csv", "reference.csv"}};
    }

    const auto res = run(pop, plan, theta, s.start, s.duration_h, seed, opt);
    const auto n = res.aggregate_power.size();
    std::vector<double> ctrl(n, 0.0), ref(n, 0.0);
    std::set<std::string> group_set;
    if (plan) group_set.insert(plan->group.begin(), plan->group.end());
    for (std::size_t h = 0; h < res.building_ids.size(); ++h) {
        auto& dst = group_set.count(res.building_ids[h]) ? ctrl : ref;
        for (std::size_t k = 0; k < n; ++k) dst[k] += res.per_building_power[h][k];
    }

    const fs::path dir = c.output_dir / s.name;
    detail::write_text(dir / "aggregate.csv", power_csv(res.t0, res.step_s, res.aggregate_power));
    std::ostringstream events;
    write_events_log_csv(events, res);
    detail::write_text(dir / "events.csv", events.str());
    if (plan) {
        detail::write_text(dir / "controlled.csv", power_csv(res.t0, res.step_s, ctrl));
        detail::write_text(dir / "reference.csv", power_csv(res.t0, res.step_s, ref));
        detail::write_json(dir / "plan.json", plan_json);
    }
}

inline int cmd_simulate(const RunConfig& c, const std::vector<std::string>& scenario_files,
                        std::optional<std::uint64_t> seed, unsigned jobs, std::ostream& out) {
    if (scenario_files.empty()) throw ConfigError("simulate needs at least one --scenario");
    std::vector<Scenario> scenarios;
    std::set<std::string> names;
    for (const auto& f : scenario_files) {
        scenarios.push_back(load_scenario(f));
        if (!names.insert(scenarios.back().name).second)
            throw ConfigError("duplicate scenario name " + scenarios.back().name);
    }
    parallel_for(scenarios.size(), jobs, [&](std::size_t i) { run_scenario(c, scenarios[i], seed); });
    for (const auto& s : scenarios) out << "simulated " << s.name << " -> " << (c.output_dir / s.name).string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EventSpec {
    std::string name;
    fs::path controlled;
    fs::path reference;
    DREventPlan plan;
    EventPredictions predictions;
};

inline PowerSeries load_power_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open power file " + path.string());
    return parse_power_csv(in);
}

// Accepts the plan.json written by simulate, or any file with the same keys.
inline EventSpec load_event_spec(const fs::path& path) {
    const auto j = detail::read_json_file(path, "event spec");
    const auto base = path.parent_path();
    const std::string where = "event " + path.string();
    EventSpec e;
    e.name = path.stem() == "plan" && !base.empty() ? fs::absolute(base).filename().string() : path.stem().string();
    if (j.contains("scenario") && j["scenario"].is_string()) e.name = j["scenario"].get<std::string>();
    std::string ctrl, ref, ts;
    detail::read(j, "controlled_csv", ctrl, where);
    detail::read(j, "reference_csv", ref, where);
    detail::read(j, "t_start", ts, where);
    if (ctrl.empty() || ref.empty() || ts.empty() || !j.contains("T_h") || !j.contains("predictions"))
        throw ConfigError(where + " needs controlled_csv, reference_csv, t_start, T_h and predictions");
    e.controlled = detail::resolve(base, ctrl);
    e.reference = detail::resolve(base, ref);
    try {
        e.plan.t_start = parse_iso8601(ts);
        detail::read(j, "T_h", e.plan.T, where);
        detail::read(j, "delta_T_h", e.plan.delta_T, where);
        detail::read(j, "group", e.plan.group, where);
        if (j.contains("release_times")) {
            if (!j["release_times"].is_object()) throw ConfigError(where + ".release_times must be an object");
            for (const auto& [id, t] : j["release_times"].items())
                e.plan.release_times[id] = parse_iso8601(t.get<std::string>());
        }
        const auto& p = j["predictions"];
        detail::read(p, "reduction_kw", e.predictions.reduction_kw, where + ".predictions");
        detail::read(p, "peak_rebound_kw", e.predictions.peak_rebound_kw, where + ".predictions");
    } catch (const ParseError& err) {
        throw ConfigError(where + ": " + err.what());
    } catch (const json::exception& err) {
        throw ConfigError(where + ": " + err.what());
    }
    return e;
}

inline int cmd_evaluate(const RunConfig& c, const std::vector<std::string>& event_files, unsigned jobs,
                        std::ostream& out) {
    if (event_files.empty()) throw ConfigError("evaluate needs at least one --event");
    std::vector<EventSpec> specs;
    std::set<std::string> names;
    for (const auto& f : event_files) {
        specs.push_back(load_event_spec(f));
        if (!names.insert(specs.back().name).second) throw ConfigError("duplicate event name " + specs.back().name);
    }
    std::vector<PredictionReport> reports(specs.size());
    parallel_for(specs.size(), jobs, [&](std::size_t i) {
        const auto& e = specs[i];
        reports[i] = score_event(load_power_csv(e.controlled), load_power_csv(e.reference), e.plan, e.predictions,
                                 c.scoring);
    });
    for (std::size_t i = 0; i < specs.size(); ++i) {
        auto j = to_json(reports[i]);
        j["event"] = specs[i].name;
        detail::write_json(c.output_dir / (specs[i].name + "_report.json"), j);
        std::ostringstream b;
        write_baseline_csv(b, reports[i].baseline);
        detail::write_text(c.output_dir / (specs[i].name + "_baseline.csv"), b.str());
        out << specs[i].name << ": reduction " << csv::fmt(reports[i].realized_avg_reduction_kw) << " kW, peak rebound "
            << csv::fmt(reports[i].realized_peak_rebound_kw) << " kW\n";
    }
    detail::write_json(c.output_dir / "ape_statistics.json", to_json(ape_statistics(reports)));
    return kOk;
}

// --------------------------------------------------------------- front end

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heat pump flexibility toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1u, 1024u));
    app.add_option("--seed", seed, "random seed (overrides config and scenario)");
    app.add_option("--out-dir", out_dir, "output directory");

    auto* identify = app.add_subcommand("identify", "fit building models from meter data");

    FlexArgs flex_args;
    auto* flex = app.add_subcommand("flex", "flexibility envelope of one building");
    flex->add_option("--building", flex_args.building, "building id")->required();
    flex->add_option("--x0", flex_args.x0, "initial state of charge")->required();
    flex->add_option("--theta", flex_args.theta, "constant forecast temperature, degC");
    flex->add_option("--start", flex_args.start, "horizon start (ISO 8601)");
    flex->add_option("--N", flex_args.N, "horizon steps");
    flex->add_option("--t-s-min", flex_args.t_s_min, "step length in minutes");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "expected load reduction and rebound");
    predict->add_option("--theta", predict_args.theta, "temperature or lo:hi:step grid, degC");
    predict->add_option("--T", predict_args.T, "throttle duration or lo:hi:step grid, h");
    predict->add_flag("--no-clamp", predict_args.no_clamp, "do not clamp the rebound probability at one");

    std::vector<std::string> scenarios;
    auto* simulate = app.add_subcommand("simulate", "simulate scenarios");
    simulate->add_option("--scenario", scenarios, "scenario JSON (repeatable)")->required();

    std::vector<std::string> events;
    auto* evaluate = app.add_subcommand("evaluate", "score demand response events");
    evaluate->add_option("--event", events, "event JSON (repeatable)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int rc = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return rc == 0 ? kOk : kUsage;
    }

    try {
        RunConfig c;
        if (!config_path.empty()) c = load_config(config_path);
        if (!out_dir.empty()) c.output_dir = out_dir;
        validate(c);
        if (seed) c.seed = *seed;

        if (*identify) return cmd_identify(c, jobs, out);
        if (*flex) return cmd_flex(c, flex_args, out);
        if (*predict) return cmd_predict(c, predict_args, out);
        if (*simulate) return cmd_simulate(c, scenarios, seed, jobs, out);
        if (*evaluate) return cmd_evaluate(c, events, jobs, out);
        return kUsage;
    } catch (const ConfigError& e) {
        err << "hpflex: config error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "hpflex: data error: " << e.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "hpflex: " << e.what() << '\n';
        return kData;
    }
}

}  // namespace hpflex::cli
