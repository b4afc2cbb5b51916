#pragma once

#include <string>
#include <vector>

#include "hpflex/hp_detect.hpp"
#include "hpflex/meter_ingest.hpp"
#include "hpflex/thermal_id.hpp"

namespace hpflex {

struct IdentifyOptions {
    DetectionParams detection{};
    ThermalFitOptions thermal{};
    double f = 1.0;  // flexibility factor assigned to the identified model
};

struct Identification {
    BuildingModel model;
    SwitchingAnalysis switching;
    std::vector<HeatingCycle> cycles;
    std::size_t cycles_used = 0;
};

// Stage names used in skip reports.
inline constexpr const char* kStageIngest = "ingest";
inline constexpr const char* kStageDetect = "detect";
inline constexpr const char* kStageFit = "thermal_id";

struct StageError : Error {
    StageError(std::string stage_, std::string type_, const std::string& what)
        : Error(what), stage(std::move(stage_)), type(std::move(type_)) {}
    std::string stage;
    std::string type;
};

namespace detail {

inline std::string error_type(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const MonotonicityError*>(&e)) return "MonotonicityError";
    if (dynamic_cast<const GapError*>(&e)) return "GapError";
    if (dynamic_cast<const CoverageError*>(&e)) return "CoverageError";
    if (dynamic_cast<const LengthError*>(&e)) return "LengthError";
    if (dynamic_cast<const DegenerateClusterError*>(&e)) return "DegenerateClusterError";
    if (dynamic_cast<const UndefinedEdge*>(&e)) return "UndefinedEdge";
    if (dynamic_cast<const EmptySetError*>(&e)) return "EmptySetError";
    if (dynamic_cast<const InsufficientDataError*>(&e)) return "InsufficientDataError";
    if (dynamic_cast<const SlopeSignError*>(&e)) return "SlopeSignError";
    if (dynamic_cast<const NonConvergenceError*>(&e)) return "NonConvergenceError";
    return "Error";
}

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, error_type(e), e.what());
    }
}

}  // namespace detail

// meter -> power -> switching events -> cycles -> rate fits. Failures are
// rethrown as StageError naming the stage.
inline Identification identify_building(const MeterSeries& meter, const TemperatureSeries& theta,
                                        const IdentifyOptions& opt = {}) {
    Identification out;
    const auto power = detail::run_stage(kStageIngest, [&] { return power_from_energy(meter); });
    out.switching = detail::run_stage(kStageDetect, [&] { return analyze_switching(power, opt.detection); });
    out.cycles = detail::run_stage(kStageDetect, [&] { return cycles_from_events(out.switching.events, theta, &power); });
    const auto fit = detail::run_stage(kStageFit, [&] { return fit_thermal(out.cycles, opt.thermal); });
    out.model.building_id = meter.building_id;
    out.model.p_r = out.switching.p_r;
    out.model.loss = fit.loss;
    out.model.charge = fit.charge;
    out.model.f = opt.f;
    out.model.valid = opt.thermal.fit.valid;
    out.cycles_used = fit.cycles_used;
    detail::run_stage(kStageFit, [&] {
        validate(out.model);
        return 0;
    });
    return out;
}

}  // namespace hpflex
