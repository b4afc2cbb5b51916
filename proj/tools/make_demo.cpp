// Writes the synthetic demo data set: a population, a winter temperature
// record, a few meter files generated from population members, a config and
// two event scenarios that differ only in the release spread.
//
//   hpflex_make_demo [out_dir]      (default: data/demo)

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hpflex/population.hpp"
#include "hpflex/synthetic.hpp"

namespace fs = std::filesystem;
using namespace hpflex;
using nlohmann::json;

namespace {

void write_text(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
}

json scenario(const std::string& name, double delta_T_min) {
    return {{"name", name},
            {"population", "../population.json"},
            {"temperature", "../temperature.csv"},
            {"start", "2021-01-25T00:00:00Z"},
            {"duration_h", 16},
            {"seed", 7},
            {"event",
             {{"t_start", "2021-01-25T10:00:00Z"},
              {"T_h", 1.0},
              {"delta_T_min", delta_T_min},
              {"group", "eligible"},
              {"group_fraction", 0.5}}}};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? argv[1] : "data/demo";
    const Timestamp t0 = parse_iso8601("2021-01-04T00:00:00Z");
    const std::uint64_t seed = 1;

    synthetic::PopulationOptions po;
    po.size = 200;
    const auto pop = synthetic::random_population(po, seed);
    write_text(dir / "population.json", to_json(pop).dump(1) + "\n");

    synthetic::WinterOptions wo;
    wo.days = 35;
    const auto theta = synthetic::winter(t0, wo, seed);
    std::ostringstream t;
    synthetic::write_temperature_csv(t, theta);
    write_text(dir / "temperature.csv", t.str());

    // 3 weeks of 5-min registers for the first few buildings
    synthetic::MeterOptions mo;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto sm = synthetic::synthesize_meter(pop.members[i], theta, t0, 21 * 24, mo, seed, i);
        std::ostringstream m;
        synthetic::write_meter_csv(m, sm.meter);
        write_text(dir / "meters" / (pop.members[i].building_id + ".csv"), m.str());
    }

    const json config = {
        {"paths",
         {{"meter_dir", "meters"}, {"temperature_file", "temperature.csv"}, {"model_store", "models"},
          {"output_dir", "out"}}},
        {"detection", {{"min_on_min", 10}, {"min_off_min", 10}}},
        {"population", {{"sigma_red", 0.88}, {"sigma_reb", 0.88}, {"default_f", 2.0}}},
        {"sim", {{"seed", 7}, {"dt_min", 1}}},
        {"horizon", {{"N", 144}, {"t_s_min", 5}}},
        {"evaluate", {{"reference_window_h", 8}, {"rebound_horizon_h", 3}, {"lambda", 100}}}};
    write_text(dir / "config.json", config.dump(2) + "\n");
    write_text(dir / "scenarios" / "throttle_1h.json", scenario("throttle_1h", 0).dump(2) + "\n");
    write_text(dir / "scenarios" / "throttle_1h_stagger45.json", scenario("throttle_1h_stagger45", 45).dump(2) + "\n");
    std::cout << "wrote demo data to " << dir.string() << "\n";
}
