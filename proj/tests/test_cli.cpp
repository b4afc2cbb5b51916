#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpflex/cli.hpp"
#include "hpflex/synthetic.hpp"

using namespace hpflex;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Timestamp kT0 = parse_iso8601("2021-01-01T00:00:00Z");

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "hpflex");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void write(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << s;
}

BuildingModel cycling_model(const std::string& id, double c_c) {
    BuildingModel m;
    m.building_id = id;
    m.p_r = 3.0;
    m.loss = {-0.07, 1.5};
    m.charge = {-17.85, 473.26, c_c};
    m.f = 2.0;
    return m;
}

class CliTest : public ::testing::Test {
protected:
    static fs::path root;

    static void SetUpTestSuite() {
        root = fs::temp_directory_path() / "hpflex_cli_test";
        fs::remove_all(root);
        synthetic::WinterOptions w;
        w.days = 30;
        const auto temp = synthetic::winter(kT0, w, 5);
        std::ostringstream t;
        synthetic::write_temperature_csv(t, temp);
        write(root / "temperature.csv", t.str());

        synthetic::MeterOptions mo;
        mo.noise_sd_kw = 0.1;
        for (int i = 0; i < 3; ++i) {
            const auto m = cycling_model("bld" + std::to_string(i), 1.6 + 0.15 * i);
            const auto sm = synthetic::synthesize_meter(m, temp, kT0, 30 * 24, mo, 100 + i);
            std::ostringstream s;
            synthetic::write_meter_csv(s, sm.meter);
            write(root / "meters" / (m.building_id + ".csv"), s.str());
        }
        write(root / "config.json", json{{"paths",
                                          {{"meter_dir", "meters"},
                                           {"temperature_file", "temperature.csv"},
                                           {"model_store", "models"},
                                           {"output_dir", "out"}}},
                                         {"detection", {{"min_on_min", 10}, {"min_off_min", 10}}}}
                                            .dump(2));
    }

    static std::string config() { return (root / "config.json").string(); }
};

fs::path CliTest::root;

}  // namespace

TEST_F(CliTest, IdentifyThreeBuildings) {
    const auto r = run_cli({"--config", config(), "--jobs", "2", "identify"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(fs::exists(root / "models" / ("bld" + std::to_string(i) + ".json")));
    const auto skip = json::parse(slurp(root / "out" / "skip_report.json"));
    EXPECT_EQ(skip["identified"], 3);
    EXPECT_TRUE(skip["skipped"].empty());
    const auto m = building_model_from_json(json::parse(slurp(root / "models" / "bld0.json")));
    EXPECT_NEAR(m.p_r, 3.0, 0.06);
    EXPECT_EQ(m.f, 2.0);
}

TEST_F(CliTest, IdentifySkipsConstantPower) {
    const auto dir = root / "flat";
    std::ostringstream s;
    s << "timestamp_utc,energy_kwh\n";
    for (int k = 0; k < 2000; ++k) s << format_iso8601(kT0 + Seconds(300.0 * k)) << ',' << 0.1 * k << '\n';
    write(dir / "meters" / "flat.csv", s.str());
    write(dir / "config.json", json{{"paths",
                                     {{"meter_dir", "meters"},
                                      {"temperature_file", (root / "temperature.csv").string()},
                                      {"model_store", "models"},
                                      {"output_dir", "out"}}}}
                                   .dump());
    const auto r2 = run_cli({"--config", (dir / "config.json").string(), "identify"});
    ASSERT_EQ(r2.code, 0) << r2.err;
    const auto skip = json::parse(slurp(dir / "out" / "skip_report.json"));
    ASSERT_EQ(skip["skipped"].size(), 1u);
    EXPECT_EQ(skip["skipped"][0]["error"], "DegenerateClusterError");
    EXPECT_EQ(skip["skipped"][0]["stage"], "detect");
}

TEST_F(CliTest, MissingTemperatureFile) {
    const auto dir = root / "notemp";
    write(dir / "config.json",
          json{{"paths", {{"meter_dir", (root / "meters").string()}, {"temperature_file", "nope.csv"}}}}.dump());
    EXPECT_EQ(run_cli({"--config", (dir / "config.json").string(), "identify"}).code, 2);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"flex"}).code, 2);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    const auto dir = root / "badcfg";
    write(dir / "config.json", R"({"paths": {"model_store": "m"}, "sim": {"sed": 3}})");
    EXPECT_EQ(run_cli({"--config", (dir / "config.json").string(), "predict"}).code, 2);
}

TEST_F(CliTest, FlexEnvelope) {
    const auto dir = root / "flex";
    BuildingModel m = cycling_model("const", 2.0);
    m.loss = {0.0, 2.0};
    write(dir / "models" / "const.json", to_json(m).dump());
    write(dir / "config.json", json{{"paths", {{"model_store", "models"}, {"output_dir", "out"}}}}.dump());
    const auto cfg = (dir / "config.json").string();

    auto r = run_cli({"--config", cfg, "flex", "--building", "const", "--x0", "0.75", "--theta", "0", "--N", "144",
                  "--t-s-min", "5", "--start", "2021-01-05T00:00:00Z"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(slurp(dir / "out" / "envelope_const.csv")), 145u);
    EXPECT_EQ(r.out, "max_deferral 4\n");

    r = run_cli({"--config", cfg, "flex", "--building", "const", "--x0", "0.5", "--theta", "0", "--N", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(slurp(dir / "out" / "envelope_const.csv")), 2u);
    EXPECT_EQ(r.out, "max_deferral 1\n");

    r = run_cli({"--config", cfg, "flex", "--building", "const", "--x0", "0.6", "--theta", "0", "--N", "24"});
    EXPECT_EQ(r.out, "max_deferral 3\n");  // floor(0.6 / (2/12)) = 3

    EXPECT_EQ(run_cli({"--config", cfg, "flex", "--building", "ghost", "--x0", "0.5", "--theta", "0"}).code, 2);
}

TEST_F(CliTest, FlexFromTemperatureForecast) {
    ASSERT_EQ(run_cli({"--config", config(), "identify"}).code, 0);
    const auto r = run_cli({"--config", config(), "flex", "--building", "bld1", "--x0", "0.75", "--start",
                        "2021-01-10T00:00:00Z"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(slurp(root / "out" / "envelope_bld1.csv")), 145u);
}

TEST_F(CliTest, PredictPointAndGrid) {
    const auto dir = root / "predict";
    Population pop;
    for (int i = 0; i < 4; ++i) {
        auto m = cycling_model("p" + std::to_string(i), 1.8);
        m.f = 3.0;
        write(dir / "models" / (m.building_id + ".json"), to_json(m).dump());
        pop.members.push_back(m);
    }
    write(dir / "config.json", json{{"paths", {{"model_store", "models"}, {"output_dir", "out"}}},
                                    {"population", {{"sigma_red", 0.9}}}}
                                   .dump());
    const auto cfg = (dir / "config.json").string();
    auto r = run_cli({"--config", cfg, "predict", "--theta", "2", "--T", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(r.out), 2u);  // header and one row
    const auto& m = pop.members[0];
    const double red = 4 * 0.9 * m.p_r * duty_cycle(m, 2.0);
    std::istringstream row(r.out.substr(r.out.find('\n') + 1));
    std::string th, T, red_s, reb_s;
    std::getline(row, th, ',');
    std::getline(row, T, ',');
    std::getline(row, red_s, ',');
    std::getline(row, reb_s);
    EXPECT_NEAR(std::stod(red_s), red, 1e-9);

    r = run_cli({"--config", cfg, "predict", "--theta=-10:10:5", "--T", "0.5:2:0.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(slurp(dir / "out" / "surface.csv")), 1u + 5 * 4);
    EXPECT_EQ(lines(slurp(dir / "out" / "argmax.csv")), 1u + 4);

    fs::create_directories(dir / "empty");
    write(dir / "empty.json", json{{"paths", {{"model_store", "empty"}, {"output_dir", "out"}}}}.dump());
    EXPECT_EQ(run_cli({"--config", (dir / "empty.json").string(), "predict"}).code, 2);
}

TEST_F(CliTest, SimulateEvaluateStaggering) {
    const auto dir = root / "sim";
    synthetic::PopulationOptions po;
    po.size = 200;
    po.f = {1.5, 4.0};
    write(dir / "population.json", to_json(synthetic::random_population(po, 3)).dump());
    std::ostringstream t;
    synthetic::write_temperature_csv(t, synthetic::constant_temperature(kT0, 20, 2.0));
    write(dir / "temperature.csv", t.str());
    auto scenario = [&](const std::string& name, double delta) {
        write(dir / (name + ".json"),
              json{{"population", "population.json"},
                   {"temperature", "temperature.csv"},
                   {"start", "2021-01-01T00:00:00Z"},
                   {"duration_h", 14},
                   {"seed", 11},
                   {"event", {{"t_start", "2021-01-01T09:00:00Z"}, {"T_h", 1}, {"delta_T_min", delta}}}}
                  .dump(2));
        return (dir / (name + ".json")).string();
    };
    const auto sync = scenario("sync", 0), stag = scenario("stag", 45);
    write(dir / "config.json", json{{"paths", {{"output_dir", "out"}}}}.dump());
    const auto cfg = (dir / "config.json").string();

    auto r = run_cli({"--config", cfg, "--jobs", "2", "simulate", "--scenario", sync, "--scenario", stag});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto first = slurp(dir / "out" / "sync" / "aggregate.csv");
    const auto first_events = slurp(dir / "out" / "sync" / "events.csv");
    EXPECT_EQ(lines(first), 1u + 14 * 12);
    ASSERT_EQ(run_cli({"--config", cfg, "simulate", "--scenario", sync}).code, 0);
    EXPECT_EQ(slurp(dir / "out" / "sync" / "aggregate.csv"), first);
    EXPECT_EQ(slurp(dir / "out" / "sync" / "events.csv"), first_events);

    r = run_cli({"--config", cfg, "evaluate", "--event", (dir / "out" / "sync" / "plan.json").string(), "--event",
             (dir / "out" / "stag" / "plan.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto a = json::parse(slurp(dir / "out" / "sync_report.json"));
    const auto b = json::parse(slurp(dir / "out" / "stag_report.json"));
    EXPECT_GT(a["realized_avg_reduction_kw"].get<double>(), 0.0);
    EXPECT_LT(b["realized_peak_rebound_kw"].get<double>(), a["realized_peak_rebound_kw"].get<double>());
    EXPECT_TRUE(fs::exists(dir / "out" / "ape_statistics.json"));
}

TEST_F(CliTest, SimulateSchemaErrors) {
    const auto dir = root / "simbad";
    write(dir / "s.json", R"({"population": "nope.json", "temperature": "t.csv", "start": "2021-01-01T00:00:00Z"})");
    EXPECT_EQ(run_cli({"simulate", "--scenario", (dir / "s.json").string()}).code, 2);
    write(dir / "t.csv", "timestamp_utc,temp_c\n2021-01-01T00:00:00Z,1\n2021-01-01T01:00:00Z,1\n");
    write(dir / "p.json", "[]");
    write(dir / "s2.json", R"({"population": "p.json", "temperature": "t.csv", "start": "2021-01-01T00:00:00Z",
                               "event": {"t_start": "2021-01-01T00:00:00Z", "T_h": 1, "colour": 3}})");
    EXPECT_EQ(run_cli({"simulate", "--scenario", (dir / "s2.json").string()}).code, 2);
}
