#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "irrisched/harness.hpp"

using namespace irrisched;
using namespace irrisched::harness;

namespace {

std::string weather_csv(int days, const std::string& start = "2015-05-05") {
    std::ostringstream out;
    write_weather(out, synthetic_weather(start, days, Climate::Dry, 1));
    return out.str();
}

SeasonConfig short_season(int days_horizon = 5) {
    SeasonConfig cfg;
    cfg.start_date.clear();
    cfg.end_date.clear();
    cfg.horizon = days_horizon;
    cfg.gdd_at_start = 400.0;
    return cfg;
}

std::vector<ZoneModels> random_models() {
    std::vector<ZoneModels> out;
    const auto zones = default_zones();
    for (int z = 0; z < 3; ++z) {
        ZoneModels m;
        m.surrogate = fixtures::zone_model(z);
        m.policy = rl::PolicyNet::init(static_cast<int>(make_column(zones[z]).grid().node_count()) + 3, 16, 70 + z);
        m.policy.b_logits << 0.0, 0.4;
        m.policy.u_min = zones[z].irrigation.lo;
        m.policy.u_max = zones[z].irrigation.hi;
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

TEST(Weather, ReadsWellFormedSeason) {
    std::istringstream in(weather_csv(123));
    const auto w = read_weather(in);
    ASSERT_EQ(w.size(), 123u);
    EXPECT_EQ(w.front().date, "2015-05-05");
    EXPECT_EQ(w.back().date, "2015-09-04");
}

TEST(Weather, RejectsNegativeRainWithLine) {
    std::istringstream in("date,rain_mm,et0_mm,tavg_c\n2015-05-05,0,4,15\n2015-05-06,-1,4,15\n");
    try {
        read_weather(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Weather, RejectsMalformedInput) {
    std::istringstream header("day,rain,et0,t\n");
    EXPECT_THROW(read_weather(header), ParseError);
    std::istringstream fields("date,rain_mm,et0_mm,tavg_c\n2015-05-05,0,4\n");
    EXPECT_THROW(read_weather(fields), ParseError);
    std::istringstream number("date,rain_mm,et0_mm,tavg_c\n2015-05-05,0,x,15\n");
    EXPECT_THROW(read_weather(number), ParseError);
    std::istringstream date("date,rain_mm,et0_mm,tavg_c\n2015-02-30,0,4,15\n");
    EXPECT_THROW(read_weather(date), ParseError);
    EXPECT_THROW(load_weather("/nonexistent/weather.csv"), InvalidArgument);
}

TEST(Weather, DetectsGaps) {
    std::istringstream in("date,rain_mm,et0_mm,tavg_c\n2015-05-05,0,4,15\n2015-05-07,0,4,15\n");
    EXPECT_THROW(read_weather(in), GapError);
    std::istringstream month("date,rain_mm,et0_mm,tavg_c\n2015-05-31,0,4,15\n2015-06-01,0,4,15\n");
    EXPECT_EQ(read_weather(month).size(), 2u);
}

TEST(Weather, SyntheticPresets) {
    const auto a = synthetic_weather("2015-05-05", 123, Climate::Dry, 4);
    const auto b = synthetic_weather("2015-05-05", 123, Climate::Dry, 4);
    std::ostringstream sa, sb;
    write_weather(sa, a);
    write_weather(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    double dry = 0.0, wet = 0.0;
    for (int seed = 0; seed < 10; ++seed) {
        for (const auto& r : synthetic_weather("2015-05-05", 123, Climate::Dry, seed)) dry += r.rain_mm;
        for (const auto& r : synthetic_weather("2015-05-05", 123, Climate::Wet, seed)) wet += r.rain_mm;
    }
    EXPECT_LT(dry, wet);
    for (const auto& r : a) {
        EXPECT_GE(r.rain_mm, 0.0);
        EXPECT_GT(r.et0_mm, 0.0);
    }
}

TEST(Forecast, ZeroNoiseIsTruth) {
    const auto w = synthetic_weather("2015-06-01", 30, Climate::Wet, 2);
    SeasonConfig cfg = short_season();
    const auto cal = crop_calendar(w, cfg);
    const auto truth = true_forecast(w, cal, 3, 14);
    const auto f = perturb_forecast(truth, {0.0, 0.0, 7.0}, 9);
    EXPECT_EQ(f.rain, truth.rain);
    EXPECT_EQ(f.et0, truth.et0);
    EXPECT_EQ(f.kc, truth.kc);
}

TEST(Forecast, ReproducibleAndNonNegative) {
    mpc::Forecast truth{std::vector<double>(14, 0.0), std::vector<double>(14, 0.2), std::vector<double>(14, 1.0),
                        std::vector<double>(14, 0.5)};
    const NoiseSchedule noise;
    EXPECT_EQ(perturb_forecast(truth, noise, 3).rain, perturb_forecast(truth, noise, 3).rain);
    EXPECT_NE(perturb_forecast(truth, noise, 3).rain, perturb_forecast(truth, noise, 4).rain);
    int positive = 0;
    for (std::uint64_t s = 0; s < 715; ++s) {
        const auto f = perturb_forecast(truth, noise, s);
        for (int k = 0; k < 14; ++k) {
            EXPECT_GE(f.rain[k], 0.0);
            EXPECT_GE(f.et0[k], 0.0);
            positive += f.rain[k] > 0.0;
        }
    }
    EXPECT_GT(positive, 0);
}

TEST(Forecast, SpreadGrowsWithLeadTime) {
    const NoiseSchedule noise;
    EXPECT_DOUBLE_EQ(noise.sigma(1.0, 1), 1.0);
    EXPECT_DOUBLE_EQ(noise.sigma(1.0, 8), 2.0);
    EXPECT_DOUBLE_EQ(noise.sigma(0.5, 15), 1.5);
}

TEST(Forecast, PadsPastEndOfRecord) {
    const auto w = synthetic_weather("2015-08-28", 8, Climate::Wet, 2);
    const auto cfg = short_season();
    const auto f = true_forecast(w, crop_calendar(w, cfg), 6, 5);
    ASSERT_EQ(f.days(), 5);
    EXPECT_EQ(f.rain[0], w[6].rain_mm);
    EXPECT_EQ(f.rain[4], 0.0);
    EXPECT_EQ(f.et0[4], w[7].et0_mm);
}

TEST(Calendar, RootDepthSwitchAndKc) {
    SeasonConfig cfg;
    EXPECT_EQ(cfg.root_depth("2015-07-15"), 0.5);
    EXPECT_EQ(cfg.root_depth("2015-07-16"), 1.0);
    EXPECT_EQ(cfg.root_depth("2015-05-05"), 0.5);
    const auto w = synthetic_weather("2015-07-10", 10, Climate::Dry, 1);
    cfg.gdd_at_start = 100.0;
    const auto cal = crop_calendar(w, cfg);
    double g = 100.0;
    for (std::size_t d = 0; d < w.size(); ++d) {
        g += agronomy::gdd(w[d].tavg_c, 5.0);
        EXPECT_DOUBLE_EQ(cal.kc[d], agronomy::kc(g));
    }
}

TEST(InitStates, MatchesRequestedMoisture) {
    auto zones = default_zones();
    std::vector<agrohydro::RichardsColumn> cols;
    for (const auto& z : zones) cols.push_back(make_column(z));
    for (double th : {0.13, 0.2, 0.25, 0.3}) {
        for (auto& z : zones) z.theta_init = th;
        const auto s = init_states(cols, zones, 0.5);
        for (std::size_t z = 0; z < 3; ++z) EXPECT_NEAR(cols[z].root_zone_moisture(s[z], 0.5), th, 1e-4);
    }
    zones[0].theta_init = zones[0].hydraulics.theta_s;
    EXPECT_GE(init_states(cols, zones, 0.5)[0].psi.front(), 0.0);
    zones[0].theta_init = zones[0].hydraulics.theta_r;
    EXPECT_THROW(init_states(cols, zones, 0.5), InvalidArgument);
}

TEST(RunSeason, IdleWeatherNeverTriggers) {
    std::vector<WeatherRecord> w;
    for (const auto& r : synthetic_weather("2015-06-01", 10, Climate::Dry, 1)) {
        w.push_back({r.date, 0.0, 0.0, r.tavg_c});
    }
    auto cfg = short_season();
    cfg.truth_noise_std = 0.0;
    const auto rep = run_season(cfg, w, Method::Triggered);
    EXPECT_EQ(rep.irrigation_mm, 0.0);
    EXPECT_EQ(rep.rotations, 0);
    for (const auto& z : rep.zones) {
        for (double y : z.theta_rz) EXPECT_GT(y, target_zone(default_zones()[0], cfg.mad).lower);
    }
}

TEST(RunSeason, TriggeredAccountingIdentities) {
    const auto w = synthetic_weather("2015-06-01", 40, Climate::Dry, 5);
    const auto rep = run_season(short_season(), w, Method::Triggered);
    ASSERT_EQ(rep.days(), 40);
    int rotations = 0;
    double water = 0.0;
    for (int d = 0; d < 40; ++d) {
        bool any = false;
        for (const auto& z : rep.zones) {
            water += z.rate[d];
            any = any || z.rate[d] > 0.0;
        }
        rotations += any;
    }
    EXPECT_GT(rotations, 0);
    EXPECT_EQ(rep.rotations, rotations);
    EXPECT_NEAR(rep.irrigation_mm, water, 1e-9);
    EXPECT_NEAR(rep.overall_cost, rep.cost_upper + rep.cost_lower + 9.0 * water + 1000.0 * rotations,
                1e-9 * rep.overall_cost);
    EXPECT_GT(rep.yield, 0.0);
    EXPECT_LE(rep.yield, 8.8);
}

TEST(RunSeason, DeterministicAndThreadIndependent) {
    const auto w = synthetic_weather("2015-06-01", 20, Climate::Dry, 6);
    auto cfg = short_season();
    const auto a = run_season(cfg, w, Method::Triggered);
    cfg.concurrent = false;
    const auto b = run_season(cfg, w, Method::Triggered);
    EXPECT_EQ(to_json(a), to_json(b));
}

TEST(RunSeason, ProposedPlansPassAudit) {
    const auto w = synthetic_weather("2015-06-20", 6, Climate::Dry, 7);
    const auto models = random_models();
    auto cfg = short_season(4);
    const auto a = run_season(cfg, w, Method::Proposed, &models);
    EXPECT_EQ(a.plans_checked, 18);
    EXPECT_EQ(a.improvement_violations, 0);
    EXPECT_EQ(a.coupling_violations, 0);
    for (int d = 0; d < a.days(); ++d) {
        // shared decisions: every zone irrigates on the same days
        const bool first = a.zones[0].rate[d] > 0.0;
        for (const auto& z : a.zones) EXPECT_EQ(z.rate[d] > 0.0, first);
    }
    cfg.concurrent = false;
    EXPECT_EQ(to_json(run_season(cfg, w, Method::Proposed, &models)), to_json(a));
    EXPECT_THROW(run_season(cfg, w, Method::Proposed), InvalidArgument);
}

TEST(RunSeason, WindowOutsideWeatherFails) {
    const auto w = synthetic_weather("2015-06-01", 5, Climate::Dry, 6);
    SeasonConfig cfg;
    EXPECT_THROW(run_season(cfg, w, Method::Triggered), InvalidArgument);
}

TEST(Compare, PercentageChanges) {
    SeasonReport p, t;
    p.irrigation_mm = 884;
    t.irrigation_mm = 949;
    auto rows = compare(p, t);
    EXPECT_NEAR(rows[0].delta_pct, -6.8, 0.05);
    p.irrigation_mm = 700;
    t.irrigation_mm = 907;
    EXPECT_NEAR(compare(p, t)[0].delta_pct, -22.8, 0.05);
    p.rotations = 14;
    t.rotations = 9;
    EXPECT_NEAR(compare(p, t)[1].delta_pct, 55.6, 0.05);
    for (const auto& r : compare(t, t)) EXPECT_EQ(r.delta_pct, 0.0);
}

TEST(Report, JsonRoundTripAndTraces) {
    const auto w = synthetic_weather("2015-06-01", 12, Climate::Dry, 6);
    const auto rep = run_season(short_season(), w, Method::Triggered);
    const auto back = report_from_json(nlohmann::json::parse(to_json(rep).dump()));
    EXPECT_EQ(to_json(back), to_json(rep));
    std::ostringstream csv;
    write_traces_csv(csv, rep);
    const auto text = csv.str();
    EXPECT_EQ(text.rfind("date,zone,theta_rz,rate_mm,rain_mm,et0_mm,kc,z_r\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 12 * 3);
    EXPECT_THROW(report_from_json(nlohmann::json{{"format", "other"}}), ParseError);
}
