// irrisched: train models, delineate zones and run season comparisons.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "irrisched/harness.hpp"
#include "irrisched/zones.hpp"
#include "settings.hpp"

namespace fs = std::filesystem;
using namespace irrisched;

namespace {

std::string mad_tag(double mad) { return "mad" + std::to_string(static_cast<int>(std::lround(mad * 100))); }

std::string lstm_path(const std::string& dir, const ZoneSpec& z) { return dir + "/lstm_" + z.name + ".json"; }

std::string policy_path(const std::string& dir, const ZoneSpec& z, double mad) {
    return dir + "/policy_" + z.name + "_" + mad_tag(mad) + ".json";
}

std::string curve_path(const std::string& dir, const ZoneSpec& z, double mad) {
    return dir + "/curve_" + z.name + "_" + mad_tag(mad) + ".csv";
}

zones::PolarGeometry parse_geometry(const std::string& s) {
    zones::PolarGeometry g;
    char x = 0, tail = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c", &g.radial, &x, &g.azimuthal, &tail) != 3 || (x != 'x' && x != 'X') ||
        g.radial < 1 || g.azimuthal < 1) {
        throw InvalidArgument("expected RADIALxAZIMUTHAL, got '" + s + "'");
    }
    return g;
}

/// Zones selected by name, or all of them.
std::vector<std::size_t> select_zones(const cli::Settings& s, const std::string& name) {
    std::vector<std::size_t> out;
    for (std::size_t z = 0; z < s.season.zones.size(); ++z) {
        if (name == "all" || s.season.zones[z].name == name) out.push_back(z);
    }
    if (out.empty()) throw InvalidArgument("no zone named " + name);
    return out;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << j.dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop irrigation scheduling with learned dynamics and decision policies"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "YAML configuration file")->check(CLI::ExistingFile);

    // train-surrogate
    auto* ts = app.add_subcommand("train-surrogate", "Generate simulator data and fit the LSTM of each zone");
    std::string ts_zone = "all", ts_dir = "models";
    int ts_episodes = -1;
    std::uint64_t ts_seed = 11;
    ts->add_option("--zone", ts_zone, "zone name or 'all'");
    ts->add_option("--episodes", ts_episodes, "simulated episodes per zone (default from config)");
    ts->add_option("--seed", ts_seed, "data generation seed");
    ts->add_option("--out-dir", ts_dir, "model directory");

    // train-agent
    auto* ta = app.add_subcommand("train-agent", "Train the PPO decision policy of each zone");
    std::string ta_zone = "all", ta_dir = "models";
    double ta_mad = -1.0;
    int ta_episodes = -1;
    std::uint64_t ta_seed = 7;
    ta->add_option("--zone", ta_zone, "zone name or 'all'");
    ta->add_option("--mad", ta_mad, "management allowable depletion (default from config)");
    ta->add_option("--episodes", ta_episodes, "training episodes (default from config)");
    ta->add_option("--seed", ta_seed, "training seed");
    ta->add_option("--out-dir", ta_dir, "model directory");

    // delineate
    auto* dl = app.add_subcommand("delineate", "Cluster attribute cells into management zones");
    std::string dl_input, dl_out = "zonemap.json", dl_pivot = "12x45", dl_fine;
    int dl_kmax = 6;
    std::uint64_t dl_seed = 1;
    dl->add_option("--input", dl_input, "attribute CSV")->required()->check(CLI::ExistingFile);
    dl->add_option("--kmax", dl_kmax, "largest k tried per crop");
    dl->add_option("--seed", dl_seed, "k-means seed");
    dl->add_option("--pivot", dl_pivot, "pivot control layout, RADIALxAZIMUTHAL");
    dl->add_option("--fine", dl_fine, "layout of the input cells (default: same as --pivot)");
    dl->add_option("--out", dl_out, "zone map JSON");

    // attributes
    auto* at = app.add_subcommand("attributes", "Write a synthetic attribute CSV for one pivot quadrant");
    std::string at_layout = "24x90", at_out = "attributes.csv";
    std::uint64_t at_seed = 1;
    at->add_option("--layout", at_layout, "RADIALxAZIMUTHAL");
    at->add_option("--seed", at_seed, "seed");
    at->add_option("--out", at_out, "output CSV");

    // weather
    auto* wx = app.add_subcommand("weather", "Write a synthetic daily weather CSV");
    std::string wx_preset = "dry", wx_start = "2015-05-05", wx_out = "weather.csv";
    int wx_days = 123;
    std::uint64_t wx_seed = 1;
    wx->add_option("--preset", wx_preset, "dry or wet")->check(CLI::IsMember({"dry", "wet"}));
    wx->add_option("--start", wx_start, "first date, YYYY-MM-DD");
    wx->add_option("--days", wx_days, "number of days");
    wx->add_option("--seed", wx_seed, "seed");
    wx->add_option("--out", wx_out, "output CSV");

    // run-season
    auto* rs = app.add_subcommand("run-season", "Run one scheduling method over a season");
    std::string rs_method, rs_weather, rs_out = "report.json", rs_traces, rs_plans, rs_models = "models";
    double rs_mad = -1.0;
    rs->add_option("--method", rs_method, "proposed or triggered")->required()->check(
        CLI::IsMember({"proposed", "triggered"}));
    rs->add_option("--mad", rs_mad, "management allowable depletion (default from config)");
    rs->add_option("--weather", rs_weather, "weather CSV")->required()->check(CLI::ExistingFile);
    rs->add_option("--out", rs_out, "season report JSON");
    rs->add_option("--traces", rs_traces, "daily trace CSV (default: next to --out)");
    rs->add_option("--plans", rs_plans, "write every daily plan to this JSON file");
    rs->add_option("--models", rs_models, "model directory for the proposed method");

    // compare
    auto* cp = app.add_subcommand("compare", "Percentage changes of the proposed method relative to triggered");
    std::string cp_proposed, cp_triggered, cp_out;
    cp->add_option("proposed", cp_proposed, "proposed report JSON")->required()->check(CLI::ExistingFile);
    cp->add_option("triggered", cp_triggered, "triggered report JSON")->required()->check(CLI::ExistingFile);
    cp->add_option("--out", cp_out, "comparison JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto settings = config_path.empty() ? cli::Settings{} : cli::load_settings(config_path);

        if (*ts) {
            fs::create_directories(ts_dir);
            const int episodes = ts_episodes > 0 ? ts_episodes : settings.lstm_episodes;
            for (auto z : select_zones(settings, ts_zone)) {
                const auto& spec = settings.season.zones[z];
                const auto col = make_column(spec, settings.season.solver);
                auto ranges = settings.data;
                ranges.irrigation = spec.irrigation;
                const auto t0 = std::chrono::steady_clock::now();
                const auto ds = surrogate::generate_training_data(col, ranges, episodes, ts_seed + z,
                                                                  settings.lstm_sequence_length);
                auto cfg = settings.lstm;
                cfg.seed += z;
                surrogate::TrainReport rep;
                const auto model = surrogate::train(ds, cfg, &rep);
                const auto acc = surrogate::rollout_accuracy(model, col, ranges, settings.lstm_eval_episodes,
                                                             settings.lstm_eval_horizon, ts_seed + 1000 + z);
                surrogate::save(model, lstm_path(ts_dir, spec));
                std::cout << spec.name << ": " << ds.size() << " windows (" << ds.failed_episodes
                          << " failed episodes), best epoch " << rep.best_epoch << ", test loss " << rep.test_loss
                          << ", " << settings.lstm_eval_horizon << "-day rollout RMSE " << acc.rmse << " R2 "
                          << acc.r2 << " [" << seconds_since(t0) << " s]\n";
            }
        } else if (*ta) {
            fs::create_directories(ta_dir);
            const double mad = ta_mad > 0 ? ta_mad : settings.season.mad;
            auto h = settings.ppo;
            if (ta_episodes > 0) h.episodes = ta_episodes;
            for (auto z : select_zones(settings, ta_zone)) {
                const auto& spec = settings.season.zones[z];
                const auto col = make_column(spec, settings.season.solver);
                auto env = rl::ZoneEnv::for_zone(col, spec, mad);
                const auto p = settings.season.mpc_params(spec);
                env.costs.q_upper = p.q_upper;
                env.costs.q_lower = p.q_lower;
                env.costs.r_u = p.r_u;
                env.costs.r_c = p.r_c;
                env.root_depths = settings.data.root_depths;
                const auto t0 = std::chrono::steady_clock::now();
                rl::TrainingCurve curve;
                const auto net = rl::train_agent(env, h, ta_seed + z, &curve);
                rl::save(net, policy_path(ta_dir, spec, mad));
                std::ofstream out(curve_path(ta_dir, spec, mad));
                curve.write_csv(out);
                std::cout << spec.name << " (MAD " << mad << "): mean episode reward first 10% "
                          << curve.head_mean(0.1) << ", last 10% " << curve.tail_mean(0.1) << " [" << seconds_since(t0)
                          << " s]\n";
            }
        } else if (*dl) {
            const auto pivot = parse_geometry(dl_pivot);
            const auto fine = dl_fine.empty() ? pivot : parse_geometry(dl_fine);
            const auto grid = zones::read_attribute_csv(dl_input);
            const auto zmap = zones::delineate(grid, dl_kmax, dl_seed);
            const auto mapped = zones::map_to_pivot(zmap, fine, pivot);
            write_json(zones::to_json(mapped), dl_out);
            std::cout << grid.cells.size() << " cells -> " << mapped.k << " zones on a " << pivot.radial << "x"
                      << pivot.azimuthal << " layout, written to " << dl_out << "\n";
        } else if (*at) {
            const auto g = parse_geometry(at_layout);
            std::ofstream out(at_out);
            if (!out) throw InvalidArgument("cannot write " + at_out);
            zones::write_attribute_csv(out, zones::synthetic_quadrant(g, at_seed));
        } else if (*wx) {
            const auto w = harness::synthetic_weather(
                wx_start, wx_days, wx_preset == "dry" ? harness::Climate::Dry : harness::Climate::Wet, wx_seed);
            std::ofstream out(wx_out);
            if (!out) throw InvalidArgument("cannot write " + wx_out);
            harness::write_weather(out, w);
        } else if (*rs) {
            auto cfg = settings.season;
            if (rs_mad > 0) cfg.mad = rs_mad;
            const auto method = harness::parse_method(rs_method);
            const auto weather = harness::load_weather(rs_weather);
            std::vector<harness::ZoneModels> models;
            if (method == harness::Method::Proposed) {
                for (const auto& spec : cfg.zones) {
                    models.push_back({surrogate::load(lstm_path(rs_models, spec)),
                                      rl::load(policy_path(rs_models, spec, cfg.mad))});
                }
            }
            nlohmann::json plans = nlohmann::json::array();
            harness::PlanObserver observer;
            if (!rs_plans.empty()) {
                observer = [&](const std::string& date, const sync::Schedule& s) {
                    nlohmann::json zones_j = nlohmann::json::array();
                    for (std::size_t z = 0; z < s.plans.size(); ++z) {
                        auto j = mpc::to_json(s.plans[z]);
                        j["zone"] = cfg.zones[z].name;
                        zones_j.push_back(j);
                    }
                    plans.push_back({{"date", date},
                                     {"limiting_zone", cfg.zones[s.binding.limiting_zone].name},
                                     {"binding_c", s.binding.binding_c},
                                     {"plans", zones_j}});
                };
            }
            const auto t0 = std::chrono::steady_clock::now();
            const auto rep = harness::run_season(cfg, weather, method, models.empty() ? nullptr : &models, observer);
            harness::save(rep, rs_out);
            const auto traces = rs_traces.empty() ? fs::path(rs_out).replace_extension(".csv").string() : rs_traces;
            std::ofstream tr(traces);
            if (!tr) throw InvalidArgument("cannot write " + traces);
            harness::write_traces_csv(tr, rep);
            if (!rs_plans.empty()) write_json(plans, rs_plans);
            std::cout << rep.method << " MAD " << rep.mad << ": " << rep.days() << " days, " << rep.irrigation_mm
                      << " mm over " << rep.rotations << " rotations, overall cost " << rep.overall_cost
                      << ", predicted yield " << rep.yield << " Mg/ha [" << seconds_since(t0) << " s]\n";
            if (rep.improvement_violations || rep.coupling_violations) {
                std::cerr << "warning: plan audit found " << rep.improvement_violations << " improvement and "
                          << rep.coupling_violations << " coupling violations\n";
            }
        } else if (*cp) {
            const auto p = harness::load_report(cp_proposed);
            const auto t = harness::load_report(cp_triggered);
            if (p.dates != t.dates || p.mad != t.mad) {
                std::cerr << "warning: reports cover different seasons or MAD values\n";
            }
            const auto rows = harness::compare(p, t);
            harness::print_comparison(std::cout, rows);
            if (!cp_out.empty()) write_json(harness::to_json(rows), cp_out);
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
