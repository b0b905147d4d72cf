/**
 * @file harness.hpp
 * @brief Closed-loop season evaluation of the scheduler and the triggered baseline
 *
 * Each day the zone "truth" columns are read, a method prescribes a rate per
 * zone, and the columns are advanced with the observed weather. Costs, water
 * and yield are accumulated into a SeasonReport.
 */

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "baseline.hpp"
#include "field.hpp"
#include "sync.hpp"

namespace irrisched::harness {

// ---------------------------------------------------------------------------
// Dates and weather
// ---------------------------------------------------------------------------

inline std::optional<std::chrono::sys_days> parse_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return std::chrono::sys_days{ymd};
}

inline std::string format_date(std::chrono::sys_days day) {
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

struct WeatherRecord {
    std::string date;  ///< YYYY-MM-DD
    double rain_mm = 0.0;
    double et0_mm = 0.0;
    double tavg_c = 0.0;
};

/// Reads `date,rain_mm,et0_mm,tavg_c`; dates must be consecutive days.
inline std::vector<WeatherRecord> read_weather(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    if (line.rfind("date,rain_mm,et0_mm,tavg_c", 0) != 0) throw ParseError("unexpected header '" + line + "'", 1);
    std::vector<WeatherRecord> out;
    std::optional<std::chrono::sys_days> prev;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 4) throw ParseError("expected 4 fields", lineno);
        const auto day = parse_date(f[0]);
        if (!day) throw ParseError("bad date '" + f[0] + "'", lineno);
        WeatherRecord r;
        r.date = f[0];
        try {
            std::size_t used = 0;
            for (int i = 1; i < 4; ++i) {
                const double v = std::stod(f[i], &used);
                if (used != f[i].size()) throw std::invalid_argument("trailing");
                (i == 1 ? r.rain_mm : i == 2 ? r.et0_mm : r.tavg_c) = v;
            }
        } catch (const std::exception&) {
            throw ParseError("non-numeric field", lineno);
        }
        if (!std::isfinite(r.rain_mm) || !std::isfinite(r.et0_mm) || !std::isfinite(r.tavg_c)) {
            throw ParseError("non-finite value", lineno);
        }
        if (r.rain_mm < 0.0) throw ParseError("negative rain", lineno);
        if (r.et0_mm < 0.0) throw ParseError("negative ET0", lineno);
        if (prev && *day != *prev + std::chrono::days{1}) {
            throw GapError("weather: " + r.date + " does not follow " + format_date(*prev) + " (line " +
                           std::to_string(lineno) + ")");
        }
        prev = day;
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<WeatherRecord> load_weather(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    return read_weather(in);
}

inline void write_weather(std::ostream& out, const std::vector<WeatherRecord>& w) {
    out << "date,rain_mm,et0_mm,tavg_c\n" << std::setprecision(10);
    for (const auto& r : w) out << r.date << ',' << r.rain_mm << ',' << r.et0_mm << ',' << r.tavg_c << '\n';
}

enum class Climate { Dry, Wet };

/// Seeded daily weather with a mid-summer ET0 and temperature peak.
inline std::vector<WeatherRecord> synthetic_weather(const std::string& start, int days, Climate climate,
                                                    std::uint64_t seed) {
    const auto first = parse_date(start);
    if (!first) throw InvalidArgument("synthetic_weather: bad start date " + start);
    if (days < 1) throw InvalidArgument("synthetic_weather: need at least one day");
    const bool dry = climate == Climate::Dry;
    const double p_rain = dry ? 0.12 : 0.25;
    const double mean_rain = dry ? 8.0 : 7.5;
    const double et0_base = dry ? 5.0 : 4.2;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution wet_day(p_rain);
    std::exponential_distribution<double> amount(1.0 / mean_rain);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<WeatherRecord> w;
    for (int d = 0; d < days; ++d) {
        const auto date = *first + std::chrono::days{d};
        const std::chrono::year_month_day ymd{date};
        const auto jan1 = std::chrono::sys_days{ymd.year() / std::chrono::January / 1};
        const double doy = (date - jan1).count();
        const double season = std::sin(2.0 * M_PI * (doy - 105.0) / 365.0);  // peaks near 20 July
        WeatherRecord r;
        r.date = format_date(date);
        const bool raining = wet_day(rng);
        const double a = amount(rng);
        r.rain_mm = raining ? std::round(a * 10.0) / 10.0 : 0.0;
        r.et0_mm = std::clamp(et0_base + 1.5 * season + 0.8 * noise(rng) - (raining ? 1.5 : 0.0), 0.3, 9.0);
        r.tavg_c = 12.0 + 7.0 * season + 2.0 * noise(rng);
        w.push_back(std::move(r));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Forecast error growth: sigma(k) = sigma_1 (1 + (k - 1) / growth_days).
struct NoiseSchedule {
    double rain = 1.0;  ///< mm, first forecast day
    double et0 = 0.5;   ///< mm, first forecast day
    double growth_days = 7.0;

    double sigma(double sigma_1, int k) const { return sigma_1 * (1.0 + (k - 1) / growth_days); }
};

struct SeasonConfig {
    std::string start_date = "2015-05-05";  ///< empty: first weather day
    std::string end_date = "2015-09-04";    ///< inclusive; empty: last weather day
    double mad = 0.65;
    std::vector<ZoneSpec> zones = default_zones();
    unsigned shallow_roots_until_month = 7;
    unsigned shallow_roots_until_day = 15;
    double z_r_shallow = 0.5;
    double z_r_deep = 1.0;
    double gdd_at_start = 0.0;
    int horizon = 14;
    int trigger_lookahead = 4;
    NoiseSchedule forecast_noise;
    double truth_noise_std = 0.0005;  ///< per-node moisture noise of the truth columns
    std::uint64_t seed = 1;
    double q_upper = 2.2e7;
    double q_lower = 2.0e7;
    double r_u = 9000.0;
    double r_c = 1000.0;
    agronomy::CropParams crop;
    agrohydro::SolverSettings solver;
    mpc::SolverOptions mpc_options;
    bool concurrent = true;

    void validate() const {
        if (!(mad > 0.0 && mad <= 1.0)) throw InvalidArgument("SeasonConfig: mad must lie in (0, 1]");
        if (zones.empty()) throw InvalidArgument("SeasonConfig: no zones");
        if (horizon < 1) throw InvalidArgument("SeasonConfig: horizon must be at least 1");
        if (trigger_lookahead < 0) throw InvalidArgument("SeasonConfig: negative trigger lookahead");
        if (forecast_noise.rain < 0.0 || forecast_noise.et0 < 0.0 || forecast_noise.growth_days <= 0.0) {
            throw InvalidArgument("SeasonConfig: invalid forecast noise");
        }
    }

    mpc::MpcParams mpc_params(const ZoneSpec& z) const {
        mpc::MpcParams p;
        p.horizon = horizon;
        p.q_upper = q_upper;
        p.q_lower = q_lower;
        p.r_u = r_u;
        p.r_c = r_c;
        p.u_min = z.irrigation.lo;
        p.u_max = z.irrigation.hi;
        p.tz = target_zone(z, mad);
        return p;
    }

    double root_depth(const std::string& date) const {
        const auto d = parse_date(date);
        if (!d) throw InvalidArgument("root_depth: bad date " + date);
        const std::chrono::year_month_day ymd{*d};
        const unsigned m = static_cast<unsigned>(ymd.month()), day = static_cast<unsigned>(ymd.day());
        const bool shallow = m < shallow_roots_until_month ||
                             (m == shallow_roots_until_month && day <= shallow_roots_until_day);
        return shallow ? z_r_shallow : z_r_deep;
    }
};

/// Selects the configured date window from a weather series.
inline std::vector<WeatherRecord> season_window(const std::vector<WeatherRecord>& w, const SeasonConfig& cfg) {
    if (w.empty()) throw InvalidArgument("season: empty weather");
    auto index_of = [&](const std::string& date, std::size_t fallback) {
        if (date.empty()) return fallback;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i].date == date) return i;
        }
        throw InvalidArgument("season: " + date + " outside the weather record");
    };
    const std::size_t a = index_of(cfg.start_date, 0), b = index_of(cfg.end_date, w.size() - 1);
    if (b < a) throw InvalidArgument("season: end date before start date");
    return {w.begin() + a, w.begin() + b + 1};
}

/// Per-day crop inputs that do not depend on the schedule.
struct CropCalendar {
    std::vector<double> kc;
    std::vector<double> z_r;
};

inline CropCalendar crop_calendar(const std::vector<WeatherRecord>& w, const SeasonConfig& cfg) {
    CropCalendar cal;
    double g = cfg.gdd_at_start;
    for (const auto& r : w) {
        g += agronomy::gdd(r.tavg_c, cfg.crop.t_base);
        cal.kc.push_back(agronomy::kc(g, cfg.crop));
        cal.z_r.push_back(cfg.root_depth(r.date));
    }
    return cal;
}

/// True weather and crop inputs for days d .. d+n-1. Days past the end of the
/// record repeat the last ET0, Kc and z_r with no rain.
inline mpc::Forecast true_forecast(const std::vector<WeatherRecord>& w, const CropCalendar& cal, std::size_t d,
                                   int n) {
    mpc::Forecast f;
    for (int k = 0; k < n; ++k) {
        const std::size_t i = std::min(d + k, w.size() - 1);
        const bool past_end = d + k >= w.size();
        f.rain.push_back(past_end ? 0.0 : w[i].rain_mm);
        f.et0.push_back(w[i].et0_mm);
        f.kc.push_back(cal.kc[i]);
        f.z_r.push_back(cal.z_r[i]);
    }
    return f;
}

/// Adds zero-mean Gaussian errors to rain and ET0; day k of the forecast
/// (1-based) has standard deviation sigma(k). Values are clamped at zero.
inline mpc::Forecast perturb_forecast(const mpc::Forecast& truth, const NoiseSchedule& noise, std::uint64_t seed) {
    mpc::Forecast f = truth;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int k = 1; k <= truth.days(); ++k) {
        const double er = g(rng), ee = g(rng);
        f.rain[k - 1] = std::max(truth.rain[k - 1] + noise.sigma(noise.rain, k) * er, 0.0);
        f.et0[k - 1] = std::max(truth.et0[k - 1] + noise.sigma(noise.et0, k) * ee, 0.0);
    }
    return f;
}

/// Hydrostatic profiles matching each zone's initial root-zone moisture.
inline std::vector<agrohydro::SoilColumnState> init_states(const std::vector<agrohydro::RichardsColumn>& columns,
                                                           const std::vector<ZoneSpec>& zones, double z_r) {
    std::vector<agrohydro::SoilColumnState> s;
    for (std::size_t z = 0; z < zones.size(); ++z) {
        s.push_back(columns[z].hydrostatic_for_root_zone(zones[z].theta_init, z_r, 1e-6));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Season run
// ---------------------------------------------------------------------------

enum class Method { Proposed, Triggered };

inline std::string method_name(Method m) { return m == Method::Proposed ? "proposed" : "triggered"; }

inline Method parse_method(const std::string& s) {
    if (s == "proposed") return Method::Proposed;
    if (s == "triggered") return Method::Triggered;
    throw InvalidArgument("unknown method '" + s + "' (expected proposed or triggered)");
}

/// Trained models of one zone for one MAD.
struct ZoneModels {
    surrogate::LstmModel surrogate;
    rl::PolicyNet policy;
};

struct ZoneSummary {
    std::string name;
    double irrigation_mm = 0.0;
    int irrigation_days = 0;
    double cost_upper = 0.0;    ///< quadratic, above field capacity
    double cost_lower = 0.0;    ///< quadratic, below the threshold
    double linear_upper = 0.0;  ///< linear penalty, logged only
    double linear_lower = 0.0;
    double yield = 0.0;         ///< Mg/ha
    std::vector<double> theta_rz;  ///< end of day
    std::vector<double> rate;      ///< applied, mm/day
};

struct SeasonReport {
    std::string method;
    double mad = 0.0;
    std::vector<std::string> dates;
    std::vector<double> rain, et0, kc, z_r;
    std::vector<ZoneSummary> zones;

    double irrigation_mm = 0.0;  ///< summed over zones
    int rotations = 0;           ///< days with any nonzero rate
    double cost_upper = 0.0;
    double cost_lower = 0.0;
    double cost_water = 0.0;
    double cost_fixed = 0.0;
    double overall_cost = 0.0;
    double linear_upper = 0.0;
    double linear_lower = 0.0;
    double yield = 0.0;          ///< mean over zones, Mg/ha

    // plan audit, proposed method only
    int plans_checked = 0;
    int improvement_violations = 0;
    int coupling_violations = 0;

    int days() const { return static_cast<int>(dates.size()); }
};

namespace detail {

template <class Fn>
void for_each(std::size_t m, bool concurrent, Fn fn) {
    if (concurrent && m > 1) {
        std::vector<std::future<void>> fs;
        for (std::size_t z = 0; z < m; ++z) fs.push_back(std::async(std::launch::async, fn, z));
        for (auto& f : fs) f.get();
    } else {
        for (std::size_t z = 0; z < m; ++z) fn(z);
    }
}

}  // namespace detail

/// Called with each day's schedule when the proposed method plans.
using PlanObserver = std::function<void(const std::string& date, const sync::Schedule&)>;

/// Runs one method over the configured window. `models` (one per zone, for
/// the configured MAD) is required for the proposed method.
inline SeasonReport run_season(const SeasonConfig& cfg, const std::vector<WeatherRecord>& weather, Method method,
                               const std::vector<ZoneModels>* models = nullptr, const PlanObserver& on_plan = {}) {
    cfg.validate();
    const auto w = season_window(weather, cfg);
    const auto cal = crop_calendar(w, cfg);
    const std::size_t m = cfg.zones.size();
    if (method == Method::Proposed && (!models || models->size() != m)) {
        throw InvalidArgument("run_season: the proposed method needs models for every zone");
    }

    std::vector<agrohydro::RichardsColumn> columns;
    std::vector<mpc::MpcParams> params;
    for (const auto& z : cfg.zones) {
        columns.push_back(make_column(z, cfg.solver));
        params.push_back(cfg.mpc_params(z));
    }
    auto states = init_states(columns, cfg.zones, cal.z_r.front());
    std::vector<std::mt19937_64> truth_rng;
    for (std::size_t z = 0; z < m; ++z) truth_rng.emplace_back(surrogate::episode_seed(cfg.seed, 1000 + z));

    std::vector<sync::ZoneModel> zone_models;
    int l = 5;
    if (method == Method::Proposed) {
        l = (*models)[0].surrogate.sequence_length;
        for (std::size_t z = 0; z < m; ++z) {
            if ((*models)[z].surrogate.sequence_length != l) throw InvalidArgument("run_season: window lengths differ");
            zone_models.push_back({cfg.zones[z].name, &(*models)[z].policy, &(*models)[z].surrogate, &columns[z],
                                   params[z]});
        }
    }
    // surrogate history per zone, oldest first
    std::vector<std::vector<std::array<double, surrogate::kFeatures>>> history(m);

    SeasonReport rep;
    rep.method = method_name(method);
    rep.mad = cfg.mad;
    for (std::size_t z = 0; z < m; ++z) {
        ZoneSummary zs;
        zs.name = cfg.zones[z].name;
        rep.zones.push_back(std::move(zs));
    }

    for (std::size_t d = 0; d < w.size(); ++d) {
        const std::string where = "day " + w[d].date;
        std::vector<double> y_now(m), rate(m, 0.0);
        for (std::size_t z = 0; z < m; ++z) y_now[z] = columns[z].root_zone_moisture(states[z], cal.z_r[d]);

        if (method == Method::Proposed) {
            std::vector<sync::ZoneObservation> obs(m);
            for (std::size_t z = 0; z < m; ++z) {
                obs[z].state = states[z];
                obs[z].y_now = y_now[z];
                obs[z].past.resize(l, surrogate::kFeatures);
                for (int r = 0; r < l; ++r) {
                    const int h = static_cast<int>(history[z].size()) - l + r;
                    if (h >= 0) {
                        for (int c = 0; c < surrogate::kFeatures; ++c) obs[z].past(r, c) = history[z][h][c];
                    } else {
                        obs[z].past.row(r) << y_now[z], 0.0, cal.kc[d], w[d].et0_mm, cal.z_r[d];
                    }
                }
            }
            const auto fc = perturb_forecast(true_forecast(w, cal, d, cfg.horizon), cfg.forecast_noise,
                                             surrogate::episode_seed(cfg.seed, d));
            sync::Schedule s;
            try {
                s = sync::schedule_all(zone_models, obs, fc, cfg.concurrent, cfg.mpc_options);
            } catch (const Error& e) {
                throw Error(where + ": " + e.what());
            }
            if (on_plan) on_plan(w[d].date, s);
            for (std::size_t z = 0; z < m; ++z) {
                ++rep.plans_checked;
                if (s.plans[z].c != s.binding.binding_c) ++rep.coupling_violations;
                if (s.plans[z].total() > s.guess_costs[z] + 1e-9 * std::max(1.0, std::abs(s.guess_costs[z]))) {
                    ++rep.improvement_violations;
                }
                rate[z] = s.plans[z].u[0];
            }
        } else {
            double rain_ahead = 0.0;
            for (int k = 1; k <= cfg.trigger_lookahead && d + k < w.size(); ++k) rain_ahead += w[d + k].rain_mm;
            for (std::size_t z = 0; z < m; ++z) {
                baseline::TriggerConfig tc{params[z].tz, cfg.trigger_lookahead};
                rate[z] = baseline::triggered_rate(y_now[z], cal.z_r[d], rain_ahead, tc);
            }
        }

        std::vector<std::exception_ptr> errors(m);
        detail::for_each(m, cfg.concurrent, [&](std::size_t z) {
            try {
                agrohydro::DailyForcing f;
                f.irrigation = rate[z];
                f.rain = w[d].rain_mm;
                f.et0 = w[d].et0_mm;
                f.kc = cal.kc[d];
                f.z_r = cal.z_r[d];
                states[z] = columns[z].simulate_day(states[z], f, cfg.truth_noise_std, truth_rng[z]).state;
            } catch (...) {
                errors[z] = std::current_exception();
            }
        });
        for (std::size_t z = 0; z < m; ++z) {
            if (!errors[z]) continue;
            try {
                std::rethrow_exception(errors[z]);
            } catch (const std::exception& e) {
                throw Error(where + ", " + cfg.zones[z].name + ": " + e.what());
            }
        }

        rep.dates.push_back(w[d].date);
        rep.rain.push_back(w[d].rain_mm);
        rep.et0.push_back(w[d].et0_mm);
        rep.kc.push_back(cal.kc[d]);
        rep.z_r.push_back(cal.z_r[d]);
        bool any = false;
        for (std::size_t z = 0; z < m; ++z) {
            history[z].push_back({y_now[z], rate[z] + w[d].rain_mm, cal.kc[d], w[d].et0_mm, cal.z_r[d]});
            const double y = columns[z].root_zone_moisture(states[z], cal.z_r[d]);
            const auto& tz = params[z].tz;
            const double lo = std::max(tz.lower - y, 0.0), hi = std::max(y - tz.upper, 0.0);
            auto& zs = rep.zones[z];
            zs.theta_rz.push_back(y);
            zs.rate.push_back(rate[z]);
            zs.cost_lower += cfg.q_lower * lo * lo;
            zs.cost_upper += cfg.q_upper * hi * hi;
            zs.linear_lower += cfg.q_lower * lo;
            zs.linear_upper += cfg.q_upper * hi;
            if (rate[z] > 0.0) {
                zs.irrigation_mm += rate[z];
                ++zs.irrigation_days;
                any = true;
            }
        }
        if (any) ++rep.rotations;
    }

    std::vector<double> demand;
    double total_demand = 0.0;
    for (std::size_t d = 0; d < w.size(); ++d) {
        demand.push_back(cal.kc[d] * w[d].et0_mm);
        total_demand += demand.back();
    }
    for (std::size_t z = 0; z < m; ++z) {
        auto& zs = rep.zones[z];
        // without crop demand there is nothing to stress
        zs.yield = total_demand > 0.0 ? agronomy::seasonal_yield(zs.theta_rz, demand, cfg.crop, params[z].tz,
                                                                 columns[z].theta_v1()).y_a
                                      : cfg.crop.y_m;
        rep.irrigation_mm += zs.irrigation_mm;
        rep.cost_upper += zs.cost_upper;
        rep.cost_lower += zs.cost_lower;
        rep.linear_upper += zs.linear_upper;
        rep.linear_lower += zs.linear_lower;
        rep.yield += zs.yield / static_cast<double>(m);
    }
    rep.cost_water = cfg.r_u * 1e-3 * rep.irrigation_mm;
    rep.cost_fixed = cfg.r_c * rep.rotations;
    rep.overall_cost = rep.cost_upper + rep.cost_lower + rep.cost_water + rep.cost_fixed;
    return rep;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SeasonReport& r) {
    nlohmann::json zones = nlohmann::json::array();
    for (const auto& z : r.zones) {
        zones.push_back({{"name", z.name},
                         {"irrigation_mm", z.irrigation_mm},
                         {"irrigation_days", z.irrigation_days},
                         {"cost_upper", z.cost_upper},
                         {"cost_lower", z.cost_lower},
                         {"linear_upper", z.linear_upper},
                         {"linear_lower", z.linear_lower},
                         {"yield", z.yield},
                         {"theta_rz", z.theta_rz},
                         {"rate", z.rate}});
    }
    return {{"format", "irrisched-season"},
            {"version", 1},
            {"method", r.method},
            {"mad", r.mad},
            {"dates", r.dates},
            {"rain", r.rain},
            {"et0", r.et0},
            {"kc", r.kc},
            {"z_r", r.z_r},
            {"irrigation_mm", r.irrigation_mm},
            {"rotations", r.rotations},
            {"cost_upper", r.cost_upper},
            {"cost_lower", r.cost_lower},
            {"cost_water", r.cost_water},
            {"cost_fixed", r.cost_fixed},
            {"overall_cost", r.overall_cost},
            {"linear_upper", r.linear_upper},
            {"linear_lower", r.linear_lower},
            {"yield", r.yield},
            {"audit",
             {{"plans_checked", r.plans_checked},
              {"improvement_violations", r.improvement_violations},
              {"coupling_violations", r.coupling_violations}}},
            {"zones", zones}};
}

inline SeasonReport report_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "irrisched-season") throw ParseError("not a season report", 1);
    try {
        SeasonReport r;
        r.method = j.at("method").get<std::string>();
        r.mad = j.at("mad").get<double>();
        r.dates = j.at("dates").get<std::vector<std::string>>();
        r.rain = j.at("rain").get<std::vector<double>>();
        r.et0 = j.at("et0").get<std::vector<double>>();
        r.kc = j.at("kc").get<std::vector<double>>();
        r.z_r = j.at("z_r").get<std::vector<double>>();
        r.irrigation_mm = j.at("irrigation_mm").get<double>();
        r.rotations = j.at("rotations").get<int>();
        r.cost_upper = j.at("cost_upper").get<double>();
        r.cost_lower = j.at("cost_lower").get<double>();
        r.cost_water = j.at("cost_water").get<double>();
        r.cost_fixed = j.at("cost_fixed").get<double>();
        r.overall_cost = j.at("overall_cost").get<double>();
        r.linear_upper = j.at("linear_upper").get<double>();
        r.linear_lower = j.at("linear_lower").get<double>();
        r.yield = j.at("yield").get<double>();
        const auto& a = j.at("audit");
        r.plans_checked = a.at("plans_checked").get<int>();
        r.improvement_violations = a.at("improvement_violations").get<int>();
        r.coupling_violations = a.at("coupling_violations").get<int>();
        for (const auto& z : j.at("zones")) {
            ZoneSummary s;
            s.name = z.at("name").get<std::string>();
            s.irrigation_mm = z.at("irrigation_mm").get<double>();
            s.irrigation_days = z.at("irrigation_days").get<int>();
            s.cost_upper = z.at("cost_upper").get<double>();
            s.cost_lower = z.at("cost_lower").get<double>();
            s.linear_upper = z.at("linear_upper").get<double>();
            s.linear_lower = z.at("linear_lower").get<double>();
            s.yield = z.at("yield").get<double>();
            s.theta_rz = z.at("theta_rz").get<std::vector<double>>();
            s.rate = z.at("rate").get<std::vector<double>>();
            r.zones.push_back(std::move(s));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("season report: ") + e.what(), 1);
    }
}

inline void save(const SeasonReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << to_json(r).dump(2) << '\n';
}

inline SeasonReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    try {
        return report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), 1);
    }
}

/// Long-format daily traces, one row per day and zone.
inline void write_traces_csv(std::ostream& out, const SeasonReport& r) {
    out << "date,zone,theta_rz,rate_mm,rain_mm,et0_mm,kc,z_r\n" << std::setprecision(8);
    for (int d = 0; d < r.days(); ++d) {
        for (const auto& z : r.zones) {
            out << r.dates[d] << ',' << z.name << ',' << z.theta_rz[d] << ',' << z.rate[d] << ',' << r.rain[d] << ','
                << r.et0[d] << ',' << r.kc[d] << ',' << r.z_r[d] << '\n';
        }
    }
}

struct ComparisonRow {
    std::string metric;
    double proposed = 0.0;
    double triggered = 0.0;
    double delta_pct = 0.0;  ///< relative to triggered; NaN when triggered is 0 and proposed is not
};

inline double percent_change(double proposed, double triggered) {
    if (triggered == 0.0) return proposed == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return 100.0 * (proposed - triggered) / std::abs(triggered);
}

inline std::vector<ComparisonRow> compare(const SeasonReport& proposed, const SeasonReport& triggered) {
    const std::vector<std::pair<std::string, double SeasonReport::*>> metrics{
        {"Prescribed irrigation (mm)", &SeasonReport::irrigation_mm},
        {"Cost of violating upper bound", &SeasonReport::cost_upper},
        {"Cost of violating lower bound", &SeasonReport::cost_lower},
        {"Overall cost", &SeasonReport::overall_cost},
        {"Predicted yield (Mg/ha)", &SeasonReport::yield},
    };
    std::vector<ComparisonRow> rows;
    for (const auto& [name, field] : metrics) {
        rows.push_back({name, proposed.*field, triggered.*field, percent_change(proposed.*field, triggered.*field)});
        if (rows.size() == 1) {
            rows.push_back({"Pivot rotations", double(proposed.rotations), double(triggered.rotations),
                            percent_change(proposed.rotations, triggered.rotations)});
        }
    }
    return rows;
}

inline void print_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << std::left << std::setw(32) << "metric" << std::right << std::setw(14) << "proposed" << std::setw(14)
        << "triggered" << std::setw(12) << "change" << '\n';
    for (const auto& r : rows) {
        std::ostringstream delta;
        if (std::isnan(r.delta_pct)) {
            delta << "n/a";
        } else {
            delta << (r.delta_pct < 0 ? "down " : r.delta_pct > 0 ? "up " : "") << std::fixed << std::setprecision(1)
                  << std::abs(r.delta_pct) << '%';
        }
        out << std::left << std::setw(32) << r.metric << std::right << std::fixed << std::setprecision(2)
            << std::setw(14) << r.proposed << std::setw(14) << r.triggered << std::setw(12) << delta.str() << '\n';
        out.unsetf(std::ios::fixed);
    }
}

inline nlohmann::json to_json(const std::vector<ComparisonRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"metric", r.metric},
                     {"proposed", r.proposed},
                     {"triggered", r.triggered},
                     {"delta_pct", std::isnan(r.delta_pct) ? nlohmann::json(nullptr) : nlohmann::json(r.delta_pct)}});
    }
    return j;
}

}  // namespace irrisched::harness
