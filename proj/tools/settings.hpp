/**
 * @file settings.hpp
 * @brief YAML configuration for the command line tool
 *
 * Every key is optional; missing keys keep the library defaults. Unknown
 * keys are rejected so that typos do not silently fall back to defaults.
 */

#pragma once

#include <fstream>
#include <set>
#include <string>

#include <yaml-cpp/yaml.h>

#include "irrisched/harness.hpp"

namespace irrisched::cli {

struct Settings {
    harness::SeasonConfig season;
    surrogate::GenerationRanges data;
    int lstm_episodes = 400;
    int lstm_sequence_length = 5;
    int lstm_eval_episodes = 20;
    int lstm_eval_horizon = 30;
    surrogate::TrainConfig lstm;
    rl::PpoHyper ppo;
};

namespace detail {

class Section {
public:
    Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
        if (node_ && !node_.IsMap()) throw ParseError(name_ + ": expected a mapping", line());
    }

    template <class T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!node_ || !node_[key]) return;
        try {
            out = node_[key].as<T>();
        } catch (const YAML::Exception&) {
            throw ParseError(name_ + "." + key + ": bad value", node_[key].Mark().line + 1);
        }
    }

    void read(const std::string& key, Range& out) {
        std::vector<double> v{out.lo, out.hi};
        read(key, v);
        if (v.size() != 2 || v[0] > v[1]) throw ParseError(name_ + "." + key + ": expected [lo, hi]", line());
        out = {v[0], v[1]};
    }

    YAML::Node child(const std::string& key) {
        seen_.insert(key);
        return node_ ? node_[key] : YAML::Node();
    }

    void finish() const {
        if (!node_) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ParseError("unknown key " + name_ + "." + key, kv.first.Mark().line + 1);
        }
    }

private:
    std::size_t line() const { return node_ ? node_.Mark().line + 1 : 1; }

    YAML::Node node_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline Settings parse_settings(const YAML::Node& root) {
    Settings s;
    if (!root || root.IsNull()) return s;
    detail::Section top(root, "config");

    detail::Section season(top.child("season"), "season");
    auto& c = s.season;
    season.read("start_date", c.start_date);
    season.read("end_date", c.end_date);
    season.read("mad", c.mad);
    season.read("shallow_roots_until_month", c.shallow_roots_until_month);
    season.read("shallow_roots_until_day", c.shallow_roots_until_day);
    season.read("z_r_shallow", c.z_r_shallow);
    season.read("z_r_deep", c.z_r_deep);
    season.read("gdd_at_start", c.gdd_at_start);
    season.read("trigger_lookahead", c.trigger_lookahead);
    season.read("forecast_sigma_rain", c.forecast_noise.rain);
    season.read("forecast_sigma_et0", c.forecast_noise.et0);
    season.read("forecast_growth_days", c.forecast_noise.growth_days);
    season.read("truth_noise_std", c.truth_noise_std);
    season.read("seed", c.seed);
    season.read("concurrent", c.concurrent);
    season.finish();

    detail::Section mpc(top.child("mpc"), "mpc");
    mpc.read("horizon", c.horizon);
    mpc.read("q_upper", c.q_upper);
    mpc.read("q_lower", c.q_lower);
    mpc.read("r_u", c.r_u);
    mpc.read("r_c", c.r_c);
    mpc.read("max_iterations", c.mpc_options.max_iterations);
    mpc.read("tolerance", c.mpc_options.tolerance);
    mpc.finish();

    detail::Section crop(top.child("crop"), "crop");
    crop.read("y_m", c.crop.y_m);
    crop.read("k_y", c.crop.k_y);
    crop.read("t_base", c.crop.t_base);
    std::vector<double> poly(c.crop.kc_poly.begin(), c.crop.kc_poly.end());
    crop.read("kc_poly", poly);
    if (poly.size() != 5) throw ParseError("crop.kc_poly: expected 5 coefficients", 1);
    std::copy(poly.begin(), poly.end(), c.crop.kc_poly.begin());
    crop.finish();

    if (const auto zones = top.child("zones")) {
        if (!zones.IsSequence()) throw ParseError("zones: expected a list", zones.Mark().line + 1);
        c.zones.clear();
        const auto defaults = default_zones();
        for (std::size_t i = 0; i < zones.size(); ++i) {
            ZoneSpec z = i < defaults.size() ? defaults[i] : defaults.back();
            detail::Section zs(zones[i], "zones[" + std::to_string(i) + "]");
            zs.read("name", z.name);
            zs.read("theta_r", z.hydraulics.theta_r);
            zs.read("theta_s", z.hydraulics.theta_s);
            zs.read("alpha", z.hydraulics.alpha);
            zs.read("n", z.hydraulics.n);
            zs.read("ks", z.hydraulics.k_s);
            zs.read("theta_fc", z.theta_fc);
            zs.read("theta_pwp", z.theta_pwp);
            zs.read("elevation", z.elevation);
            zs.read("irrigation", z.irrigation);
            zs.read("theta_init", z.theta_init);
            zs.finish();
            if (!z.hydraulics.valid()) throw ParseError("zones[" + std::to_string(i) + "]: invalid hydraulics", 1);
            c.zones.push_back(z);
        }
    }

    detail::Section simulator(top.child("simulator"), "simulator");
    simulator.read("steps_per_day", c.solver.steps_per_day);
    simulator.read("max_halvings", c.solver.max_halvings);
    simulator.read("newton_tolerance", c.solver.newton_tolerance);
    simulator.read("max_newton_iterations", c.solver.max_newton_iterations);
    std::string bottom = c.solver.bottom == agrohydro::BottomBoundary::ZeroFlux ? "zero_flux" : "free_drainage";
    simulator.read("bottom", bottom);
    if (bottom != "free_drainage" && bottom != "zero_flux") {
        throw ParseError("simulator.bottom: expected free_drainage or zero_flux", 1);
    }
    c.solver.bottom = bottom == "zero_flux" ? agrohydro::BottomBoundary::ZeroFlux : agrohydro::BottomBoundary::FreeDrainage;
    simulator.finish();

    detail::Section data(top.child("data"), "data");
    data.read("episodes", s.lstm_episodes);
    data.read("days", s.data.days);
    data.read("et0", s.data.et0);
    data.read("kc", s.data.kc);
    data.read("irrigation_probability", s.data.irrigation_probability);
    data.read("root_depths", s.data.root_depths);
    data.read("initial_suction", s.data.initial_suction);
    data.read("noise_std", s.data.noise_std);
    data.finish();

    detail::Section lstm(top.child("lstm"), "lstm");
    lstm.read("units", s.lstm.units);
    lstm.read("layers", s.lstm.layers);
    lstm.read("epochs", s.lstm.epochs);
    lstm.read("learning_rate", s.lstm.learning_rate);
    lstm.read("batch_size", s.lstm.batch_size);
    lstm.read("sequence_length", s.lstm_sequence_length);
    lstm.read("train_fraction", s.lstm.train_fraction);
    lstm.read("validation_fraction", s.lstm.validation_fraction);
    lstm.read("seed", s.lstm.seed);
    lstm.read("eval_episodes", s.lstm_eval_episodes);
    lstm.read("eval_horizon", s.lstm_eval_horizon);
    lstm.finish();

    detail::Section ppo(top.child("ppo"), "ppo");
    ppo.read("horizon", s.ppo.horizon);
    ppo.read("learning_rate", s.ppo.learning_rate);
    ppo.read("minibatch", s.ppo.minibatch);
    ppo.read("epochs", s.ppo.epochs);
    ppo.read("gamma", s.ppo.gamma);
    ppo.read("lambda", s.ppo.lambda);
    ppo.read("clip", s.ppo.clip);
    ppo.read("entropy_coef", s.ppo.entropy_coef);
    ppo.read("value_coef", s.ppo.value_coef);
    ppo.read("episodes", s.ppo.episodes);
    ppo.read("episodes_per_update", s.ppo.episodes_per_update);
    ppo.read("reward_scale", s.ppo.reward_scale);
    ppo.read("hidden", s.ppo.hidden);
    ppo.read("workers", s.ppo.workers);
    ppo.finish();

    top.finish();
    c.validate();
    s.ppo.validate();
    return s;
}

inline Settings load_settings(const std::string& path) {
    try {
        return parse_settings(YAML::LoadFile(path));
    } catch (const YAML::BadFile&) {
        throw InvalidArgument("cannot open " + path);
    } catch (const YAML::ParserException& e) {
        throw ParseError(e.msg, e.mark.line + 1);
    }
}

}  // namespace irrisched::cli
