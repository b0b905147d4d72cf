/**
 * @file mpc.hpp
 * @brief Per-zone MPC with zone objectives: rate optimization for a fixed
 *        binary decision sequence against the LSTM dynamics
 *
 * For decisions c and rates u over an N-day horizon the cost is
 *
 *   sum_k  Qup * eh_{k+1}^2 + Qlo * el_{k+1}^2 + Rc * c_k + Ru * u_k
 *
 * with slacks el = max(lower - y, 0), eh = max(y - upper, 0) taken in closed
 * form. Ru is charged per metre of applied water, so a rate in mm enters as
 * Ru * u / 1000. Rates on active days live in [u_min, u_max] and are zero on
 * idle days; the box-constrained problem is solved by single shooting with a
 * spectral projected gradient method.
 */

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "agronomy.hpp"
#include "errors.hpp"
#include "surrogate.hpp"

namespace irrisched::mpc {

using surrogate::Matrix;

struct MpcParams {
    int horizon = 14;
    double q_upper = 2.2e7;  ///< cost per (m3/m3)^2 above the target zone
    double q_lower = 2.0e7;  ///< cost per (m3/m3)^2 below the target zone
    double r_u = 9000.0;     ///< water cost per metre of applied depth
    double r_c = 1000.0;     ///< fixed cost of one irrigation event
    double u_min = 4.0;      ///< mm/day
    double u_max = 52.0;     ///< mm/day
    agronomy::TargetZone tz = agronomy::target_bounds(0.28, 0.12, 0.65);

    double water_cost_per_mm() const { return r_u * 1e-3; }

    void validate() const {
        if (horizon < 1) throw InvalidArgument("MpcParams: horizon must be at least 1");
        if (q_upper < 0 || q_lower < 0 || r_u < 0 || r_c < 0) throw InvalidArgument("MpcParams: negative cost");
        if (!(u_min > 0.0 && u_min <= u_max)) throw InvalidArgument("MpcParams: need 0 < u_min <= u_max");
    }
};

/// Weather and crop inputs over the horizon.
struct Forecast {
    std::vector<double> rain;  ///< mm/day
    std::vector<double> et0;   ///< mm/day
    std::vector<double> kc;
    std::vector<double> z_r;   ///< m

    int days() const { return static_cast<int>(rain.size()); }

    void validate(int n) const {
        if (days() < n || static_cast<int>(et0.size()) < n || static_cast<int>(kc.size()) < n ||
            static_cast<int>(z_r.size()) < n) {
            throw InvalidArgument("Forecast: shorter than the horizon");
        }
        for (int k = 0; k < n; ++k) {
            if (rain[k] < 0 || et0[k] < 0) throw InvalidArgument("Forecast: negative rain or ET0");
        }
    }
};

struct StageCost {
    double cost = 0.0;
    double slack_lower = 0.0;
    double slack_upper = 0.0;
};

inline StageCost stage_cost(double y_next, int c, double u, const MpcParams& p) {
    StageCost s;
    s.slack_lower = std::max(p.tz.lower - y_next, 0.0);
    s.slack_upper = std::max(y_next - p.tz.upper, 0.0);
    s.cost = p.q_upper * s.slack_upper * s.slack_upper + p.q_lower * s.slack_lower * s.slack_lower + p.r_c * c +
             p.water_cost_per_mm() * u;
    return s;
}

struct IrrigationPlan {
    int start_day = 0;
    std::vector<int> c;
    std::vector<double> u;            ///< mm/day
    std::vector<double> slack_lower;  ///< per predicted day
    std::vector<double> slack_upper;
    std::vector<double> y;            ///< predicted root-zone moisture after each day
    double cost_violation = 0.0;
    double cost_fixed = 0.0;
    double cost_water = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    bool converged = false;

    double total() const { return cost_violation + cost_fixed + cost_water; }
    int days() const { return static_cast<int>(c.size()); }
};

/// Enforces c=0 -> u=0 and c=1 -> u in [u_min, u_max].
inline std::vector<double> project_rates(const std::vector<int>& c, std::vector<double> u, const MpcParams& p) {
    u.resize(c.size(), 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) {
        u[k] = c[k] ? std::clamp(std::isfinite(u[k]) ? u[k] : p.u_min, p.u_min, p.u_max) : 0.0;
    }
    return u;
}

/// Shared inputs of one zone's rate problem.
struct RateProblem {
    const surrogate::LstmModel* model = nullptr;
    Matrix past;       ///< l past records [y, water, Kc, ET0, z_r]
    double y_now = 0;  ///< current root-zone moisture estimate
    Forecast forecast;
    MpcParams params;

    Matrix forcing(const std::vector<double>& u) const {
        const int n = static_cast<int>(u.size());
        Matrix f(n, 4);
        for (int k = 0; k < n; ++k) f.row(k) << u[k] + forecast.rain[k], forecast.kc[k], forecast.et0[k], forecast.z_r[k];
        return f;
    }
};

/// Evaluates a plan for fixed c and u (u is projected first).
inline IrrigationPlan evaluate_plan(const RateProblem& pr, const std::vector<int>& c, const std::vector<double>& u_in) {
    IrrigationPlan plan;
    plan.c = c;
    plan.u = project_rates(c, u_in, pr.params);
    const int n = static_cast<int>(c.size());
    plan.y = surrogate::rollout(*pr.model, pr.past, pr.y_now, pr.forcing(plan.u), n);
    for (int k = 0; k < n; ++k) {
        const auto s = stage_cost(plan.y[k], 0, 0.0, pr.params);
        plan.slack_lower.push_back(s.slack_lower);
        plan.slack_upper.push_back(s.slack_upper);
        plan.cost_violation += s.cost;
        plan.cost_fixed += pr.params.r_c * c[k];
        plan.cost_water += pr.params.water_cost_per_mm() * plan.u[k];
    }
    if (!std::isfinite(plan.total())) throw NonFiniteObjective("MPC objective is not finite");
    return plan;
}

struct SolverOptions {
    int max_iterations = 500;
    double tolerance = 1e-6;  ///< projected-gradient infinity norm
    int stall_iterations = 5;
    double stall_relative = 1e-10;
};

/// Locally optimal rates for fixed decisions c. Never returns a plan worse
/// than the projected initial guess.
inline IrrigationPlan solve_rates(const RateProblem& pr, const std::vector<int>& c, const std::vector<double>& u_guess,
                                  const SolverOptions& opt = {}) {
    const auto& p = pr.params;
    p.validate();
    if (!pr.model) throw InvalidArgument("solve_rates: no model");
    const int n = static_cast<int>(c.size());
    if (n < 1) throw InvalidArgument("solve_rates: empty decision sequence");
    pr.forecast.validate(n);

    std::vector<int> active;
    for (int k = 0; k < n; ++k) {
        if (c[k]) active.push_back(k);
    }
    IrrigationPlan best = evaluate_plan(pr, c, u_guess);
    if (active.empty()) {
        best.converged = true;
        return best;
    }

    // objective and gradient over all N rates (idle entries are ignored)
    auto gradient = [&](const std::vector<double>& u, double& f) {
        std::vector<double> dJdy(n);
        const auto traj = surrogate::rollout(*pr.model, pr.past, pr.y_now, pr.forcing(u), n);
        f = 0.0;
        for (int k = 0; k < n; ++k) {
            const auto s = stage_cost(traj[k], c[k], u[k], p);
            f += s.cost;
            dJdy[k] = 2.0 * p.q_upper * s.slack_upper - 2.0 * p.q_lower * s.slack_lower;
        }
        auto g = surrogate::rollout_water_gradient(*pr.model, pr.past, pr.y_now, pr.forcing(u), dJdy);
        for (int k = 0; k < n; ++k) g[k] += p.water_cost_per_mm();
        return g;
    };
    auto objective = [&](const std::vector<double>& u) {
        const auto traj = surrogate::rollout(*pr.model, pr.past, pr.y_now, pr.forcing(u), n);
        double f = 0.0;
        for (int k = 0; k < n; ++k) f += stage_cost(traj[k], c[k], u[k], p).cost;
        return f;
    };
    auto projected_step = [&](const std::vector<double>& u, const std::vector<double>& g, double a) {
        std::vector<double> out = u;
        for (int k : active) out[k] = std::clamp(u[k] - a * g[k], p.u_min, p.u_max);
        return out;
    };

    std::vector<double> u = best.u;
    double f = 0.0;
    auto g = gradient(u, f);
    if (!std::isfinite(f)) throw NonFiniteObjective("MPC objective is not finite");
    auto pg_norm = [&](const std::vector<double>& x, const std::vector<double>& gx) {
        double m = 0.0;
        for (int k : active) m = std::max(m, std::abs(std::clamp(x[k] - gx[k], p.u_min, p.u_max) - x[k]));
        return m;
    };
    double gmax = 0.0;
    for (int k : active) gmax = std::max(gmax, std::abs(g[k]));
    double alpha = gmax > 0.0 ? 1.0 / gmax : 1.0;  // first step moves about 1 mm
    int stall = 0, it = 0;
    double kkt = pg_norm(u, g);
    bool converged = kkt < opt.tolerance;
    for (; it < opt.max_iterations && !converged; ++it) {
        const auto trial = projected_step(u, g, alpha);
        std::vector<double> d(n, 0.0);
        double slope = 0.0;
        for (int k : active) {
            d[k] = trial[k] - u[k];
            slope += g[k] * d[k];
        }
        if (slope >= 0.0) break;
        double lambda = 1.0, f_new = 0.0;
        std::vector<double> u_new(u);
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (int k : active) u_new[k] = u[k] + lambda * d[k];
            f_new = objective(u_new);
            if (!std::isfinite(f_new)) throw NonFiniteObjective("MPC objective is not finite");
            if (f_new <= f + 1e-4 * lambda * slope) {
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
        double f_tmp;
        const auto g_new = gradient(u_new, f_tmp);
        double ss = 0.0, sy = 0.0;
        for (int k : active) {
            const double s = u_new[k] - u[k], yk = g_new[k] - g[k];
            ss += s * s;
            sy += s * yk;
        }
        alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : std::min(alpha * 10.0, 1e12);
        stall = (f - f_new) <= opt.stall_relative * std::max(1.0, std::abs(f)) ? stall + 1 : 0;
        u = std::move(u_new);
        f = f_new;
        g = g_new;
        kkt = pg_norm(u, g);
        if (kkt < opt.tolerance) converged = true;
        if (stall >= opt.stall_iterations) {
            ++it;
            break;
        }
    }
    auto plan = evaluate_plan(pr, c, u);
    if (plan.total() > best.total()) plan = best;  // monotone search makes this a guard only
    plan.iterations = it;
    plan.kkt_residual = kkt;
    plan.converged = converged;
    return plan;
}

/// Field-wide cost of per-zone plans sharing one decision sequence: zone
/// violation and water costs of every zone plus the fixed cost counted once.
inline double evaluate_joint_cost(const std::vector<IrrigationPlan>& plans, const MpcParams& p) {
    if (plans.empty()) throw InvalidArgument("evaluate_joint_cost: no plans");
    double total = 0.0;
    for (const auto& plan : plans) {
        if (plan.c != plans.front().c) throw InvalidArgument("evaluate_joint_cost: decision sequences differ");
        total += plan.cost_violation + plan.cost_water;
    }
    for (int ck : plans.front().c) total += p.r_c * ck;
    return total;
}

inline nlohmann::json to_json(const IrrigationPlan& plan) {
    return {{"start_day", plan.start_day},
            {"c", plan.c},
            {"u_mm", plan.u},
            {"predicted_theta", plan.y},
            {"slack_lower", plan.slack_lower},
            {"slack_upper", plan.slack_upper},
            {"cost", {{"violation", plan.cost_violation}, {"fixed", plan.cost_fixed}, {"water", plan.cost_water},
                      {"total", plan.total()}}},
            {"iterations", plan.iterations},
            {"kkt_residual", plan.kkt_residual},
            {"converged", plan.converged}};
}

inline IrrigationPlan plan_from_json(const nlohmann::json& j) {
    try {
        IrrigationPlan p;
        p.start_day = j.at("start_day");
        p.c = j.at("c").get<std::vector<int>>();
        p.u = j.at("u_mm").get<std::vector<double>>();
        p.y = j.at("predicted_theta").get<std::vector<double>>();
        p.slack_lower = j.at("slack_lower").get<std::vector<double>>();
        p.slack_upper = j.at("slack_upper").get<std::vector<double>>();
        p.cost_violation = j.at("cost").at("violation");
        p.cost_fixed = j.at("cost").at("fixed");
        p.cost_water = j.at("cost").at("water");
        p.iterations = j.value("iterations", 0);
        p.kkt_residual = j.value("kkt_residual", 0.0);
        p.converged = j.value("converged", false);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("plan: ") + e.what(), 0);
    }
}

}  // namespace irrisched::mpc
