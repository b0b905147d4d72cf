/**
 * @file sync.hpp
 * @brief Limiting-zone synchronization of per-zone schedules
 *
 * Every zone policy proposes a decision sequence over the horizon. The zone
 * that fires first is the limiting zone and its sequence becomes binding for
 * the whole field. Rates are then re-optimized per zone with that sequence.
 */

#pragma once

#include <exception>
#include <future>
#include <string>
#include <vector>

#include "mpc.hpp"
#include "rl_agent.hpp"

namespace irrisched::sync {

/// Index of the first irrigation day, or the sequence length if there is none.
inline std::size_t first_fire(const std::vector<int>& c) {
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k]) return k;
    }
    return c.size();
}

inline void check_sequences(const std::vector<std::vector<int>>& seqs) {
    if (seqs.empty()) throw InvalidArgument("sync: no decision sequences");
    for (const auto& s : seqs) {
        if (s.size() != seqs.front().size()) throw InvalidArgument("sync: decision sequences differ in length");
    }
}

/// Zone with the earliest irrigation; ties and all-idle go to the lowest index.
inline std::size_t find_limiting_zone(const std::vector<std::vector<int>>& seqs) {
    check_sequences(seqs);
    std::size_t best = 0;
    for (std::size_t z = 1; z < seqs.size(); ++z) {
        if (first_fire(seqs[z]) < first_fire(seqs[best])) best = z;
    }
    return best;
}

inline std::vector<int> binding_sequence(const std::vector<std::vector<int>>& seqs) {
    return seqs[find_limiting_zone(seqs)];
}

/// Makes an agent's rate proposal consistent with the binding decisions.
inline std::vector<double> repair_guess(const std::vector<double>& u_agent, const std::vector<int>& binding,
                                        double u_min, double u_max) {
    if (u_agent.size() != binding.size()) throw InvalidArgument("repair_guess: length mismatch");
    std::vector<double> u(u_agent.size(), 0.0);
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (!binding[k]) continue;
        u[k] = u_agent[k] <= 0.0 ? u_min : std::clamp(u_agent[k], u_min, u_max);
    }
    return u;
}

/// Everything the scheduler needs to plan for one zone.
struct ZoneModel {
    std::string name;
    const rl::PolicyNet* policy = nullptr;
    const surrogate::LstmModel* surrogate = nullptr;
    const agrohydro::RichardsColumn* column = nullptr;
    mpc::MpcParams params;
};

/// Current knowledge about one zone.
struct ZoneObservation {
    agrohydro::SoilColumnState state;  ///< profile estimate fed to the policy
    surrogate::Matrix past;            ///< last l surrogate records
    double y_now = 0.0;                ///< root-zone moisture estimate
};

struct BindingResult {
    std::size_t limiting_zone = 0;
    std::vector<int> binding_c;
    std::vector<rl::DecisionSequence> proposals;
    std::vector<std::vector<double>> guesses;  ///< repaired, per zone
};

struct Schedule {
    BindingResult binding;
    std::vector<mpc::IrrigationPlan> plans;
    std::vector<double> guess_costs;  ///< objective of the repaired guess, per zone
};

inline BindingResult bind(std::vector<rl::DecisionSequence> proposals, const std::vector<ZoneModel>& zones) {
    std::vector<std::vector<int>> seqs;
    for (const auto& p : proposals) seqs.push_back(p.c);
    BindingResult b;
    b.limiting_zone = find_limiting_zone(seqs);
    b.binding_c = seqs[b.limiting_zone];
    for (std::size_t z = 0; z < proposals.size(); ++z) {
        b.guesses.push_back(repair_guess(proposals[z].u, b.binding_c, zones[z].params.u_min, zones[z].params.u_max));
    }
    b.proposals = std::move(proposals);
    return b;
}

namespace detail {

template <class Fn>
void for_each_zone(std::size_t m, bool concurrent, const std::vector<ZoneModel>& zones, Fn fn) {
    std::vector<std::exception_ptr> errors(m);
    auto guarded = [&](std::size_t z) {
        try {
            fn(z);
        } catch (...) {
            errors[z] = std::current_exception();
        }
    };
    if (concurrent && m > 1) {
        std::vector<std::future<void>> fs;
        for (std::size_t z = 0; z < m; ++z) fs.push_back(std::async(std::launch::async, guarded, z));
        for (auto& f : fs) f.get();
    } else {
        for (std::size_t z = 0; z < m; ++z) guarded(z);
    }
    std::string msg;
    for (std::size_t z = 0; z < m; ++z) {
        if (!errors[z]) continue;
        try {
            std::rethrow_exception(errors[z]);
        } catch (const std::exception& e) {
            msg += (msg.empty() ? "" : "; ") + zones[z].name + ": " + e.what();
        }
    }
    if (!msg.empty()) throw Error("schedule_all: " + msg);
}

}  // namespace detail

/// Policies propose, the limiting zone binds, and each zone's rates are
/// solved with the shared decisions. Results do not depend on `concurrent`.
inline Schedule schedule_all(const std::vector<ZoneModel>& zones, const std::vector<ZoneObservation>& obs,
                             const mpc::Forecast& forecast, bool concurrent = true,
                             const mpc::SolverOptions& opt = {}) {
    if (zones.empty() || zones.size() != obs.size()) throw InvalidArgument("schedule_all: zone/observation mismatch");
    const std::size_t m = zones.size();
    const int n = zones.front().params.horizon;
    for (const auto& z : zones) {
        if (!z.policy || !z.surrogate || !z.column) throw InvalidArgument("schedule_all: zone " + z.name + " incomplete");
        if (z.params.horizon != n) throw InvalidArgument("schedule_all: zones disagree on the horizon");
    }

    std::vector<rl::DecisionSequence> proposals(m);
    detail::for_each_zone(m, concurrent, zones, [&](std::size_t z) {
        proposals[z] = rl::evaluate_sequence(*zones[z].policy, *zones[z].column, obs[z].state, forecast, n);
    });

    Schedule s;
    s.binding = bind(std::move(proposals), zones);
    s.plans.resize(m);
    s.guess_costs.resize(m);
    detail::for_each_zone(m, concurrent, zones, [&](std::size_t z) {
        mpc::RateProblem pr;
        pr.model = zones[z].surrogate;
        pr.past = obs[z].past;
        pr.y_now = obs[z].y_now;
        pr.forecast = forecast;
        pr.params = zones[z].params;
        s.guess_costs[z] = mpc::evaluate_plan(pr, s.binding.binding_c, s.binding.guesses[z]).total();
        s.plans[z] = mpc::solve_rates(pr, s.binding.binding_c, s.binding.guesses[z], opt);
    });
    return s;
}

}  // namespace irrisched::sync
