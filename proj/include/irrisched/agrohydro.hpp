/**
 * @file agrohydro.hpp
 * @brief 1D Richards equation soil column simulator for one management zone
 *
 * Solves, with depth z positive downward from the surface,
 *
 *   dtheta/dt = d/dz [ K(psi) (dpsi/dz - 1) ] - rho(theta) R(Kc, ET0, z_r)
 *
 * on a node-centred finite-volume grid. Each step is backward Euler in mixed
 * form (storage written through theta(psi), so the discrete water balance
 * closes to the Newton tolerance) with a full Newton iteration on a
 * tridiagonal analytic Jacobian.
 *
 * Boundary conditions:
 *   top    : prescribed flux  q = irrigation + rain - evaporation
 *   bottom : free drainage (unit total-head gradient, q = K(psi_N)),
 *            or zero flux for sealed-column tests
 *
 * Constitutive relations are van Genuchten retention with Mualem conductivity.
 * Internal units are metres and days; forcing is given in mm/day.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "agronomy.hpp"
#include "errors.hpp"

namespace irrisched::agrohydro {

// ---------------------------------------------------------------------------
// Constitutive laws
// ---------------------------------------------------------------------------

struct SoilHydraulicParams {
    double theta_r = 0.05;  ///< residual moisture, m3/m3
    double theta_s = 0.43;  ///< saturated moisture, m3/m3
    double alpha = 1.3;     ///< inverse air-entry head, 1/m
    double n = 1.32;        ///< curve shape (> 1)
    double k_s = 0.25;      ///< saturated conductivity, m/day

    double m() const { return 1.0 - 1.0 / n; }

    bool valid() const {
        return 0.0 <= theta_r && theta_r < theta_s && theta_s <= 1.0 && alpha > 0.0 && n > 1.0 &&
               k_s > 0.0;
    }

    void validate() const {
        if (!valid()) throw InvalidArgument("SoilHydraulicParams: invalid van Genuchten parameters");
    }
};

/// theta, dtheta/dpsi, K and dK/dpsi at one head, sharing the power evaluations.
struct HydraulicState {
    double theta = 0.0;
    double capacity = 0.0;
    double conductivity = 0.0;
    double dconductivity = 0.0;
};

inline HydraulicState vg_evaluate(double psi, const SoilHydraulicParams& p) {
    HydraulicState h;
    const double dtheta = p.theta_s - p.theta_r;
    if (psi >= 0.0) {
        h.theta = p.theta_s;
        h.conductivity = p.k_s;
        return h;
    }
    const double m = p.m();
    const double x = std::pow(-p.alpha * psi, p.n);  // (alpha |psi|)^n
    const double one_x = 1.0 + x;
    const double se = std::pow(one_x, -m);
    // dSe/dpsi = -m n x Se / ((1+x) psi), positive for psi < 0
    const double dse = -m * p.n * x * se / (one_x * psi);
    h.theta = p.theta_r + dtheta * se;
    h.capacity = dtheta * dse;

    // Se^(1/m) = 1/(1+x), so 1 - Se^(1/m) = x/(1+x)
    const double w = std::pow(x / one_x, m);
    const double sqrt_se = std::sqrt(se);
    const double one_w = 1.0 - w;
    h.conductivity = p.k_s * sqrt_se * one_w * one_w;
    if (x > 0.0 && se > 0.0) {
        const double dw = m * p.n * w / (one_x * psi);
        h.dconductivity = p.k_s * (0.5 / sqrt_se * dse * one_w * one_w - 2.0 * sqrt_se * one_w * dw);
    }
    return h;
}

inline double vg_moisture(double psi, const SoilHydraulicParams& p) {
    if (psi >= 0.0) return p.theta_s;
    const double x = std::pow(-p.alpha * psi, p.n);
    return p.theta_r + (p.theta_s - p.theta_r) * std::pow(1.0 + x, -p.m());
}

inline double vg_capacity(double psi, const SoilHydraulicParams& p) {
    return vg_evaluate(psi, p).capacity;
}

inline double vg_conductivity(double psi, const SoilHydraulicParams& p) {
    if (psi >= 0.0) return p.k_s;
    const double m = p.m();
    const double x = std::pow(-p.alpha * psi, p.n);
    const double se = std::pow(1.0 + x, -m);
    const double one_w = 1.0 - std::pow(x / (1.0 + x), m);
    return p.k_s * std::sqrt(se) * one_w * one_w;
}

/// Inverse retention curve: head (m, <= 0) for a moisture in (theta_r, theta_s].
inline double vg_head(double theta, const SoilHydraulicParams& p) {
    if (theta >= p.theta_s) return 0.0;
    if (theta <= p.theta_r) throw InvalidArgument("vg_head: moisture at or below theta_r");
    const double se = (theta - p.theta_r) / (p.theta_s - p.theta_r);
    const double x = std::pow(se, -1.0 / p.m()) - 1.0;
    return -std::pow(x, 1.0 / p.n) / p.alpha;
}

// ---------------------------------------------------------------------------
// Grid, state, forcing
// ---------------------------------------------------------------------------

class SoilColumnGrid {
public:
    explicit SoilColumnGrid(std::vector<double> node_depths) : z_(std::move(node_depths)) {
        if (z_.size() < 2) throw InvalidArgument("SoilColumnGrid: need at least two nodes");
        if (z_.front() != 0.0) throw InvalidArgument("SoilColumnGrid: first node must be at the surface");
        for (std::size_t i = 1; i < z_.size(); ++i) {
            if (!(z_[i] > z_[i - 1])) throw InvalidArgument("SoilColumnGrid: depths must increase");
        }
        const std::size_t n = z_.size();
        volume_.resize(n);
        bounds_.resize(n + 1);
        bounds_[0] = 0.0;
        for (std::size_t i = 1; i < n; ++i) bounds_[i] = 0.5 * (z_[i - 1] + z_[i]);
        bounds_[n] = z_.back();
        for (std::size_t i = 0; i < n; ++i) volume_[i] = bounds_[i + 1] - bounds_[i];
    }

    /// 1.0 m column, 0.025 m spacing to 0.5 m then 0.05 m spacing: 31 nodes.
    static SoilColumnGrid standard() {
        std::vector<double> z;
        for (int i = 0; i <= 20; ++i) z.push_back(0.025 * i);
        for (int i = 1; i <= 10; ++i) z.push_back(0.5 + 0.05 * i);
        return SoilColumnGrid(std::move(z));
    }

    static SoilColumnGrid uniform(double depth, std::size_t nodes) {
        std::vector<double> z(nodes);
        for (std::size_t i = 0; i < nodes; ++i) z[i] = depth * static_cast<double>(i) / (nodes - 1);
        return SoilColumnGrid(std::move(z));
    }

    std::size_t node_count() const { return z_.size(); }
    double depth() const { return z_.back(); }
    std::span<const double> node_depths() const { return z_; }
    /// Control-volume thickness of each node, m. Sums to depth().
    std::span<const double> volumes() const { return volume_; }
    /// Control-volume faces, node_count()+1 entries from 0 to depth().
    std::span<const double> faces() const { return bounds_; }

private:
    std::vector<double> z_;
    std::vector<double> volume_;
    std::vector<double> bounds_;
};

struct SoilColumnState {
    std::vector<double> psi;  ///< pressure head per node, m
    int day = 0;
    int substep = 0;
};

struct DailyForcing {
    double irrigation = 0.0;  ///< mm/day
    double rain = 0.0;        ///< mm/day
    double et0 = 0.0;         ///< mm/day
    double kc = 0.0;
    double z_r = 0.5;         ///< rooting depth, m
    double ev = 0.0;          ///< surface evaporation, mm/day

    double potential_transpiration_mm() const { return kc * et0; }
    /// Net top-boundary flux into the column, m/day.
    double top_flux() const { return (irrigation + rain - ev) * 1e-3; }
};

enum class BottomBoundary { FreeDrainage, ZeroFlux };

/// Integral of the piecewise-linear interpolant of `values` over [a, b].
inline double integrate_profile(std::span<const double> values, const SoilColumnGrid& grid,
                                double a, double b) {
    const auto z = grid.node_depths();
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
        const double lo = std::max(a, z[i]);
        const double hi = std::min(b, z[i + 1]);
        if (hi <= lo) continue;
        const double h = z[i + 1] - z[i];
        auto at = [&](double s) { return values[i] + (values[i + 1] - values[i]) * (s - z[i]) / h; };
        total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    return total;
}

inline constexpr std::array<double, 4> kQuarterWeights{0.4, 0.3, 0.2, 0.1};

/// 0.4 q1 + 0.3 q2 + 0.2 q3 + 0.1 q4.
inline double weighted_quarters(const std::array<double, 4>& quarter_means) {
    double s = 0.0;
    for (std::size_t q = 0; q < 4; ++q) s += kQuarterWeights[q] * quarter_means[q];
    return s;
}

/// Depth-weighted root-zone moisture: quarter means of the interpolated
/// profile over [0, z_r], weighted 40/30/20/10 from the surface down.
inline double root_zone_moisture(std::span<const double> theta_profile, double z_r,
                                 const SoilColumnGrid& grid) {
    if (theta_profile.size() != grid.node_count()) {
        throw InvalidArgument("root_zone_moisture: profile length differs from grid");
    }
    if (!(z_r > 0.0) || z_r > grid.depth() + 1e-12) {
        throw InvalidArgument("root_zone_moisture: rooting depth outside the column");
    }
    const double q = z_r / 4.0;
    std::array<double, 4> means{};
    for (int k = 0; k < 4; ++k) {
        means[k] = integrate_profile(theta_profile, grid, k * q, (k + 1) * q) / q;
    }
    return weighted_quarters(means);
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

struct SolverSettings {
    double newton_tolerance = 1e-8;  ///< residual inf-norm, m of water per node
    int max_newton_iterations = 50;
    int max_halvings = 4;
    int steps_per_day = 48;
    BottomBoundary bottom = BottomBoundary::FreeDrainage;
};

/// Boundary and sink fluxes of one step, m/day (time-averaged over the step).
struct StepBalance {
    double top_flux = 0.0;       ///< into the column
    double bottom_flux = 0.0;    ///< out of the column
    double uptake = 0.0;         ///< column-integrated sink
    double storage_before = 0.0; ///< m
    double storage_after = 0.0;  ///< m
    int newton_iterations = 0;
    int halvings = 0;
};

struct DayResult {
    SoilColumnState state;
    std::vector<double> theta;  ///< end-of-day moisture per node
    double infiltration_mm = 0.0;
    double drainage_mm = 0.0;
    double uptake_mm = 0.0;
};

/// Per-zone Richards column: hydraulic parameters, grid and uptake stress curve.
class RichardsColumn {
public:
    RichardsColumn(SoilHydraulicParams params, SoilColumnGrid grid, agronomy::TargetZone uptake_stress,
                   SolverSettings settings = {})
        : p_(params), grid_(std::move(grid)), stress_(uptake_stress), settings_(settings) {
        p_.validate();
        theta_v1_ = vg_moisture(-0.1, p_);
        // exercise the breakpoint check once
        (void)agronomy::stress_factor(stress_.upper, stress_, theta_v1_);
    }

    const SoilHydraulicParams& params() const { return p_; }
    const SoilColumnGrid& grid() const { return grid_; }
    const SolverSettings& settings() const { return settings_; }
    SolverSettings& settings() { return settings_; }
    const agronomy::TargetZone& uptake_stress() const { return stress_; }
    double theta_v1() const { return theta_v1_; }

    std::vector<double> theta_profile(const SoilColumnState& s) const {
        std::vector<double> th(s.psi.size());
        for (std::size_t i = 0; i < th.size(); ++i) th[i] = vg_moisture(s.psi[i], p_);
        return th;
    }

    /// Column water storage, m.
    double storage(std::span<const double> psi) const {
        const auto v = grid_.volumes();
        double s = 0.0;
        for (std::size_t i = 0; i < psi.size(); ++i) s += vg_moisture(psi[i], p_) * v[i];
        return s;
    }

    /// Unstressed sink density per node (1/day): Kc*ET0 spread 40/30/20/10
    /// over the quarters of [0, z_r].
    std::vector<double> potential_sink(const DailyForcing& f) const {
        if (f.z_r > grid_.depth() + 1e-12) {
            throw InvalidArgument("root_uptake_sink: rooting depth exceeds column depth");
        }
        const std::size_t n = grid_.node_count();
        std::vector<double> s(n, 0.0);
        const double demand = f.potential_transpiration_mm() * 1e-3;  // m/day
        if (demand <= 0.0 || f.z_r <= 0.0) return s;
        const auto faces = grid_.faces();
        const auto vol = grid_.volumes();
        const double q = f.z_r / 4.0;
        for (std::size_t i = 0; i < n; ++i) {
            double amount = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double lo = std::max(faces[i], k * q);
                const double hi = std::min(faces[i + 1], (k + 1) * q);
                if (hi > lo) amount += demand * kQuarterWeights[k] / q * (hi - lo);
            }
            s[i] = amount / vol[i];
        }
        return s;
    }

    /// Stressed root water uptake per node (1/day, volumetric).
    std::vector<double> root_uptake_sink(const SoilColumnState& state, const DailyForcing& f) const {
        auto s = potential_sink(f);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == 0.0) continue;
            s[i] *= agronomy::stress_factor(vg_moisture(state.psi[i], p_), stress_, theta_v1_);
        }
        return s;
    }

    /// One implicit step of length dt (days). Retries with halved sub-steps on
    /// Newton failure; throws ConvergenceFailure when all halvings fail.
    SoilColumnState step(const SoilColumnState& state, const DailyForcing& f, double dt,
                         StepBalance* balance = nullptr) const {
        if (!(dt > 0.0)) throw InvalidArgument("step: dt must be positive");
        if (state.psi.size() != grid_.node_count()) throw InvalidArgument("step: state size mismatch");
        const auto sink = potential_sink(f);
        StepBalance total;
        total.storage_before = storage(state.psi);
        std::vector<double> psi = state.psi;
        double last_residual = 0.0;
        int last_iters = 0;
        for (int halvings = 0; halvings <= settings_.max_halvings; ++halvings) {
            const int pieces = 1 << halvings;
            const double h = dt / pieces;
            std::vector<double> trial = state.psi;
            StepBalance acc;
            bool ok = true;
            for (int k = 0; k < pieces && ok; ++k) {
                StepBalance b;
                ok = newton_step(trial, f, sink, h, b, last_residual, last_iters);
                acc.top_flux += b.top_flux * h;
                acc.bottom_flux += b.bottom_flux * h;
                acc.uptake += b.uptake * h;
                acc.newton_iterations += b.newton_iterations;
            }
            if (ok) {
                psi = std::move(trial);
                total.top_flux = acc.top_flux / dt;
                total.bottom_flux = acc.bottom_flux / dt;
                total.uptake = acc.uptake / dt;
                total.newton_iterations = acc.newton_iterations;
                total.halvings = halvings;
                total.storage_after = storage(psi);
                if (balance) *balance = total;
                SoilColumnState out{std::move(psi), state.day, state.substep + 1};
                return out;
            }
        }
        throw ConvergenceFailure("Richards step failed to converge", last_residual, last_iters);
    }

    /// Advance one day in steps_per_day sub-steps, then perturb psi with
    /// zero-mean Gaussian noise of the given standard deviation.
    template <class Rng>
    DayResult simulate_day(const SoilColumnState& state, const DailyForcing& f, double noise_std,
                           Rng& rng) const {
        DayResult r;
        SoilColumnState s = state;
        s.substep = 0;
        const double dt = 1.0 / settings_.steps_per_day;
        for (int k = 0; k < settings_.steps_per_day; ++k) {
            StepBalance b;
            s = step(s, f, dt, &b);
            r.infiltration_mm += b.top_flux * dt * 1e3;
            r.drainage_mm += b.bottom_flux * dt * 1e3;
            r.uptake_mm += b.uptake * dt * 1e3;
        }
        if (noise_std > 0.0) {
            std::normal_distribution<double> noise(0.0, noise_std);
            for (double& v : s.psi) v += noise(rng);
        }
        s.day = state.day + 1;
        s.substep = 0;
        r.theta = theta_profile(s);
        r.state = std::move(s);
        return r;
    }

    DayResult simulate_day(const SoilColumnState& state, const DailyForcing& f) const {
        std::mt19937_64 unused(0);
        return simulate_day(state, f, 0.0, unused);
    }

    double root_zone_moisture(const SoilColumnState& s, double z_r) const {
        return agrohydro::root_zone_moisture(theta_profile(s), z_r, grid_);
    }

    /// Hydrostatic (zero-flow) profile psi(z) = psi_top + z.
    SoilColumnState hydrostatic(double psi_top) const {
        SoilColumnState s;
        const auto z = grid_.node_depths();
        s.psi.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) s.psi[i] = psi_top + z[i];
        return s;
    }

    /// Hydrostatic profile whose root-zone moisture matches `theta_rz`
    /// (bisection on the surface head, |error| <= tol).
    SoilColumnState hydrostatic_for_root_zone(double theta_rz, double z_r, double tol = 1e-7) const {
        if (!(theta_rz > p_.theta_r) || theta_rz > p_.theta_s) {
            throw InvalidArgument("init_states: requested moisture outside (theta_r, theta_s]");
        }
        if (theta_rz >= p_.theta_s) return hydrostatic(0.0);
        // psi_top = -exp(t); root-zone moisture decreases monotonically in t
        auto rz = [&](double t) { return root_zone_moisture(hydrostatic(-std::exp(t)), z_r); };
        double lo = std::log(1e-8);  // wet end
        double hi = std::log(1e6);   // dry end
        if (rz(hi) >= theta_rz) return hydrostatic(-std::exp(hi));
        double mid = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            mid = 0.5 * (lo + hi);
            const double v = rz(mid);
            if (std::abs(v - theta_rz) <= tol) break;
            (v > theta_rz ? lo : hi) = mid;
        }
        return hydrostatic(-std::exp(mid));
    }

private:
    // Residual, in m of water per node over the step:
    //   R_i = V_i (theta_i - theta_i^old) - h (q_{i-1/2} - q_{i+1/2} - V_i S_i)
    // with q positive downward.
    bool newton_step(std::vector<double>& psi, const DailyForcing& f, const std::vector<double>& sink,
                     double h, StepBalance& b, double& residual_out, int& iters_out) const {
        const std::size_t n = psi.size();
        const auto z = grid_.node_depths();
        const auto vol = grid_.volumes();
        const double q_top = f.top_flux();

        std::vector<double> theta_old(n);
        for (std::size_t i = 0; i < n; ++i) theta_old[i] = vg_moisture(psi[i], p_);

        std::vector<HydraulicState> hs(n);
        std::vector<double> res(n), lower(n), diag(n), upper(n), rhs(n);
        std::vector<double> q_face(n + 1), uptake(n);
        double norm = 0.0;

        auto assemble = [&](bool with_jacobian) {
            for (std::size_t i = 0; i < n; ++i) hs[i] = vg_evaluate(psi[i], p_);
            std::fill(diag.begin(), diag.end(), 0.0);
            std::fill(lower.begin(), lower.end(), 0.0);
            std::fill(upper.begin(), upper.end(), 0.0);
            // interior faces
            q_face[0] = q_top;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const double dz = z[i + 1] - z[i];
                const double ka = std::max(hs[i].conductivity, 1e-300);
                const double kb = std::max(hs[i + 1].conductivity, 1e-300);
                const double kh = std::sqrt(ka * kb);
                const double grad = (psi[i + 1] - psi[i]) / dz - 1.0;
                q_face[i + 1] = -kh * grad;
                if (with_jacobian) {
                    const double dkh_a = 0.5 * kh / ka * hs[i].dconductivity;
                    const double dkh_b = 0.5 * kh / kb * hs[i + 1].dconductivity;
                    const double dq_da = -dkh_a * grad + kh / dz;
                    const double dq_db = -dkh_b * grad - kh / dz;
                    // R_i contains +h q_{i+1/2}; R_{i+1} contains -h q_{i+1/2}
                    diag[i] += h * dq_da;
                    upper[i] += h * dq_db;
                    lower[i + 1] -= h * dq_da;
                    diag[i + 1] -= h * dq_db;
                }
            }
            double dq_bottom = 0.0;
            if (settings_.bottom == BottomBoundary::FreeDrainage) {
                q_face[n] = hs[n - 1].conductivity;
                dq_bottom = hs[n - 1].dconductivity;
            } else {
                q_face[n] = 0.0;
            }
            if (with_jacobian) diag[n - 1] += h * dq_bottom;

            norm = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0, ds = 0.0;
                if (sink[i] > 0.0) {
                    s = sink[i] * agronomy::stress_factor(hs[i].theta, stress_, theta_v1_);
                    ds = sink[i] * agronomy::stress_factor_slope(hs[i].theta, stress_, theta_v1_) *
                         hs[i].capacity;
                }
                uptake[i] = s * vol[i];
                res[i] = vol[i] * (hs[i].theta - theta_old[i]) - h * (q_face[i] - q_face[i + 1] - vol[i] * s);
                if (with_jacobian) diag[i] += vol[i] * hs[i].capacity + h * vol[i] * ds;
                norm = std::max(norm, std::abs(res[i]));
            }
        };

        for (int it = 0; it < settings_.max_newton_iterations; ++it) {
            assemble(true);
            if (!std::isfinite(norm)) break;
            if (norm < settings_.newton_tolerance) {
                finish(b, q_face, uptake, it);
                residual_out = norm;
                iters_out = it;
                return true;
            }
            for (std::size_t i = 0; i < n; ++i) rhs[i] = -res[i];
            if (!solve_tridiagonal(lower, diag, upper, rhs)) break;
            for (std::size_t i = 0; i < n; ++i) {
                // cap very large head changes in one Newton update
                const double cap = std::max(1.0, 0.5 * std::abs(psi[i]));
                psi[i] += std::clamp(rhs[i], -cap, cap);
            }
            iters_out = it + 1;
        }
        assemble(false);
        residual_out = norm;
        if (std::isfinite(norm) && norm < settings_.newton_tolerance) {
            finish(b, q_face, uptake, iters_out);
            return true;
        }
        return false;
    }

    static void finish(StepBalance& b, const std::vector<double>& q_face, const std::vector<double>& uptake,
                       int iterations) {
        b.top_flux = q_face.front();
        b.bottom_flux = q_face.back();
        b.uptake = std::accumulate(uptake.begin(), uptake.end(), 0.0);
        b.newton_iterations = iterations;
    }

    // Thomas algorithm; solution returned in rhs. False on a zero pivot.
    static bool solve_tridiagonal(const std::vector<double>& a, std::vector<double> b,
                                  std::vector<double> c, std::vector<double>& d) {
        const std::size_t n = d.size();
        for (std::size_t i = 1; i < n; ++i) {
            if (b[i - 1] == 0.0 || !std::isfinite(b[i - 1])) return false;
            const double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        if (b[n - 1] == 0.0 || !std::isfinite(b[n - 1])) return false;
        d[n - 1] /= b[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
        for (double v : d) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    SoilHydraulicParams p_;
    SoilColumnGrid grid_;
    agronomy::TargetZone stress_;
    SolverSettings settings_;
    double theta_v1_ = 0.0;
};

}  // namespace irrisched::agrohydro
