#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "irrisched/agrohydro.hpp"

using namespace irrisched;
using namespace irrisched::agrohydro;

namespace {

SoilHydraulicParams loam() { return {0.05, 0.43, 1.3, 1.32, 0.25}; }

RichardsColumn make_column(BottomBoundary bottom = BottomBoundary::FreeDrainage) {
    SolverSettings s;
    s.bottom = bottom;
    return RichardsColumn(loam(), SoilColumnGrid::standard(), agronomy::target_bounds(0.28, 0.12, 0.55), s);
}

// five-point central difference of the retention curve
double capacity_fd(double psi, const SoilHydraulicParams& p) {
    const double h = 1e-3 * std::abs(psi);
    return (-vg_moisture(psi + 2 * h, p) + 8 * vg_moisture(psi + h, p) - 8 * vg_moisture(psi - h, p) +
            vg_moisture(psi - 2 * h, p)) /
           (12 * h);
}

SoilHydraulicParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> tr(0.0, 0.15), ts(0.35, 0.55), a(0.5, 15.0), n(1.1, 3.0),
        ks(0.01, 2.0);
    return {tr(rng), ts(rng), a(rng), n(rng), ks(rng)};
}

}  // namespace

TEST(VanGenuchten, MoistureExamples) {
    const SoilHydraulicParams p{0.1, 0.4, 2.0, 2.0, 0.5};
    EXPECT_EQ(vg_moisture(0.0, p), 0.4);
    EXPECT_EQ(vg_moisture(1.5, p), 0.4);
    EXPECT_NEAR(vg_moisture(-1e12, p), 0.1, 1e-9);
    EXPECT_NEAR(vg_moisture(-0.5, p), 0.1 + 0.3 * std::sqrt(0.5), 1e-15);
    EXPECT_NEAR(vg_moisture(-0.5, p), 0.3121, 5e-5);
}

TEST(VanGenuchten, ConductivityExamples) {
    const SoilHydraulicParams p{0.1, 0.4, 2.0, 2.0, 0.5};
    EXPECT_EQ(vg_conductivity(0.0, p), 0.5);
    EXPECT_LT(vg_conductivity(-1e8, p), 1e-12);
    const double se = std::sqrt(0.5);
    const double expected = 0.5 * std::sqrt(se) * std::pow(1.0 - std::sqrt(0.5), 2);
    EXPECT_NEAR(vg_conductivity(-0.5, p), expected, 1e-15);
    EXPECT_NEAR(vg_conductivity(-0.5, p), 0.0361, 5e-5);
    EXPECT_NEAR(vg_evaluate(-0.5, p).conductivity, expected, 1e-15);
}

TEST(VanGenuchten, CapacityLimits) {
    const auto p = loam();
    EXPECT_EQ(vg_capacity(0.0, p), 0.0);
    EXPECT_EQ(vg_capacity(0.3, p), 0.0);
    EXPECT_LT(vg_capacity(-1e9, p), 1e-9);
}

TEST(VanGenuchten, CapacityMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lg(std::log(1e-3), std::log(50.0));
    for (int k = 0; k < 2000; ++k) {
        const auto p = random_params(rng);
        const double psi = -std::exp(lg(rng));
        const double c = vg_capacity(psi, p);
        const double fd = capacity_fd(psi, p);
        ASSERT_LE(std::abs(c - fd), 1e-6 * std::abs(fd)) << "psi=" << psi << " n=" << p.n;
    }
}

TEST(VanGenuchten, ConductivityDerivativeMatchesFiniteDifferences) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> lg(std::log(1e-2), std::log(50.0));
    for (int k = 0; k < 500; ++k) {
        const auto p = random_params(rng);
        const double psi = -std::exp(lg(rng));
        const double h = 1e-4 * std::abs(psi);
        const double fd = (vg_conductivity(psi + h, p) - vg_conductivity(psi - h, p)) / (2 * h);
        const double dk = vg_evaluate(psi, p).dconductivity;
        ASSERT_NEAR(dk, fd, 1e-5 * std::abs(fd) + 1e-300) << "psi=" << psi;
    }
}

TEST(VanGenuchten, MonotoneAndBounded) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> lg(std::log(1e-4), std::log(1e4));
    for (int k = 0; k < 500; ++k) {
        const auto p = random_params(rng);
        const double a = -std::exp(lg(rng));
        const double b = -std::exp(lg(rng));
        const double lo = std::min(a, b), hi = std::max(a, b);
        EXPECT_LE(vg_moisture(lo, p), vg_moisture(hi, p));
        EXPECT_GE(vg_moisture(lo, p), p.theta_r);
        EXPECT_LE(vg_moisture(hi, p), p.theta_s);
        EXPECT_LE(vg_conductivity(lo, p), vg_conductivity(hi, p));
        EXPECT_GT(vg_conductivity(hi, p), 0.0);
        EXPECT_LE(vg_conductivity(hi, p), p.k_s);
    }
}

TEST(VanGenuchten, HeadInvertsMoisture) {
    const auto p = loam();
    for (double psi : {-0.01, -0.5, -3.3, -150.0}) {
        EXPECT_NEAR(vg_head(vg_moisture(psi, p), p), psi, 1e-8 * std::abs(psi));
    }
}

TEST(Grid, StandardLayout) {
    const auto g = SoilColumnGrid::standard();
    ASSERT_EQ(g.node_count(), 31u);
    EXPECT_EQ(g.node_depths().front(), 0.0);
    EXPECT_NEAR(g.node_depths().back(), 1.0, 1e-15);
    EXPECT_NEAR(g.node_depths()[20], 0.5, 1e-15);
    double total = 0.0;
    for (double v : g.volumes()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-14);
    EXPECT_THROW(SoilColumnGrid({0.0, 0.2, 0.1}), InvalidArgument);
    EXPECT_THROW(SoilColumnGrid({0.1, 0.2}), InvalidArgument);
}

TEST(RootZone, QuarterWeights) {
    EXPECT_NEAR(weighted_quarters({0.30, 0.25, 0.20, 0.15}), 0.25, 1e-15);
    EXPECT_NEAR(weighted_quarters({0.28, 0.28, 0.28, 0.12}), 0.264, 1e-15);
}

TEST(RootZone, UniformProfile) {
    const auto g = SoilColumnGrid::standard();
    std::vector<double> th(g.node_count(), 0.25);
    EXPECT_NEAR(root_zone_moisture(th, 0.5, g), 0.25, 1e-15);
    EXPECT_NEAR(root_zone_moisture(th, 1.0, g), 0.25, 1e-15);
    EXPECT_THROW(root_zone_moisture(th, 1.5, g), InvalidArgument);
}

TEST(RootZone, LinearProfileMatchesAnalyticQuarterMeans) {
    // theta(z) = 0.3 - 0.1 z: quarter means are the value at each quarter midpoint
    for (auto g : {SoilColumnGrid::standard(), SoilColumnGrid::uniform(1.0, 7)}) {
        std::vector<double> th;
        for (double z : g.node_depths()) th.push_back(0.3 - 0.1 * z);
        const double zr = 0.8;
        std::array<double, 4> means{};
        for (int q = 0; q < 4; ++q) means[q] = 0.3 - 0.1 * (q + 0.5) * zr / 4;
        EXPECT_NEAR(root_zone_moisture(th, zr, g), weighted_quarters(means), 1e-14);
    }
}

TEST(RootZone, InvariantToGridRefinementOfUniformProfile) {
    for (std::size_t n : {3u, 11u, 31u, 101u}) {
        const auto g = SoilColumnGrid::uniform(1.0, n);
        std::vector<double> th(n, 0.213);
        EXPECT_NEAR(root_zone_moisture(th, 0.5, g), 0.213, 1e-14);
    }
}

TEST(RootUptake, ZeroDemandGivesZeroSink) {
    const auto col = make_column();
    const auto s0 = col.hydrostatic(-5.0);
    DailyForcing f;
    f.kc = 0.0;
    f.et0 = 6.0;
    for (double v : col.root_uptake_sink(s0, f)) EXPECT_EQ(v, 0.0);
}

TEST(RootUptake, FullyStressedProfileGivesZeroSink) {
    const auto col = make_column();
    const auto dry = col.hydrostatic(-1e4);  // theta near theta_r, below the wilting point
    DailyForcing f{0.0, 0.0, 5.0, 1.0, 1.0};
    for (double v : col.root_uptake_sink(dry, f)) EXPECT_EQ(v, 0.0);
}

TEST(RootUptake, UnstressedSinkIntegratesToDemand) {
    const auto col = make_column();
    // theta_rz between the stress bounds everywhere
    auto s = col.hydrostatic(0.0);
    const double psi_mid = vg_head(0.25, col.params());
    std::fill(s.psi.begin(), s.psi.end(), psi_mid);
    DailyForcing f{0.0, 0.0, 4.0, 1.0, 1.0};
    const auto sink = col.root_uptake_sink(s, f);
    double total = 0.0;
    for (std::size_t i = 0; i < sink.size(); ++i) total += sink[i] * col.grid().volumes()[i];
    EXPECT_NEAR(total * 1e3, 4.0, 1e-9);
    // nothing below the roots
    f.z_r = 0.5;
    const auto shallow = col.root_uptake_sink(s, f);
    for (std::size_t i = 0; i < shallow.size(); ++i) {
        if (col.grid().faces()[i] >= 0.5) {
            EXPECT_EQ(shallow[i], 0.0);
        }
    }
}

TEST(RootUptake, RootsBelowColumnRejected) {
    const auto col = make_column();
    DailyForcing f{0.0, 0.0, 4.0, 1.0, 1.5};
    EXPECT_THROW(col.root_uptake_sink(col.hydrostatic(-2.0), f), InvalidArgument);
}

TEST(Step, SealedColumnConservesWater) {
    const auto col = make_column(BottomBoundary::ZeroFlux);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> head(-20.0, -0.05);
    SoilColumnState s;
    for (std::size_t i = 0; i < col.grid().node_count(); ++i) s.psi.push_back(head(rng));
    DailyForcing sealed;  // no flux, no demand
    for (int k = 0; k < 50; ++k) {
        const double before = col.storage(s.psi);
        s = col.step(s, sealed, 1.0 / 48);
        EXPECT_NEAR(col.storage(s.psi), before, 1e-6);
    }
}

TEST(Step, HydrostaticEquilibriumIsFixedPoint) {
    const auto col = make_column(BottomBoundary::ZeroFlux);
    const auto s0 = col.hydrostatic(-2.0);
    const auto s1 = col.step(s0, DailyForcing{}, 1.0 / 48);
    for (std::size_t i = 0; i < s0.psi.size(); ++i) EXPECT_NEAR(s1.psi[i], s0.psi[i], 1e-8);
}

TEST(Step, InfiltrationMassBalance) {
    const auto col = make_column();
    auto s = col.hydrostatic(vg_head(0.15, col.params()));
    DailyForcing f;
    f.irrigation = 10.0;
    const double before = col.storage(s.psi);
    double drained = 0.0, infiltrated = 0.0;
    for (int k = 0; k < 48; ++k) {
        StepBalance b;
        s = col.step(s, f, 1.0 / 48, &b);
        drained += b.bottom_flux / 48;
        infiltrated += b.top_flux / 48;
        EXPECT_NEAR(b.storage_after - b.storage_before, (b.top_flux - b.bottom_flux - b.uptake) / 48, 1e-6);
    }
    EXPECT_NEAR(infiltrated * 1e3, 10.0, 1e-9);
    EXPECT_NEAR((col.storage(s.psi) - before) * 1e3, 10.0 - drained * 1e3, 1e-4);
}

TEST(Step, RejectsNonPositiveStep) {
    const auto col = make_column();
    EXPECT_THROW(col.step(col.hydrostatic(-1.0), DailyForcing{}, 0.0), InvalidArgument);
}

TEST(SimulateDay, DeterministicWithoutNoise) {
    const auto col = make_column();
    const auto s0 = col.hydrostatic(-4.0);
    DailyForcing f{25.0, 0.0, 6.0, 0.9, 0.5};
    const auto a = col.simulate_day(s0, f);
    const auto b = col.simulate_day(s0, f);
    EXPECT_EQ(a.state.psi, b.state.psi);
    EXPECT_EQ(a.state.day, 1);
}

TEST(SimulateDay, SeededNoiseReproducible) {
    const auto col = make_column();
    const auto s0 = col.hydrostatic(-4.0);
    DailyForcing f{0.0, 3.0, 5.0, 0.8, 1.0};
    std::mt19937_64 r1(99), r2(99), r3(100);
    const auto a = col.simulate_day(s0, f, 0.0005, r1);
    const auto b = col.simulate_day(s0, f, 0.0005, r2);
    const auto c = col.simulate_day(s0, f, 0.0005, r3);
    EXPECT_EQ(a.state.psi, b.state.psi);
    EXPECT_NE(a.state.psi, c.state.psi);
}

TEST(SimulateDay, MoistureStaysInRetentionRange) {
    const auto col = make_column();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> irr(0.0, 60.0), et(0.1, 9.0), kc(0.4, 1.02);
    auto s = col.hydrostatic(-3.0);
    for (int d = 0; d < 30; ++d) {
        DailyForcing f{d % 4 == 0 ? irr(rng) : 0.0, 0.0, et(rng), kc(rng), d < 15 ? 0.5 : 1.0};
        auto r = col.simulate_day(s, f, 0.0005, rng);
        for (double th : r.theta) {
            EXPECT_GE(th, col.params().theta_r);
            EXPECT_LE(th, col.params().theta_s);
        }
        s = r.state;
    }
}

TEST(SimulateDay, DryingReducesRootZoneMoisture) {
    const auto col = make_column();
    auto s = col.hydrostatic_for_root_zone(0.26, 0.5);
    const double before = col.root_zone_moisture(s, 0.5);
    DailyForcing f{0.0, 0.0, 6.0, 1.0, 0.5};
    const auto r = col.simulate_day(s, f);
    const double after = col.root_zone_moisture(r.state, 0.5);
    EXPECT_LT(after, before);
    EXPECT_NEAR(r.uptake_mm, 6.0, 0.5);
}

TEST(HydrostaticInit, MatchesRequestedRootZoneMoisture) {
    const auto col = make_column();
    for (double target : {0.13, 0.2, 0.28, 0.35}) {
        for (double zr : {0.5, 1.0}) {
            const auto s = col.hydrostatic_for_root_zone(target, zr);
            EXPECT_NEAR(col.root_zone_moisture(s, zr), target, 1e-4);
        }
    }
    const auto sat = col.hydrostatic_for_root_zone(col.params().theta_s, 0.5);
    EXPECT_GE(sat.psi.front(), 0.0);
    EXPECT_THROW(col.hydrostatic_for_root_zone(0.01, 0.5), InvalidArgument);
    EXPECT_THROW(col.hydrostatic_for_root_zone(0.6, 0.5), InvalidArgument);
}
