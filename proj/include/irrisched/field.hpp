/**
 * @file field.hpp
 * @brief Zone presets for the studied quadrant and per-zone simulator setup
 */

#pragma once

#include <array>
#include <string>
#include <vector>

#include "agrohydro.hpp"
#include "agronomy.hpp"

namespace irrisched {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Static description of one management zone.
struct ZoneSpec {
    std::string name;
    agrohydro::SoilHydraulicParams hydraulics;
    double theta_fc = 0.28;
    double theta_pwp = 0.12;
    double elevation = 888.0;
    Range irrigation{4.0, 52.0};  ///< admissible daily rate, mm/day
    double theta_init = 0.25;     ///< root-zone moisture on day 1
};

/// Depletion fraction of the stress curve used inside the simulator sink.
inline constexpr double kUptakeDepletion = 0.55;

/// The three zones of the studied quadrant.
inline std::vector<ZoneSpec> default_zones() {
    return {
        {"MZ1", {0.05, 0.43, 1.3, 1.32, 0.25}, 0.28, 0.12, 889.0, {4.0, 52.0}, 0.25},
        {"MZ2", {0.05, 0.43, 1.4, 1.31, 0.30}, 0.28, 0.12, 888.0, {4.3, 59.6}, 0.25},
        {"MZ3", {0.08, 0.40, 1.0, 1.28, 0.31}, 0.30, 0.16, 888.5, {5.0, 62.3}, 0.27},
    };
}

inline agronomy::TargetZone target_zone(const ZoneSpec& z, double mad) {
    return agronomy::target_bounds(z.theta_fc, z.theta_pwp, mad);
}

inline agrohydro::RichardsColumn make_column(const ZoneSpec& z, agrohydro::SolverSettings settings = {}) {
    return agrohydro::RichardsColumn(z.hydraulics, agrohydro::SoilColumnGrid::standard(),
                                     agronomy::target_bounds(z.theta_fc, z.theta_pwp, kUptakeDepletion),
                                     settings);
}

}  // namespace irrisched
