/**
 * @file baseline.hpp
 * @brief Triggered irrigation scheduling
 */

#pragma once

#include <algorithm>

#include "agronomy.hpp"

namespace irrisched::baseline {

struct TriggerConfig {
    agronomy::TargetZone tz;
    int lookahead_days = 4;
};

/// Refill to field capacity once the root zone falls below the threshold,
/// less the rain expected over the lookahead window. mm/day.
inline double triggered_rate(double theta_rz, double z_r, double rain_lookahead_mm, const TriggerConfig& cfg) {
    if (cfg.lookahead_days < 0) throw InvalidArgument("triggered_rate: negative lookahead");
    if (theta_rz >= cfg.tz.lower) return 0.0;
    return std::max((cfg.tz.upper - theta_rz) * z_r * 1000.0 - rain_lookahead_mm, 0.0);
}

}  // namespace irrisched::baseline
