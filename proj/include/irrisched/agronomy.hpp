/**
 * @file agronomy.hpp
 * @brief Target-zone bounds, crop coefficient curve, water stress and yield
 *
 * The target zone is the moisture band [lower, upper] in which the crop takes
 * up water without stress. The upper bound is field capacity; the lower bound
 * is the management threshold after the allowable depletion:
 *
 *   upper = theta_fc
 *   lower = theta_fc - MAD * (theta_fc - theta_pwp)
 *
 * Water stress follows a Feddes-type trapezoid on volumetric moisture with
 * breakpoints (theta_pwp, lower, upper, anaerobic). Seasonal yield uses the
 * FAO water-production function  Ya = Ym [1 - ky + ky ETc/ETm].
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "errors.hpp"

namespace irrisched::agronomy {

struct TargetZone {
    double lower = 0.0;      ///< threshold moisture, m3/m3
    double upper = 0.0;      ///< field capacity, m3/m3
    double theta_fc = 0.0;
    double theta_pwp = 0.0;
    double mad = 0.0;        ///< management allowable depletion fraction

    bool contains(double theta) const { return theta >= lower && theta <= upper; }
};

struct CropParams {
    double y_m = 8.8;        ///< maximum potential yield, Mg/ha
    double k_y = 1.15;       ///< yield response factor
    double t_base = 5.0;     ///< base temperature, degC
    /// Kc(g) = c0 + c1 g + c2 g^2 + c3 g^3 + c4 g^4 (soft spring wheat)
    std::array<double, 5> kc_poly{-0.0207, 0.00266, 4.7e-8, -2.0e-9, 2.70e-13};
};

inline TargetZone target_bounds(double theta_fc, double theta_pwp, double mad) {
    if (!(theta_pwp < theta_fc)) {
        throw InvalidArgument("target_bounds: theta_pwp must be below theta_fc");
    }
    if (!(mad > 0.0 && mad <= 1.0)) {
        throw InvalidArgument("target_bounds: MAD must lie in (0, 1]");
    }
    TargetZone tz;
    tz.theta_fc = theta_fc;
    tz.theta_pwp = theta_pwp;
    tz.mad = mad;
    tz.upper = theta_fc;
    tz.lower = theta_fc - mad * (theta_fc - theta_pwp);
    return tz;
}

/// Daily growing degree-days, clamped at zero.
inline double gdd(double t_avg, double t_base) { return std::max(t_avg - t_base, 0.0); }

/// Unclamped quartic crop-coefficient curve.
inline double kc_raw(double g, const CropParams& crop = {}) {
    const auto& c = crop.kc_poly;
    return c[0] + g * (c[1] + g * (c[2] + g * (c[3] + g * c[4])));
}

/// Crop coefficient as a function of cumulative GDD, clamped below at 0.
inline double kc(double g, const CropParams& crop = {}) { return std::max(kc_raw(g, crop), 0.0); }

/// Feddes-type trapezoidal water stress factor in [0, 1].
///
/// Rises linearly from theta_pwp to tz.lower, is 1 on [lower, upper], and
/// falls linearly to 0 at the anaerobic point theta_v1.
inline double stress_factor(double theta, const TargetZone& tz, double theta_v1) {
    if (!(tz.theta_pwp < tz.lower && tz.lower <= tz.upper && tz.upper < theta_v1)) {
        throw InvalidArgument("stress_factor: breakpoints must satisfy pwp < lower <= upper < theta_v1");
    }
    if (theta <= tz.theta_pwp) return 0.0;
    if (theta < tz.lower) return (theta - tz.theta_pwp) / (tz.lower - tz.theta_pwp);
    if (theta <= tz.upper) return 1.0;
    if (theta < theta_v1) return (theta_v1 - theta) / (theta_v1 - tz.upper);
    return 0.0;
}

/// Derivative of stress_factor with respect to theta (0 at the kinks' outer sides).
inline double stress_factor_slope(double theta, const TargetZone& tz, double theta_v1) {
    if (theta <= tz.theta_pwp) return 0.0;
    if (theta < tz.lower) return 1.0 / (tz.lower - tz.theta_pwp);
    if (theta <= tz.upper) return 0.0;
    if (theta < theta_v1) return -1.0 / (theta_v1 - tz.upper);
    return 0.0;
}

struct YieldResult {
    double y_a = 0.0;   ///< predicted yield, Mg/ha
    double et_c = 0.0;  ///< actual seasonal crop ET, mm
    double et_m = 0.0;  ///< maximum seasonal crop ET, mm
};

/// Seasonal yield from daily root-zone moisture and daily Kc*ET0 (mm).
///
/// ETc accumulates the stress factor day by day. The result is clamped at 0.
inline YieldResult seasonal_yield(std::span<const double> daily_theta_rz,
                                  std::span<const double> daily_kc_et0,
                                  const CropParams& crop,
                                  const TargetZone& tz,
                                  double theta_v1) {
    if (daily_theta_rz.size() != daily_kc_et0.size()) {
        throw InvalidArgument("seasonal_yield: series lengths differ");
    }
    YieldResult r;
    for (std::size_t d = 0; d < daily_theta_rz.size(); ++d) {
        r.et_m += daily_kc_et0[d];
        r.et_c += stress_factor(daily_theta_rz[d], tz, theta_v1) * daily_kc_et0[d];
    }
    if (!(r.et_m > 0.0)) {
        throw InvalidArgument("seasonal_yield: maximum seasonal ET is zero");
    }
    r.y_a = crop.y_m * (1.0 - crop.k_y + crop.k_y * r.et_c / r.et_m);
    r.y_a = std::max(r.y_a, 0.0);
    return r;
}

}  // namespace irrisched::agronomy
