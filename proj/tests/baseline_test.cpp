#include <gtest/gtest.h>

#include "irrisched/baseline.hpp"

using namespace irrisched;
using namespace irrisched::baseline;

namespace {

TriggerConfig mad40() { return {agronomy::target_bounds(0.28, 0.12, 0.40), 4}; }

}  // namespace

TEST(TriggeredRate, NoTriggerAtThreshold) {
    const auto cfg = mad40();
    EXPECT_EQ(triggered_rate(cfg.tz.lower, 0.5, 0.0, cfg), 0.0);
    EXPECT_EQ(triggered_rate(0.27, 1.0, 0.0, cfg), 0.0);
    EXPECT_EQ(triggered_rate(0.35, 1.0, 0.0, cfg), 0.0);
}

TEST(TriggeredRate, RefillsDeficitLessRain) {
    EXPECT_NEAR(triggered_rate(0.20, 0.5, 10.0, mad40()), 30.0, 1e-9);
    EXPECT_NEAR(triggered_rate(0.20, 1.0, 0.0, mad40()), 80.0, 1e-9);
}

TEST(TriggeredRate, ClampsWhenRainCoversDeficit) { EXPECT_EQ(triggered_rate(0.20, 0.5, 55.0, mad40()), 0.0); }

TEST(TriggeredRate, NonIncreasingInRain) {
    double prev = triggered_rate(0.18, 0.5, 0.0, mad40());
    for (double p = 0.5; p <= 80.0; p += 0.5) {
        const double u = triggered_rate(0.18, 0.5, p, mad40());
        EXPECT_GE(u, 0.0);
        EXPECT_LE(u, prev);
        prev = u;
    }
}

TEST(TriggeredRate, RejectsNegativeLookahead) {
    auto cfg = mad40();
    cfg.lookahead_days = -1;
    EXPECT_THROW(triggered_rate(0.2, 0.5, 0.0, cfg), InvalidArgument);
}
