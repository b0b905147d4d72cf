// Trains small per-zone models, then runs one month of dry weather with both
// schedulers and prints the comparison. Models are deliberately undersized so
// the demo finishes in about two minutes; use the CLI for full training.

#include <iostream>

#include "irrisched/harness.hpp"

using namespace irrisched;

int main() {
    const auto zones = default_zones();
    const double mad = 0.65;

    for (const auto& z : zones) {
        const auto tz = target_zone(z, mad);
        std::cout << z.name << ": keep root zone between " << tz.lower << " and " << tz.upper << " m3/m3\n";
    }

    std::vector<harness::ZoneModels> models;
    for (std::size_t z = 0; z < zones.size(); ++z) {
        const auto col = make_column(zones[z]);
        const auto ranges = surrogate::GenerationRanges::for_zone(zones[z]);
        surrogate::TrainConfig tc;
        tc.epochs = 10;
        tc.learning_rate = 1e-3;
        tc.seed = z;
        auto lstm = surrogate::train(surrogate::generate_training_data(col, ranges, 80, 11 + z), tc);

        rl::PpoHyper h;
        h.episodes = 1500;
        auto policy = rl::train_agent(rl::ZoneEnv::for_zone(col, zones[z], mad), h, 7 + z);
        models.push_back({std::move(lstm), std::move(policy)});
        std::cout << "trained " << zones[z].name << "\n";
    }

    const auto weather = harness::synthetic_weather("2015-07-01", 30, harness::Climate::Dry, 3);
    harness::SeasonConfig cfg;
    cfg.start_date.clear();
    cfg.end_date.clear();
    cfg.gdd_at_start = 600.0;
    cfg.mad = mad;

    const auto proposed = harness::run_season(cfg, weather, harness::Method::Proposed, &models);
    const auto triggered = harness::run_season(cfg, weather, harness::Method::Triggered);
    harness::print_comparison(std::cout, harness::compare(proposed, triggered));
}
