#pragma once

#include <filesystem>
#include <string>

#include "irrisched/surrogate.hpp"

namespace fixtures {

inline std::string model_path(int zone) {
    return std::string(IRRISCHED_FIXTURE_DIR) + "/lstm_mz" + std::to_string(zone + 1) + ".json";
}

/// Surrogate for a default zone, trained once per build tree and cached.
inline const irrisched::surrogate::LstmModel& zone_model(int zone) {
    using namespace irrisched;
    static surrogate::LstmModel cache[3];
    static bool ready[3] = {false, false, false};
    if (!ready[zone]) {
        const auto path = model_path(zone);
        if (std::filesystem::exists(path)) {
            cache[zone] = surrogate::load(path);
        } else {
            const auto spec = default_zones()[zone];
            const auto ds = surrogate::generate_training_data(make_column(spec), surrogate::GenerationRanges::for_zone(spec),
                                                              150, 100 + zone);
            surrogate::TrainConfig cfg;
            cfg.epochs = 25;
            cfg.learning_rate = 1e-3;
            cfg.seed = zone;
            cache[zone] = surrogate::train(ds, cfg);
            std::filesystem::create_directories(IRRISCHED_FIXTURE_DIR);
            surrogate::save(cache[zone], path + ".tmp");
            std::filesystem::rename(path + ".tmp", path);
        }
        ready[zone] = true;
    }
    return cache[zone];
}

}  // namespace fixtures
