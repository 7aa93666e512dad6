#pragma once

#include <json.hpp>

#include "relcollab/data/phantom.hpp"

namespace relcollab::data {

inline nlohmann::json lesion_family_to_json(const LesionFamily& f) {
    return {{"blobs_min", f.blobs_min},     {"blobs_max", f.blobs_max},
            {"radius_min", f.radius_min},   {"radius_max", f.radius_max},
            {"aspect_jitter", f.aspect_jitter}, {"intensity", f.intensity}};
}

inline LesionFamily lesion_family_from_json(const nlohmann::json& js, LesionFamily base) {
    base.blobs_min = js.value("blobs_min", base.blobs_min);
    base.blobs_max = js.value("blobs_max", base.blobs_max);
    base.radius_min = js.value("radius_min", base.radius_min);
    base.radius_max = js.value("radius_max", base.radius_max);
    base.aspect_jitter = js.value("aspect_jitter", base.aspect_jitter);
    base.intensity = js.value("intensity", base.intensity);
    return base;
}

inline nlohmann::json phantom_config_to_json(const PhantomConfig& c) {
    return {{"rank", c.rank},
            {"grid", c.grid},
            {"spacing", c.spacing},
            {"counts",
             {{"target_labeled", c.n_target_labeled},
              {"target_unlabeled", c.n_target_unlabeled},
              {"auxiliary", c.n_auxiliary}}},
            {"target_lesions", lesion_family_to_json(c.target_family)},
            {"auxiliary_lesions", lesion_family_to_json(c.auxiliary_family)},
            {"background",
             {{"level", c.background_level},
              {"smooth_amp", c.background_smooth_amp},
              {"cells", c.background_cells}}},
            {"noise_sigma", c.noise_sigma},
            {"window", c.window},
            {"seed", c.seed}};
}

inline PhantomConfig phantom_config_from_json(const nlohmann::json& js) {
    PhantomConfig c;
    c.rank = js.value("rank", c.rank);
    c.grid = js.value("grid", c.grid);
    c.spacing = js.value("spacing", c.spacing);
    if (js.contains("counts")) {
        const auto& jc = js.at("counts");
        c.n_target_labeled = jc.value("target_labeled", c.n_target_labeled);
        c.n_target_unlabeled = jc.value("target_unlabeled", c.n_target_unlabeled);
        c.n_auxiliary = jc.value("auxiliary", c.n_auxiliary);
    }
    if (js.contains("target_lesions"))
        c.target_family = lesion_family_from_json(js.at("target_lesions"), c.target_family);
    if (js.contains("auxiliary_lesions"))
        c.auxiliary_family =
            lesion_family_from_json(js.at("auxiliary_lesions"), c.auxiliary_family);
    if (js.contains("background")) {
        const auto& jb = js.at("background");
        c.background_level = jb.value("level", c.background_level);
        c.background_smooth_amp = jb.value("smooth_amp", c.background_smooth_amp);
        c.background_cells = jb.value("cells", c.background_cells);
    }
    c.noise_sigma = js.value("noise_sigma", c.noise_sigma);
    c.window = js.value("window", c.window);
    c.seed = js.value("seed", c.seed);
    return c;
}

}  // namespace relcollab::data
