#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "relcollab/core/errors.hpp"
#include "relcollab/data/sample.hpp"

namespace relcollab::data {

enum class NormMode { minmax, zscore };

struct PreprocessConfig {
    std::array<double, 2> window = {0.0, 1.0};  // intensity clip range
    NormMode mode = NormMode::minmax;
};

/// Clips intensities to the window, then normalizes: min-max to [0,1] over
/// the clipped image's own range, or z-score. Degenerate cases: a constant
/// image yields all zeros under min-max, and z-score falls back to plain
/// zero-centering when the standard deviation vanishes. The applied
/// transform is recorded in the sample's preprocess_note.
inline Sample preprocess(Sample s, const PreprocessConfig& cfg) {
    if (!(cfg.window[1] > cfg.window[0])) throw ConfigError("preprocess: empty window");
    const float lo = static_cast<float>(cfg.window[0]);
    const float hi = static_cast<float>(cfg.window[1]);

    double sum = 0, minv = std::numeric_limits<double>::infinity(), maxv = -minv;
    for (int64_t i = 0; i < s.image.numel(); ++i) {
        float v = s.image[i];
        if (!std::isfinite(v)) throw DataError("preprocess: non-finite intensity in " + s.id);
        v = std::clamp(v, lo, hi);
        s.image[i] = v;
        sum += v;
        minv = std::min(minv, static_cast<double>(v));
        maxv = std::max(maxv, static_cast<double>(v));
    }

    std::ostringstream note;
    note << "clip[" << cfg.window[0] << "," << cfg.window[1] << "];";
    if (cfg.mode == NormMode::minmax) {
        const double range = maxv - minv;
        if (range > 0) {
            for (int64_t i = 0; i < s.image.numel(); ++i)
                s.image[i] = static_cast<float>((s.image[i] - minv) / range);
            note << "minmax[" << minv << "," << maxv << "]";
        } else {
            s.image.zero();
            note << "minmax-constant->0";
        }
    } else {
        const double n = static_cast<double>(s.image.numel());
        const double mean = sum / n;
        double var = 0;
        for (int64_t i = 0; i < s.image.numel(); ++i) {
            const double d = s.image[i] - mean;
            var += d * d;
        }
        const double stddev = std::sqrt(var / n);
        if (stddev > 1e-12) {
            for (int64_t i = 0; i < s.image.numel(); ++i)
                s.image[i] = static_cast<float>((s.image[i] - mean) / stddev);
            note << "zscore[mean=" << mean << ",std=" << stddev << "]";
        } else {
            for (int64_t i = 0; i < s.image.numel(); ++i)
                s.image[i] = static_cast<float>(s.image[i] - mean);
            note << "zscore-constant->centered";
        }
    }
    s.preprocess_note = note.str();
    return s;
}

}  // namespace relcollab::data
