#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/rng.hpp"
#include "relcollab/data/sample.hpp"

namespace relcollab::data {

/// Parameters of one lesion-shape family. The target family defaults to
/// diffuse multi-blob lesions, the auxiliary family to a single compact
/// blob, so the two domains share structure but differ in distribution.
struct LesionFamily {
    int blobs_min = 1;
    int blobs_max = 1;
    double radius_min = 4.0;
    double radius_max = 8.0;
    double aspect_jitter = 0.0;  // per-axis radius perturbation, fraction of base radius
    double intensity = 0.75;     // lesion level before noise, in window units
};

/// Synthetic two-domain lesion phantom configuration. Generation is a pure
/// function of this struct (including the seed).
struct PhantomConfig {
    int rank = 2;
    std::vector<int64_t> grid = {64, 64};
    std::vector<double> spacing = {1.0, 1.0};
    int n_target_labeled = 8;
    int n_target_unlabeled = 0;
    int n_auxiliary = 16;
    LesionFamily target_family{2, 4, 3.0, 7.0, 0.5, 0.75};
    LesionFamily auxiliary_family{1, 1, 6.0, 12.0, 0.1, 0.75};
    double background_level = 0.20;
    double background_smooth_amp = 0.05;  // low-frequency field amplitude
    int background_cells = 4;             // coarse grid resolution of that field
    double noise_sigma = 0.03;
    std::array<double, 2> window = {0.0, 1.0};
    uint64_t seed = 0;
};

namespace detail {

inline void validate_phantom_config(const PhantomConfig& c) {
    if (c.rank != 2 && c.rank != 3) throw ConfigError("phantom: rank must be 2 or 3");
    if (c.grid.size() != static_cast<size_t>(c.rank)) throw ConfigError("phantom: grid rank mismatch");
    if (c.spacing.size() != static_cast<size_t>(c.rank))
        throw ConfigError("phantom: spacing rank mismatch");
    for (double s : c.spacing)
        if (!(s > 0)) throw ConfigError("phantom: spacing must be positive");
    if (c.n_target_labeled < 0 || c.n_target_unlabeled < 0 || c.n_auxiliary < 0)
        throw ConfigError("phantom: negative sample count");
    if (c.n_target_labeled + c.n_target_unlabeled + c.n_auxiliary == 0)
        throw ConfigError("phantom: no samples requested");
    for (const LesionFamily* f : {&c.target_family, &c.auxiliary_family}) {
        if (f->blobs_min < 0 || f->blobs_max < f->blobs_min)
            throw ConfigError("phantom: invalid blob count range");
        if (f->blobs_max > 0) {
            if (!(f->radius_min > 0) || f->radius_max < f->radius_min)
                throw ConfigError("phantom: invalid radius range");
            for (int64_t d : c.grid)
                if (f->radius_max > (static_cast<double>(d) - 1.0) / 2.0)
                    throw ConfigError("phantom: grid too small for lesion radius " +
                                      std::to_string(f->radius_max));
        }
    }
    if (!(c.window[1] > c.window[0])) throw ConfigError("phantom: empty intensity window");
    if (c.noise_sigma < 0) throw ConfigError("phantom: negative noise sigma");
    if (c.background_cells < 1) throw ConfigError("phantom: background_cells must be >= 1");
}

/// Smooth low-frequency field: multilinear interpolation of a coarse grid of
/// seeded uniform values.
class SmoothField {
public:
    SmoothField(int rank, const std::vector<int64_t>& grid, int cells, double amp, Rng& rng)
        : rank_(rank), grid_(grid), cells_(cells), amp_(amp) {
        int64_t n = 1;
        for (int a = 0; a < rank; ++a) n *= (cells + 1);
        values_.resize(static_cast<size_t>(n));
        for (auto& v : values_) v = rng.uniform(-1.0, 1.0) * amp;
    }

    double at(const std::vector<int64_t>& p) const {
        // position of p in cell coordinates
        std::array<double, 3> u{};
        std::array<int64_t, 3> base{};
        for (int a = 0; a < rank_; ++a) {
            double x = grid_[a] > 1
                           ? static_cast<double>(p[a]) / static_cast<double>(grid_[a] - 1) * cells_
                           : 0.0;
            int64_t b = std::min<int64_t>(static_cast<int64_t>(x), cells_ - 1);
            base[a] = b;
            u[a] = x - static_cast<double>(b);
        }
        double acc = 0;
        const int corners = 1 << rank_;
        for (int m = 0; m < corners; ++m) {
            double w = 1;
            int64_t off = 0;
            for (int a = 0; a < rank_; ++a) {
                const int bit = (m >> a) & 1;
                w *= bit ? u[a] : (1.0 - u[a]);
                off = off * (cells_ + 1) + (base[a] + bit);
            }
            acc += w * values_[static_cast<size_t>(off)];
        }
        return acc;
    }

private:
    int rank_;
    std::vector<int64_t> grid_;
    int cells_;
    double amp_;
    std::vector<double> values_;
};

inline bool in_blob(const std::vector<int64_t>& p, const LesionBlob& blob) {
    double acc = 0;
    for (size_t a = 0; a < p.size(); ++a) {
        const double d = (static_cast<double>(p[a]) - blob.center[a]) / blob.radii[a];
        acc += d * d;
    }
    return acc <= 1.0;
}

inline double quantize_to_window(double v, const std::array<double, 2>& window) {
    const double lo = window[0], hi = window[1];
    double q = std::round((std::clamp(v, lo, hi) - lo) / (hi - lo) * 65535.0);
    return lo + q * (hi - lo) / 65535.0;
}

inline Sample make_phantom_sample(const PhantomConfig& c, DomainTag tag, int index) {
    const LesionFamily& fam =
        tag == DomainTag::auxiliary ? c.auxiliary_family : c.target_family;
    Rng rng(derive_seed(c.seed, static_cast<uint64_t>(tag), static_cast<uint64_t>(index)));

    Sample s;
    s.id = std::string(to_string(tag)) + "_" + std::to_string(index);
    s.tag = tag;
    s.spacing = c.spacing;
    s.image = Tensor<float>(c.grid);
    s.label = Tensor<uint8_t>(c.grid);

    const int nb = fam.blobs_max > 0 ? static_cast<int>(rng.uniform_int(fam.blobs_min, fam.blobs_max)) : 0;
    for (int b = 0; b < nb; ++b) {
        LesionBlob blob;
        const double base = rng.uniform(fam.radius_min, fam.radius_max);
        blob.radii.resize(c.rank);
        blob.center.resize(c.rank);
        for (int a = 0; a < c.rank; ++a) {
            double r = base * (1.0 + fam.aspect_jitter * rng.uniform(-1.0, 1.0));
            r = std::clamp(r, 1.0, (static_cast<double>(c.grid[a]) - 1.0) / 2.0);
            blob.radii[a] = r;
            blob.center[a] = rng.uniform(r, static_cast<double>(c.grid[a]) - 1.0 - r);
        }
        s.lesions.push_back(std::move(blob));
    }

    SmoothField field(c.rank, c.grid, c.background_cells, c.background_smooth_amp, rng);

    std::vector<int64_t> p(c.rank, 0);
    int64_t flat = 0;
    do {
        bool lesion = false;
        for (const auto& blob : s.lesions)
            if (in_blob(p, blob)) { lesion = true; break; }
        double v = lesion ? fam.intensity : c.background_level + field.at(p);
        if (c.noise_sigma > 0) v += c.noise_sigma * rng.normal();
        s.image[flat] = static_cast<float>(quantize_to_window(v, c.window));
        (*s.label)[flat] = lesion ? 1 : 0;
        ++flat;
    } while (next_index(p, c.grid));

    return s;
}

}  // namespace detail

/// Deterministic synthetic dataset: same config + seed gives bit-identical
/// samples. Masks mark exactly the voxels covered by a synthesized blob.
inline Dataset generate_phantom_dataset(const PhantomConfig& config) {
    detail::validate_phantom_config(config);
    Dataset ds;
    ds.samples.reserve(static_cast<size_t>(config.n_target_labeled + config.n_target_unlabeled +
                                           config.n_auxiliary));
    for (int i = 0; i < config.n_target_labeled; ++i)
        ds.samples.push_back(detail::make_phantom_sample(config, DomainTag::target_labeled, i));
    for (int i = 0; i < config.n_target_unlabeled; ++i)
        ds.samples.push_back(detail::make_phantom_sample(config, DomainTag::target_unlabeled, i));
    for (int i = 0; i < config.n_auxiliary; ++i)
        ds.samples.push_back(detail::make_phantom_sample(config, DomainTag::auxiliary, i));
    return ds;
}

}  // namespace relcollab::data
