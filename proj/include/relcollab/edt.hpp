#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "relcollab/core/tensor.hpp"

namespace relcollab {

/// Exact squared Euclidean distance transform on an anisotropic grid
/// (separable lower-envelope-of-parabolas method, one pass per axis).
/// Seeds have distance 0; distances are between voxel centers in physical
/// units. Axis passes run from the last axis to the first so a squared
/// distance accumulates as ((d_last + ...) + d_first), which a brute-force
/// reference can reproduce term for term.

namespace detail {

/// 1D transform along a line with uniform physical spacing w.
/// f holds squared distances on entry and exit.
inline void edt_1d(std::vector<double>& f, double w, std::vector<int>& v,
                   std::vector<double>& z, std::vector<double>& out) {
    const int n = static_cast<int>(f.size());
    const double inf = std::numeric_limits<double>::infinity();
    const double w2 = w * w;
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    bool any = f[0] < inf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == inf) continue;
        if (!any) {  // first finite parabola
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            any = true;
            continue;
        }
        double s;
        for (;;) {
            const int p = v[k];
            s = (f[q] - f[p] + w2 * (static_cast<double>(q) * q - static_cast<double>(p) * p)) /
                (2.0 * w2 * (q - p));
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (!any) {
        std::fill(out.begin(), out.end(), inf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double d = (q - v[k]) * w;
        out[q] = f[v[k]] + d * d;
    }
}

}  // namespace detail

/// Squared physical distance from every voxel to the nearest seed voxel.
/// `seeds` is a binary grid; `spacing` gives mm per axis. Voxels are
/// infinity when there are no seeds.
inline Tensor<double> squared_distance_transform(const Tensor<uint8_t>& seeds,
                                                 const std::vector<double>& spacing) {
    const int rank = seeds.rank();
    if (rank < 1) throw std::invalid_argument("edt: empty grid");
    if (spacing.size() != static_cast<size_t>(rank))
        throw std::invalid_argument("edt: spacing rank mismatch");
    for (double s : spacing)
        if (!(s > 0)) throw std::invalid_argument("edt: spacing must be positive");

    const double inf = std::numeric_limits<double>::infinity();
    Tensor<double> d(seeds.shape);
    for (int64_t i = 0; i < d.numel(); ++i) d[i] = seeds[i] ? 0.0 : inf;

    // Strides per axis.
    std::vector<int64_t> stride(rank, 1);
    for (int a = rank - 2; a >= 0; --a) stride[a] = stride[a + 1] * seeds.shape[a + 1];

    std::vector<double> line, out;
    std::vector<int> v;
    std::vector<double> z;
    for (int a = rank - 1; a >= 0; --a) {
        const int64_t n = seeds.shape[a];
        line.resize(n);
        out.resize(n);
        v.resize(n);
        z.resize(n + 1);
        // iterate over all lines along axis a
        std::vector<int64_t> dims;
        std::vector<int64_t> strides_other;
        for (int b = 0; b < rank; ++b)
            if (b != a) { dims.push_back(seeds.shape[b]); strides_other.push_back(stride[b]); }
        std::vector<int64_t> idx(dims.size(), 0);
        do {
            int64_t base = 0;
            for (size_t b = 0; b < dims.size(); ++b) base += idx[b] * strides_other[b];
            for (int64_t q = 0; q < n; ++q) line[q] = d[base + q * stride[a]];
            detail::edt_1d(line, spacing[a], v, z, out);
            for (int64_t q = 0; q < n; ++q) d[base + q * stride[a]] = out[q];
        } while (!dims.empty() && next_index(idx, dims));
    }
    return d;
}

}  // namespace relcollab
