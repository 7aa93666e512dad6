#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "relcollab/core/tensor.hpp"

namespace relcollab {

/// Channel-wise feature relation matrices.
///
/// A feature map [B, C, spatial...] is reduced to a C x C matrix describing
/// inter-channel co-activation structure: batch mean -> flatten channels to
/// a C x N matrix -> Gram matrix -> row-wise L2 normalization. All steps have
/// hand-derived backward passes so relation losses can drive encoder weights.

template <typename T>
struct RelationMatrix {
    Tensor<T> values;  // [C, C], rows unit-norm except rows of a zero Gram row
    int64_t channels() const { return values.shape.empty() ? 0 : values.shape[0]; }
};

/// Epsilon added to the row-norm denominator; keeps the map differentiable
/// near (but not at) a zero row. Rows that are exactly zero stay zero and are
/// excluded from gradient flow.
inline constexpr double kRowNormEps = 1e-12;

/// Elementwise mean over the batch axis: [B, C, sp...] -> [1, C, sp...].
template <typename T>
Tensor<T> batch_mean(const Tensor<T>& features) {
    if (features.rank() < 3) throw std::invalid_argument("batch_mean: expected [B,C,spatial...]");
    const int64_t B = features.shape[0];
    if (B < 1) throw std::invalid_argument("batch_mean: empty batch");
    std::vector<int64_t> out_shape = features.shape;
    out_shape[0] = 1;
    Tensor<T> out(out_shape);
    const int64_t per = features.numel() / B;
    for (int64_t b = 0; b < B; ++b) {
        const T* src = features.ptr() + b * per;
        for (int64_t i = 0; i < per; ++i) out[i] += src[i];
    }
    const T inv = T(1) / static_cast<T>(B);
    for (int64_t i = 0; i < per; ++i) out[i] *= inv;
    return out;
}

/// [1, C, sp...] -> [C, N] with N = prod(spatial); row c is channel c
/// vectorized in row-major spatial order.
template <typename T>
Tensor<T> flatten_channels(const Tensor<T>& features) {
    if (features.rank() < 3 || features.shape[0] != 1)
        throw std::invalid_argument("flatten_channels: expected batch size 1");
    const int64_t C = features.shape[1];
    const int64_t N = features.numel() / C;
    return features.reshaped({C, N});
}

/// G = A * A^T for A of shape [C, N].
template <typename T>
Tensor<T> gram(const Tensor<T>& a) {
    if (a.rank() != 2) throw std::invalid_argument("gram: expected [C,N]");
    const int64_t C = a.shape[0], N = a.shape[1];
    Tensor<T> g({C, C});
    for (int64_t m = 0; m < C; ++m) {
        const T* rm = a.ptr() + m * N;
        for (int64_t n = m; n < C; ++n) {
            const T* rn = a.ptr() + n * N;
            T acc = 0;
            for (int64_t i = 0; i < N; ++i) acc += rm[i] * rn[i];
            g[m * C + n] = acc;
            g[n * C + m] = acc;
        }
    }
    return g;
}

/// Divides each row by its L2 norm; all-zero rows stay all-zero.
template <typename T>
RelationMatrix<T> normalize_rows(const Tensor<T>& g) {
    if (g.rank() != 2 || g.shape[0] != g.shape[1])
        throw std::invalid_argument("normalize_rows: expected square matrix");
    const int64_t C = g.shape[0];
    RelationMatrix<T> r;
    r.values = Tensor<T>({C, C});
    for (int64_t m = 0; m < C; ++m) {
        const T* row = g.ptr() + m * C;
        double sq = 0;
        for (int64_t n = 0; n < C; ++n) sq += static_cast<double>(row[n]) * row[n];
        if (sq == 0.0) continue;  // dead channel: leave the row zero
        const T inv = static_cast<T>(1.0 / (std::sqrt(sq) + kRowNormEps));
        T* out = r.values.ptr() + m * C;
        for (int64_t n = 0; n < C; ++n) out[n] = row[n] * inv;
    }
    return r;
}

/// Saved intermediates for the backward pass of compute_relation.
template <typename T>
struct RelationCache {
    std::vector<int64_t> feature_shape;  // [B, C, sp...]
    Tensor<T> flat;                      // A = [C, N] of the batch mean
    Tensor<T> gram;                      // G = A A^T
};

/// Full pipeline: batch mean -> flatten -> Gram -> row normalization.
template <typename T>
RelationMatrix<T> compute_relation(const Tensor<T>& features, RelationCache<T>* cache = nullptr) {
    Tensor<T> mean = batch_mean(features);
    Tensor<T> a = flatten_channels(mean);
    Tensor<T> g = gram(a);
    RelationMatrix<T> r = normalize_rows(g);
    if (cache) {
        cache->feature_shape = features.shape;
        cache->flat = std::move(a);
        cache->gram = std::move(g);
    }
    return r;
}

namespace detail {

/// dL/dR -> dL/dG through per-row normalization r = g / (|g| + eps);
/// rows with |g| = 0 are excluded from gradient flow.
template <typename T>
Tensor<T> rownorm_backward(const Tensor<T>& d_relation, const Tensor<T>& gram_matrix) {
    const int64_t C = gram_matrix.shape[0];
    Tensor<T> d_gram({C, C});
    for (int64_t m = 0; m < C; ++m) {
        const T* g = gram_matrix.ptr() + m * C;
        const T* dr = d_relation.ptr() + m * C;
        double sq = 0;
        for (int64_t n = 0; n < C; ++n) sq += static_cast<double>(g[n]) * g[n];
        if (sq == 0.0) continue;
        const double norm = std::sqrt(sq);
        const double denom = norm + kRowNormEps;
        double dot = 0;
        for (int64_t n = 0; n < C; ++n) dot += static_cast<double>(dr[n]) * g[n];
        T* dg = d_gram.ptr() + m * C;
        for (int64_t n = 0; n < C; ++n)
            dg[n] = static_cast<T>(dr[n] / denom - g[n] * dot / (norm * denom * denom));
    }
    return d_gram;
}

}  // namespace detail

/// Saved intermediates for the per-sample variant's backward pass.
template <typename T>
struct PerSampleRelationCache {
    std::vector<int64_t> feature_shape;
    Tensor<T> gram_mean;
};

/// Variant used behind the per-sample experiment flag: Gram per sample,
/// averaged before normalization.
template <typename T>
RelationMatrix<T> compute_relation_per_sample(const Tensor<T>& features,
                                              PerSampleRelationCache<T>* cache = nullptr) {
    const int64_t B = features.shape[0];
    const int64_t C = features.shape[1];
    const int64_t N = features.numel() / (B * C);
    Tensor<T> g_mean({C, C});
    for (int64_t b = 0; b < B; ++b) {
        Tensor<T> a = Tensor<T>({C, N});
        std::copy(features.ptr() + b * C * N, features.ptr() + (b + 1) * C * N, a.ptr());
        Tensor<T> g = gram(a);
        for (int64_t i = 0; i < C * C; ++i) g_mean[i] += g[i] / static_cast<T>(B);
    }
    if (cache) {
        cache->feature_shape = features.shape;
        cache->gram_mean = g_mean;
    }
    return normalize_rows(g_mean);
}

template <typename T>
Tensor<T> relation_backward_per_sample(const Tensor<T>& d_relation, const Tensor<T>& features,
                                       const PerSampleRelationCache<T>& cache) {
    const int64_t B = cache.feature_shape[0];
    const int64_t C = cache.feature_shape[1];
    const int64_t N = Tensor<T>::numel_of(cache.feature_shape) / (B * C);
    Tensor<T> d_gram = detail::rownorm_backward(d_relation, cache.gram_mean);
    Tensor<T> d_features(cache.feature_shape);
    for (int64_t b = 0; b < B; ++b) {
        const T* a = features.ptr() + b * C * N;
        T* df = d_features.ptr() + b * C * N;
        for (int64_t m = 0; m < C; ++m)
            for (int64_t k = 0; k < C; ++k) {
                const T w = (d_gram[m * C + k] + d_gram[k * C + m]) / static_cast<T>(B);
                if (w == T(0)) continue;
                for (int64_t i = 0; i < N; ++i) df[m * N + i] += w * a[k * N + i];
            }
    }
    return d_features;
}

/// dL/dR -> dL/dFeatures through normalize_rows, gram, flatten and batch mean.
template <typename T>
Tensor<T> relation_backward(const Tensor<T>& d_relation, const RelationCache<T>& cache) {
    const int64_t C = cache.flat.shape[0];
    const int64_t N = cache.flat.shape[1];
    if (d_relation.shape != std::vector<int64_t>{C, C})
        throw std::invalid_argument("relation_backward: gradient shape mismatch");

    Tensor<T> d_gram = detail::rownorm_backward(d_relation, cache.gram);

    // Through the Gram product: dA = (dG + dG^T) A.
    Tensor<T> d_flat({C, N});
    for (int64_t m = 0; m < C; ++m) {
        for (int64_t k = 0; k < C; ++k) {
            const T w = d_gram[m * C + k] + d_gram[k * C + m];
            if (w == T(0)) continue;
            const T* ak = cache.flat.ptr() + k * N;
            T* dm = d_flat.ptr() + m * N;
            for (int64_t i = 0; i < N; ++i) dm[i] += w * ak[i];
        }
    }

    // Through flatten and batch mean: broadcast / B.
    const int64_t B = cache.feature_shape[0];
    Tensor<T> d_features(cache.feature_shape);
    const int64_t per = C * N;
    const T inv = T(1) / static_cast<T>(B);
    for (int64_t b = 0; b < B; ++b) {
        T* dst = d_features.ptr() + b * per;
        for (int64_t i = 0; i < per; ++i) dst[i] = d_flat[i] * inv;
    }
    return d_features;
}

}  // namespace relcollab
