#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "relcollab/core/tensor.hpp"

namespace relcollab {

/// Segmentation and relation-consistency losses with analytic backward
/// passes. Predictions are sigmoid probabilities in [0,1]; targets binary.

inline constexpr double kDiceEpsDefault = 1e-5;
inline constexpr double kCeClamp = 1e-7;

template <typename T>
T dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps = kDiceEpsDefault) {
    if (!pred.same_shape(target)) throw std::invalid_argument("dice_loss: shape mismatch");
    double inter = 0, psum = 0, tsum = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        inter += static_cast<double>(pred[i]) * target[i];
        psum += pred[i];
        tsum += target[i];
    }
    return static_cast<T>(1.0 - (2.0 * inter + eps) / (psum + tsum + eps));
}

template <typename T>
Tensor<T> dice_loss_backward(const Tensor<T>& pred, const Tensor<T>& target, T upstream = T(1),
                             double eps = kDiceEpsDefault) {
    double inter = 0, psum = 0, tsum = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        inter += static_cast<double>(pred[i]) * target[i];
        psum += pred[i];
        tsum += target[i];
    }
    const double denom = psum + tsum + eps;
    const double num = 2.0 * inter + eps;
    Tensor<T> d(pred.shape);
    for (int64_t i = 0; i < pred.numel(); ++i)
        d[i] = static_cast<T>(upstream * (num / (denom * denom) - 2.0 * target[i] / denom));
    return d;
}

/// Mean binary cross-entropy over voxels; probabilities clamped away from
/// {0,1} before the logs, with zero gradient outside the clamp range.
template <typename T>
T cross_entropy_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("cross_entropy_loss: shape mismatch");
    const int64_t n = pred.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double p = std::min(1.0 - kCeClamp, std::max(kCeClamp, static_cast<double>(pred[i])));
        acc -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
    return static_cast<T>(acc / static_cast<double>(n));
}

template <typename T>
Tensor<T> cross_entropy_backward(const Tensor<T>& pred, const Tensor<T>& target, T upstream = T(1)) {
    const int64_t n = pred.numel();
    Tensor<T> d(pred.shape);
    for (int64_t i = 0; i < n; ++i) {
        double p = static_cast<double>(pred[i]);
        if (p < kCeClamp || p > 1.0 - kCeClamp) continue;  // saturated: clamped in forward
        d[i] = static_cast<T>(upstream * (-target[i] / p + (1.0 - target[i]) / (1.0 - p)) /
                              static_cast<double>(n));
    }
    return d;
}

/// Nearest-neighbour subsampling of a full-resolution mask onto a coarser
/// prediction grid. Factors must divide exactly; picks the top-left voxel of
/// each block.
template <typename T>
Tensor<T> downsample_mask(const Tensor<T>& mask, const std::vector<int64_t>& out_shape) {
    if (mask.rank() != static_cast<int>(out_shape.size()))
        throw std::invalid_argument("downsample_mask: rank mismatch");
    std::vector<int64_t> factor(out_shape.size());
    for (size_t a = 0; a < out_shape.size(); ++a) {
        if (out_shape[a] <= 0 || mask.shape[a] % out_shape[a] != 0)
            throw std::invalid_argument("downsample_mask: non-integer scale factor");
        factor[a] = mask.shape[a] / out_shape[a];
    }
    Tensor<T> out(out_shape);
    std::vector<int64_t> idx(out_shape.size(), 0);
    std::vector<int64_t> src(out_shape.size());
    int64_t i = 0;
    do {
        for (size_t a = 0; a < idx.size(); ++a) src[a] = idx[a] * factor[a];
        out[i++] = mask.at(src);
    } while (next_index(idx, out_shape));
    return out;
}

/// Normalized deep-supervision weights: w_s proportional to 2^-s over the
/// given number of scales, full resolution first.
inline std::vector<double> deep_supervision_weights(size_t scales) {
    if (scales == 0) throw std::invalid_argument("deep_supervision_weights: empty output list");
    std::vector<double> w(scales);
    double sum = 0;
    for (size_t s = 0; s < scales; ++s) { w[s] = std::ldexp(1.0, -static_cast<int>(s)); sum += w[s]; }
    for (auto& v : w) v /= sum;
    return w;
}

/// Multi-scale segmentation loss: sum_s w_s * (dice + cross-entropy) with the
/// target subsampled to each scale. `outputs` ordered full resolution first.
template <typename T>
T seg_loss(const std::vector<Tensor<T>>& outputs, const Tensor<T>& target,
           double eps = kDiceEpsDefault) {
    const auto w = deep_supervision_weights(outputs.size());
    double acc = 0;
    for (size_t s = 0; s < outputs.size(); ++s) {
        Tensor<T> tgt = downsample_mask(target, outputs[s].shape);
        acc += w[s] * (dice_loss(outputs[s], tgt, eps) + cross_entropy_loss(outputs[s], tgt));
    }
    return static_cast<T>(acc);
}

template <typename T>
std::vector<Tensor<T>> seg_loss_backward(const std::vector<Tensor<T>>& outputs,
                                         const Tensor<T>& target, T upstream = T(1),
                                         double eps = kDiceEpsDefault) {
    const auto w = deep_supervision_weights(outputs.size());
    std::vector<Tensor<T>> grads;
    grads.reserve(outputs.size());
    for (size_t s = 0; s < outputs.size(); ++s) {
        Tensor<T> tgt = downsample_mask(target, outputs[s].shape);
        Tensor<T> g = dice_loss_backward(outputs[s], tgt, static_cast<T>(upstream * w[s]), eps);
        Tensor<T> gce = cross_entropy_backward(outputs[s], tgt, static_cast<T>(upstream * w[s]));
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += gce[i];
        grads.push_back(std::move(g));
    }
    return grads;
}

template <typename T>
double frobenius_sq_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("relation loss: dimension mismatch");
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

/// General relation consistency: lambda_g * ||R_a - R_b||_F^2 (pulls the
/// general encoder's relation matrices for the two streams together).
template <typename T>
T rc_general_loss(const Tensor<T>& r_a, const Tensor<T>& r_b, T lambda_g) {
    if (lambda_g < T(0)) throw std::invalid_argument("rc_general_loss: negative lambda");
    return static_cast<T>(lambda_g * frobenius_sq_diff(r_a, r_b));
}

/// Gradients with respect to both matrices.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> rc_general_backward(const Tensor<T>& r_a, const Tensor<T>& r_b,
                                                    T lambda_g, T upstream = T(1)) {
    Tensor<T> da(r_a.shape), db(r_b.shape);
    for (int64_t i = 0; i < r_a.numel(); ++i) {
        const T g = upstream * lambda_g * T(2) * (r_a[i] - r_b[i]);
        da[i] = g;
        db[i] = -g;
    }
    return {std::move(da), std::move(db)};
}

/// Target relation consistency: -lambda_t * ||R_general - R_target||_F^2
/// (minimizing it pushes the target encoder's relations away from the
/// general encoder's). Bounded below by -4*C*lambda_t since rows are
/// unit-norm; an optional clamp caps the repulsion distance.
template <typename T>
T rc_target_loss(const Tensor<T>& r_general, const Tensor<T>& r_target, T lambda_t,
                 double clamp_sq = 0.0) {
    if (lambda_t < T(0)) throw std::invalid_argument("rc_target_loss: negative lambda");
    double d = frobenius_sq_diff(r_general, r_target);
    if (clamp_sq > 0.0 && d > clamp_sq) d = clamp_sq;
    return static_cast<T>(-lambda_t * d);
}

/// Gradient with respect to the target-encoder matrix only; the general
/// encoder is never driven by this loss.
template <typename T>
Tensor<T> rc_target_backward(const Tensor<T>& r_general, const Tensor<T>& r_target, T lambda_t,
                             T upstream = T(1), double clamp_sq = 0.0) {
    Tensor<T> dt(r_target.shape);
    if (clamp_sq > 0.0 && frobenius_sq_diff(r_general, r_target) > clamp_sq) return dt;
    for (int64_t i = 0; i < r_target.numel(); ++i)
        dt[i] = upstream * lambda_t * T(2) * (r_general[i] - r_target[i]);
    return dt;
}

enum class RampForm {
    gaussian,  // base * exp(-5 * (1 - t/T)^2)
    literal,   // base * exp(-5 * (1 - t/T))
};

struct RampSchedule {
    double base = 0.1;
    int64_t t_max = 1;
    RampForm form = RampForm::gaussian;
};

/// Ramp-up coefficient at a step; monotone non-decreasing, reaching `base`
/// exactly at t_max. Steps beyond t_max clamp.
inline double ramp_lambda(int64_t step, const RampSchedule& sched) {
    if (sched.t_max < 1) throw std::invalid_argument("ramp_lambda: t_max must be >= 1");
    if (step < 0) throw std::invalid_argument("ramp_lambda: negative step");
    const double t = static_cast<double>(std::min(step, sched.t_max));
    const double u = 1.0 - t / static_cast<double>(sched.t_max);
    const double e = sched.form == RampForm::gaussian ? u * u : u;
    return sched.base * std::exp(-5.0 * e);
}

/// Per-step loss terms as logged to losses.jsonl.
struct LossBundle {
    double seg = 0;         // >= 0
    double rc_general = 0;  // >= 0, includes lambda_g
    double rc_target = 0;   // <= 0, includes lambda_t
    double lambda_g = 0;
    double lambda_t = 0;

    double total() const { return seg + rc_general + rc_target; }
    bool finite() const {
        return std::isfinite(seg) && std::isfinite(rc_general) && std::isfinite(rc_target);
    }
};

}  // namespace relcollab
