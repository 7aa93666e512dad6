#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "relcollab/core/errors.hpp"
#include "relcollab/nn/layers.hpp"

namespace relcollab::nn {

enum class LrDecay { poly, constant };

/// Gradient descent with momentum over one parameter group. Each group gets
/// its own instance so momentum buffers never mix gradient sources.
template <typename T>
class SgdMomentum {
public:
    SgdMomentum() = default;
    SgdMomentum(double lr, double momentum, int64_t t_max, LrDecay decay = LrDecay::poly,
                double power = 0.9)
        : lr0_(lr), momentum_(momentum), t_max_(t_max), decay_(decay), power_(power) {
        if (!(lr > 0)) throw ConfigError("optimizer: learning rate must be positive");
        if (momentum < 0 || momentum >= 1) throw ConfigError("optimizer: momentum must be in [0,1)");
        if (t_max < 1) throw ConfigError("optimizer: t_max must be >= 1");
    }

    void attach(const std::vector<ParamRef<T>>& params) {
        velocity_.clear();
        velocity_.reserve(params.size());
        for (const auto& p : params) velocity_.push_back(zeros_like(*p.value));
    }

    double lr_at(int64_t step) const {
        if (decay_ == LrDecay::constant) return lr0_;
        const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(t_max_));
        return lr0_ * std::pow(1.0 - frac, power_);
    }

    /// v <- m*v + g;  p <- p - lr(t)*v
    void step(const std::vector<ParamRef<T>>& params, int64_t step_index) {
        if (params.size() != velocity_.size())
            throw ConfigError("optimizer: parameter group changed since attach");
        const T lr = static_cast<T>(lr_at(step_index));
        const T m = static_cast<T>(momentum_);
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& v = velocity_[i];
            const Tensor<T>& g = *params[i].grad;
            Tensor<T>& p = *params[i].value;
            for (int64_t j = 0; j < v.numel(); ++j) {
                v[j] = m * v[j] + g[j];
                p[j] -= lr * v[j];
            }
        }
    }

    std::vector<Tensor<T>>& velocity() { return velocity_; }
    const std::vector<Tensor<T>>& velocity() const { return velocity_; }

    double base_lr() const { return lr0_; }
    double momentum() const { return momentum_; }

private:
    double lr0_ = 0.01;
    double momentum_ = 0.99;
    int64_t t_max_ = 1;
    LrDecay decay_ = LrDecay::poly;
    double power_ = 0.9;
    std::vector<Tensor<T>> velocity_;
};

}  // namespace relcollab::nn
