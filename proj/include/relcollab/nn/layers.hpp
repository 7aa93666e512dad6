#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/rng.hpp"
#include "relcollab/core/tensor.hpp"

namespace relcollab::nn {

/// Layers process one sample at a time: input [C, spatial...], gradients of
/// the same shape. Each layer pairs a forward that fills a per-pass cache
/// with a backward that consumes it and accumulates parameter gradients, so
/// one parameter set can serve several concurrent passes (the general
/// encoder sees both streams within a step) and gradient routing stays
/// explicit.

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&, Tensor<T>&)>;

namespace geom {

inline std::vector<int64_t> conv_out_shape(const std::vector<int64_t>& in,
                                           const std::vector<int64_t>& kernel,
                                           const std::vector<int64_t>& stride,
                                           const std::vector<int64_t>& pad) {
    std::vector<int64_t> out(in.size());
    for (size_t a = 0; a < in.size(); ++a) {
        const int64_t span = in[a] + 2 * pad[a] - kernel[a];
        if (span < 0 || span % stride[a] != 0)
            throw ConfigError("conv: input extent " + std::to_string(in[a]) +
                              " incompatible with kernel/stride on axis " + std::to_string(a));
        out[a] = span / stride[a] + 1;
    }
    return out;
}

inline std::vector<int64_t> tconv_out_shape(const std::vector<int64_t>& in,
                                            const std::vector<int64_t>& kernel,
                                            const std::vector<int64_t>& stride) {
    std::vector<int64_t> out(in.size());
    for (size_t a = 0; a < in.size(); ++a) out[a] = (in[a] - 1) * stride[a] + kernel[a];
    return out;
}

}  // namespace geom

namespace detail {

/// Gathers conv patches: x [C, in_sp] -> cols [C*K, n_out].
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const std::vector<int64_t>& kernel,
                 const std::vector<int64_t>& stride, const std::vector<int64_t>& pad,
                 const std::vector<int64_t>& out_sp) {
    const int rank = static_cast<int>(kernel.size());
    const int64_t C = x.shape[0];
    const int64_t K = prod(kernel);
    const int64_t N = prod(out_sp);
    std::vector<int64_t> in_sp(x.shape.begin() + 1, x.shape.end());
    std::vector<int64_t> in_stride(rank, 1);
    for (int a = rank - 2; a >= 0; --a) in_stride[a] = in_stride[a + 1] * in_sp[a + 1];
    const int64_t chan_stride = prod(in_sp);

    Tensor<T> cols({C * K, N});
    std::vector<int64_t> o(rank, 0);
    int64_t col = 0;
    do {
        std::vector<int64_t> kidx(rank, 0);
        int64_t krow = 0;
        do {
            int64_t off = 0;
            bool inside = true;
            for (int a = 0; a < rank; ++a) {
                const int64_t p = o[a] * stride[a] + kidx[a] - pad[a];
                if (p < 0 || p >= in_sp[a]) { inside = false; break; }
                off += p * in_stride[a];
            }
            if (inside) {
                for (int64_t c = 0; c < C; ++c)
                    cols[(c * K + krow) * N + col] = x[c * chan_stride + off];
            }
            ++krow;
        } while (next_index(kidx, kernel));
        ++col;
    } while (next_index(o, out_sp));
    return cols;
}

/// Scatter-adds cols gradients back onto the input grid (inverse of im2col).
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const std::vector<int64_t>& in_shape,
                 const std::vector<int64_t>& kernel, const std::vector<int64_t>& stride,
                 const std::vector<int64_t>& pad, const std::vector<int64_t>& out_sp) {
    const int rank = static_cast<int>(kernel.size());
    const int64_t C = in_shape[0];
    const int64_t K = prod(kernel);
    const int64_t N = prod(out_sp);
    std::vector<int64_t> in_sp(in_shape.begin() + 1, in_shape.end());
    std::vector<int64_t> in_stride(rank, 1);
    for (int a = rank - 2; a >= 0; --a) in_stride[a] = in_stride[a + 1] * in_sp[a + 1];
    const int64_t chan_stride = prod(in_sp);

    Tensor<T> x(in_shape);
    std::vector<int64_t> o(rank, 0);
    int64_t col = 0;
    do {
        std::vector<int64_t> kidx(rank, 0);
        int64_t krow = 0;
        do {
            int64_t off = 0;
            bool inside = true;
            for (int a = 0; a < rank; ++a) {
                const int64_t p = o[a] * stride[a] + kidx[a] - pad[a];
                if (p < 0 || p >= in_sp[a]) { inside = false; break; }
                off += p * in_stride[a];
            }
            if (inside) {
                for (int64_t c = 0; c < C; ++c)
                    x[c * chan_stride + off] += cols[(c * K + krow) * N + col];
            }
            ++krow;
        } while (next_index(kidx, kernel));
        ++col;
    } while (next_index(o, out_sp));
    return x;
}

}  // namespace detail

template <typename T>
struct ConvCache {
    Tensor<T> input;
    std::vector<int64_t> out_sp;
};

/// N-dimensional convolution (rank 2 or 3), im2col + GEMM.
template <typename T>
struct Conv {
    int64_t in_ch = 0, out_ch = 0;
    std::vector<int64_t> kernel, stride, pad;
    Tensor<T> weight;  // [out_ch, in_ch * K]
    Tensor<T> bias;    // [out_ch]
    Tensor<T> wgrad, bgrad;

    Conv() = default;
    Conv(int64_t in_channels, int64_t out_channels, std::vector<int64_t> k,
         std::vector<int64_t> s, std::vector<int64_t> p)
        : in_ch(in_channels), out_ch(out_channels), kernel(std::move(k)), stride(std::move(s)),
          pad(std::move(p)) {
        weight = Tensor<T>({out_ch, in_ch * prod(kernel)});
        bias = Tensor<T>({out_ch});
        wgrad = zeros_like(weight);
        bgrad = zeros_like(bias);
    }

    /// "Same" convolution for odd kernels when stride is 1.
    static std::vector<int64_t> same_pad(const std::vector<int64_t>& kernel) {
        std::vector<int64_t> p(kernel.size());
        for (size_t a = 0; a < kernel.size(); ++a) p[a] = (kernel[a] - 1) / 2;
        return p;
    }

    void init(Rng& rng) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * prod(kernel)));
        for (int64_t i = 0; i < weight.numel(); ++i) weight[i] = static_cast<T>(rng.normal(0, stddev));
        bias.zero();
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in_shape) const {
        std::vector<int64_t> in_sp(in_shape.begin() + 1, in_shape.end());
        auto out_sp = geom::conv_out_shape(in_sp, kernel, stride, pad);
        out_sp.insert(out_sp.begin(), out_ch);
        return out_sp;
    }

    Tensor<T> forward(const Tensor<T>& x, ConvCache<T>* cache = nullptr) const {
        if (x.shape[0] != in_ch) throw ConfigError("conv: channel mismatch");
        std::vector<int64_t> in_sp(x.shape.begin() + 1, x.shape.end());
        auto out_sp = geom::conv_out_shape(in_sp, kernel, stride, pad);
        Tensor<T> cols = detail::im2col(x, kernel, stride, pad, out_sp);
        const int64_t N = prod(out_sp);
        std::vector<int64_t> out_shape = out_sp;
        out_shape.insert(out_shape.begin(), out_ch);
        Tensor<T> y(out_shape);
        ConstMatMap<T> W(weight.ptr(), out_ch, in_ch * prod(kernel));
        ConstMatMap<T> Cm(cols.ptr(), in_ch * prod(kernel), N);
        MatMap<T> Y(y.ptr(), out_ch, N);
        Y.noalias() = W * Cm;
        for (int64_t c = 0; c < out_ch; ++c) Y.row(c).array() += bias[c];
        if (cache) {
            cache->input = x;
            cache->out_sp = out_sp;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const ConvCache<T>& cache) {
        const int64_t K = prod(kernel);
        const int64_t N = prod(cache.out_sp);
        Tensor<T> cols = detail::im2col(cache.input, kernel, stride, pad, cache.out_sp);
        ConstMatMap<T> Gy(gy.ptr(), out_ch, N);
        ConstMatMap<T> Cm(cols.ptr(), in_ch * K, N);
        MatMap<T> Gw(wgrad.ptr(), out_ch, in_ch * K);
        Gw.noalias() += Gy * Cm.transpose();
        for (int64_t c = 0; c < out_ch; ++c) bgrad[c] += Gy.row(c).sum();
        Tensor<T> gcols({in_ch * K, N});
        ConstMatMap<T> W(weight.ptr(), out_ch, in_ch * K);
        MatMap<T> Gc(gcols.ptr(), in_ch * K, N);
        Gc.noalias() = W.transpose() * Gy;
        return detail::col2im(gcols, cache.input.shape, kernel, stride, pad, cache.out_sp);
    }

    int64_t flops(const std::vector<int64_t>& in_shape) const {
        std::vector<int64_t> in_sp(in_shape.begin() + 1, in_shape.end());
        auto out_sp = geom::conv_out_shape(in_sp, kernel, stride, pad);
        return 2 * out_ch * in_ch * prod(kernel) * prod(out_sp);
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".weight", weight, wgrad);
        fn(prefix + ".bias", bias, bgrad);
    }
};

template <typename T>
struct TConvCache {
    Tensor<T> input;
    std::vector<int64_t> out_sp;
};

/// Transposed convolution for learned upsampling; pad 0, output extent
/// (in-1)*stride + kernel.
template <typename T>
struct TransposedConv {
    int64_t in_ch = 0, out_ch = 0;
    std::vector<int64_t> kernel, stride;
    Tensor<T> weight;  // [in_ch, out_ch * K]
    Tensor<T> bias;    // [out_ch]
    Tensor<T> wgrad, bgrad;

    TransposedConv() = default;
    TransposedConv(int64_t in_channels, int64_t out_channels, std::vector<int64_t> k,
                   std::vector<int64_t> s)
        : in_ch(in_channels), out_ch(out_channels), kernel(std::move(k)), stride(std::move(s)) {
        weight = Tensor<T>({in_ch, out_ch * prod(kernel)});
        bias = Tensor<T>({out_ch});
        wgrad = zeros_like(weight);
        bgrad = zeros_like(bias);
    }

    void init(Rng& rng) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * prod(kernel)));
        for (int64_t i = 0; i < weight.numel(); ++i) weight[i] = static_cast<T>(rng.normal(0, stddev));
        bias.zero();
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in_shape) const {
        std::vector<int64_t> in_sp(in_shape.begin() + 1, in_shape.end());
        auto out_sp = geom::tconv_out_shape(in_sp, kernel, stride);
        out_sp.insert(out_sp.begin(), out_ch);
        return out_sp;
    }

    Tensor<T> forward(const Tensor<T>& x, TConvCache<T>* cache = nullptr) const {
        if (x.shape[0] != in_ch) throw ConfigError("tconv: channel mismatch");
        const int rank = static_cast<int>(kernel.size());
        std::vector<int64_t> in_sp(x.shape.begin() + 1, x.shape.end());
        auto out_sp = geom::tconv_out_shape(in_sp, kernel, stride);
        const int64_t K = prod(kernel);
        const int64_t Nin = prod(in_sp);

        // m = W^T x, shape [out_ch*K, Nin]
        Tensor<T> m({out_ch * K, Nin});
        ConstMatMap<T> W(weight.ptr(), in_ch, out_ch * K);
        ConstMatMap<T> X(x.ptr(), in_ch, Nin);
        MatMap<T> M(m.ptr(), out_ch * K, Nin);
        M.noalias() = W.transpose() * X;

        std::vector<int64_t> out_shape_full = out_sp;
        out_shape_full.insert(out_shape_full.begin(), out_ch);
        Tensor<T> y(out_shape_full);
        std::vector<int64_t> out_stride(rank, 1);
        for (int a = rank - 2; a >= 0; --a) out_stride[a] = out_stride[a + 1] * out_sp[a + 1];
        const int64_t chan_stride = prod(out_sp);

        std::vector<int64_t> i(rank, 0);
        int64_t col = 0;
        do {
            std::vector<int64_t> kidx(rank, 0);
            int64_t krow = 0;
            do {
                int64_t off = 0;
                for (int a = 0; a < rank; ++a) off += (i[a] * stride[a] + kidx[a]) * out_stride[a];
                for (int64_t c = 0; c < out_ch; ++c)
                    y[c * chan_stride + off] += m[(c * K + krow) * Nin + col];
                ++krow;
            } while (next_index(kidx, kernel));
            ++col;
        } while (next_index(i, in_sp));
        for (int64_t c = 0; c < out_ch; ++c) {
            T* yc = y.ptr() + c * chan_stride;
            for (int64_t j = 0; j < chan_stride; ++j) yc[j] += bias[c];
        }
        if (cache) {
            cache->input = x;
            cache->out_sp = out_sp;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const TConvCache<T>& cache) {
        const int rank = static_cast<int>(kernel.size());
        std::vector<int64_t> in_sp(cache.input.shape.begin() + 1, cache.input.shape.end());
        const int64_t K = prod(kernel);
        const int64_t Nin = prod(in_sp);
        const auto& out_sp = cache.out_sp;
        std::vector<int64_t> out_stride(rank, 1);
        for (int a = rank - 2; a >= 0; --a) out_stride[a] = out_stride[a + 1] * out_sp[a + 1];
        const int64_t chan_stride = prod(out_sp);

        // gather gm [out_ch*K, Nin] from gy
        Tensor<T> gm({out_ch * K, Nin});
        std::vector<int64_t> i(rank, 0);
        int64_t col = 0;
        do {
            std::vector<int64_t> kidx(rank, 0);
            int64_t krow = 0;
            do {
                int64_t off = 0;
                for (int a = 0; a < rank; ++a) off += (i[a] * stride[a] + kidx[a]) * out_stride[a];
                for (int64_t c = 0; c < out_ch; ++c)
                    gm[(c * K + krow) * Nin + col] = gy[c * chan_stride + off];
                ++krow;
            } while (next_index(kidx, kernel));
            ++col;
        } while (next_index(i, in_sp));

        ConstMatMap<T> Gm(gm.ptr(), out_ch * K, Nin);
        ConstMatMap<T> X(cache.input.ptr(), in_ch, Nin);
        MatMap<T> Gw(wgrad.ptr(), in_ch, out_ch * K);
        Gw.noalias() += X * Gm.transpose();
        for (int64_t c = 0; c < out_ch; ++c) {
            const T* gc = gy.ptr() + c * chan_stride;
            T acc = 0;
            for (int64_t j = 0; j < chan_stride; ++j) acc += gc[j];
            bgrad[c] += acc;
        }
        Tensor<T> gx(cache.input.shape);
        ConstMatMap<T> W(weight.ptr(), in_ch, out_ch * K);
        MatMap<T> Gx(gx.ptr(), in_ch, Nin);
        Gx.noalias() = W * Gm;
        return gx;
    }

    int64_t flops(const std::vector<int64_t>& in_shape) const {
        std::vector<int64_t> in_sp(in_shape.begin() + 1, in_shape.end());
        return 2 * in_ch * out_ch * prod(kernel) * prod(in_sp);
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".weight", weight, wgrad);
        fn(prefix + ".bias", bias, bgrad);
    }
};

template <typename T>
struct InstanceNormCache {
    Tensor<T> xhat;
    std::vector<double> invstd;
};

/// Per-channel normalization over spatial extent with affine parameters.
template <typename T>
struct InstanceNorm {
    int64_t channels = 0;
    double eps = 1e-5;
    Tensor<T> gamma, beta;
    Tensor<T> ggrad, bgrad;

    InstanceNorm() = default;
    explicit InstanceNorm(int64_t ch, double epsilon = 1e-5) : channels(ch), eps(epsilon) {
        gamma = Tensor<T>({ch});
        gamma.fill(T(1));
        beta = Tensor<T>({ch});
        ggrad = zeros_like(gamma);
        bgrad = zeros_like(beta);
    }

    Tensor<T> forward(const Tensor<T>& x, InstanceNormCache<T>* cache = nullptr) const {
        const int64_t C = x.shape[0];
        const int64_t N = x.numel() / C;
        Tensor<T> y(x.shape);
        Tensor<T> xhat(x.shape);
        std::vector<double> invstds(static_cast<size_t>(C));
        for (int64_t c = 0; c < C; ++c) {
            const T* xc = x.ptr() + c * N;
            double mean = 0;
            for (int64_t i = 0; i < N; ++i) mean += xc[i];
            mean /= static_cast<double>(N);
            double var = 0;
            for (int64_t i = 0; i < N; ++i) {
                const double d = xc[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(N);
            const double invstd = 1.0 / std::sqrt(var + eps);
            invstds[static_cast<size_t>(c)] = invstd;
            T* yc = y.ptr() + c * N;
            T* hc = xhat.ptr() + c * N;
            for (int64_t i = 0; i < N; ++i) {
                const T h = static_cast<T>((xc[i] - mean) * invstd);
                hc[i] = h;
                yc[i] = gamma[c] * h + beta[c];
            }
        }
        if (cache) {
            cache->xhat = std::move(xhat);
            cache->invstd = std::move(invstds);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const InstanceNormCache<T>& cache) {
        const int64_t C = gy.shape[0];
        const int64_t N = gy.numel() / C;
        Tensor<T> gx(gy.shape);
        for (int64_t c = 0; c < C; ++c) {
            const T* g = gy.ptr() + c * N;
            const T* h = cache.xhat.ptr() + c * N;
            double gsum = 0, ghsum = 0;
            for (int64_t i = 0; i < N; ++i) {
                gsum += g[i];
                ghsum += static_cast<double>(g[i]) * h[i];
            }
            ggrad[c] += static_cast<T>(ghsum);
            bgrad[c] += static_cast<T>(gsum);
            const double gmean = gsum / static_cast<double>(N);
            const double ghmean = ghsum / static_cast<double>(N);
            const double scale = gamma[c] * cache.invstd[static_cast<size_t>(c)];
            T* gxc = gx.ptr() + c * N;
            for (int64_t i = 0; i < N; ++i)
                gxc[i] = static_cast<T>(scale * (g[i] - gmean - h[i] * ghmean));
        }
        return gx;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".gamma", gamma, ggrad);
        fn(prefix + ".beta", beta, bgrad);
    }
};

template <typename T>
struct LeakyReluCache {
    Tensor<T> input;
};

template <typename T>
struct LeakyRelu {
    double slope = 0.01;

    Tensor<T> forward(const Tensor<T>& x, LeakyReluCache<T>* cache = nullptr) const {
        Tensor<T> y(x.shape);
        for (int64_t i = 0; i < x.numel(); ++i)
            y[i] = x[i] > T(0) ? x[i] : static_cast<T>(slope * x[i]);
        if (cache) cache->input = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const LeakyReluCache<T>& cache) const {
        Tensor<T> gx(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i)
            gx[i] = cache.input[i] > T(0) ? gy[i] : static_cast<T>(slope * gy[i]);
        return gx;
    }
};

template <typename T>
struct SigmoidCache {
    Tensor<T> output;
};

template <typename T>
struct Sigmoid {
    Tensor<T> forward(const Tensor<T>& x, SigmoidCache<T>* cache = nullptr) const {
        Tensor<T> y(x.shape);
        for (int64_t i = 0; i < x.numel(); ++i)
            y[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
        if (cache) cache->output = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const SigmoidCache<T>& cache) const {
        Tensor<T> gx(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) {
            const T y = cache.output[i];
            gx[i] = gy[i] * y * (T(1) - y);
        }
        return gx;
    }
};

template <typename T>
struct ConvBlockCache {
    ConvCache<T> conv;
    InstanceNormCache<T> norm;
    LeakyReluCache<T> act;
};

/// conv - instance norm - leaky rectifier, the basic stage unit.
template <typename T>
struct ConvBlock {
    Conv<T> conv;
    InstanceNorm<T> norm;
    LeakyRelu<T> act;

    ConvBlock() = default;
    ConvBlock(int64_t in_channels, int64_t out_channels, std::vector<int64_t> kernel)
        : conv(in_channels, out_channels, kernel, std::vector<int64_t>(kernel.size(), 1),
               Conv<T>::same_pad(kernel)),
          norm(out_channels) {}

    void init(Rng& rng) { conv.init(rng); }

    Tensor<T> forward(const Tensor<T>& x, ConvBlockCache<T>* cache = nullptr) const {
        Tensor<T> h = conv.forward(x, cache ? &cache->conv : nullptr);
        h = norm.forward(h, cache ? &cache->norm : nullptr);
        return act.forward(h, cache ? &cache->act : nullptr);
    }

    Tensor<T> backward(const Tensor<T>& gy, const ConvBlockCache<T>& cache) {
        Tensor<T> g = act.backward(gy, cache.act);
        g = norm.backward(g, cache.norm);
        return conv.backward(g, cache.conv);
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in_shape) const {
        return conv.out_shape(in_shape);
    }

    int64_t flops(const std::vector<int64_t>& in_shape) const { return conv.flops(in_shape); }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        conv.visit(prefix + ".conv", fn);
        norm.visit(prefix + ".norm", fn);
    }
};

/// Concatenates along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (std::vector<int64_t>(a.shape.begin() + 1, a.shape.end()) !=
        std::vector<int64_t>(b.shape.begin() + 1, b.shape.end()))
        throw ConfigError("concat_channels: spatial shape mismatch");
    std::vector<int64_t> shape = a.shape;
    shape[0] += b.shape[0];
    Tensor<T> out(shape);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
    return out;
}

/// Splits a channel-concatenated gradient back into its two halves.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int64_t channels_a) {
    std::vector<int64_t> sa = g.shape, sb = g.shape;
    sa[0] = channels_a;
    sb[0] = g.shape[0] - channels_a;
    Tensor<T> a(sa), b(sb);
    std::copy(g.data.begin(), g.data.begin() + a.numel(), a.data.begin());
    std::copy(g.data.begin() + a.numel(), g.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

}  // namespace relcollab::nn
