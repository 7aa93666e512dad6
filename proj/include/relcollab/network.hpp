#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/rng.hpp"
#include "relcollab/nn/layers.hpp"

namespace relcollab {

/// Dual-encoder / shared-decoder segmentation network. Both encoders share
/// one architecture; their deepest outputs are concatenated into the decoder
/// while skip connections come from the target encoder only.

struct StageSpec {
    int64_t channels = 0;
    std::vector<int64_t> conv_kernel;  // empty: level has no conv block (deepest level)
    std::vector<int64_t> down_stride;  // empty for level 0; kernel == stride, no padding
};

struct ArchitectureSpec {
    int rank = 2;
    std::vector<int64_t> patch;
    std::vector<StageSpec> stages;
    int ds_heads = 1;            // deep-supervision outputs, full resolution first
    int relation_stage = -1;     // encoder stage feeding relation matrices; -1 = deepest

    int levels() const { return static_cast<int>(stages.size()); }
    int64_t bottleneck_channels() const { return stages.back().channels; }

    int default_ds_heads() const { return std::max(1, levels() - 3); }

    /// Reference 3D configuration (channels 32..320, anisotropic first and
    /// last downsampling) for 56x160x192 patches.
    static ArchitectureSpec reference_3d() {
        ArchitectureSpec s;
        s.rank = 3;
        s.patch = {56, 160, 192};
        s.stages = {
            {32, {1, 3, 3}, {}},
            {64, {3, 3, 3}, {1, 2, 2}},
            {128, {3, 3, 3}, {2, 2, 2}},
            {256, {3, 3, 3}, {2, 2, 2}},
            {320, {3, 3, 3}, {2, 2, 2}},
            {320, {}, {1, 2, 2}},
        };
        s.ds_heads = s.default_ds_heads();
        return s;
    }

    /// Reference 2D configuration (channels 32..480) for 448x384 patches.
    static ArchitectureSpec reference_2d() {
        ArchitectureSpec s;
        s.rank = 2;
        s.patch = {448, 384};
        s.stages = {
            {32, {3, 3}, {}},
            {64, {3, 3}, {2, 2}},
            {128, {3, 3}, {2, 2}},
            {256, {3, 3}, {2, 2}},
            {480, {3, 3}, {2, 2}},
            {480, {3, 3}, {2, 2}},
            {480, {}, {2, 2}},
        };
        s.ds_heads = s.default_ds_heads();
        return s;
    }

    /// Three-level 64x64 configuration for fast tests and desk-scale runs.
    static ArchitectureSpec tiny() {
        ArchitectureSpec s;
        s.rank = 2;
        s.patch = {64, 64};
        s.stages = {
            {8, {3, 3}, {}},
            {16, {3, 3}, {2, 2}},
            {32, {}, {2, 2}},
        };
        s.ds_heads = 2;
        return s;
    }

    static ArchitectureSpec preset(const std::string& name) {
        if (name == "reference_3d") return reference_3d();
        if (name == "reference_2d") return reference_2d();
        if (name == "tiny") return tiny();
        throw ConfigError("unknown architecture preset: " + name);
    }

    void validate() const {
        if (rank != 2 && rank != 3) throw ConfigError("arch: rank must be 2 or 3");
        if (patch.size() != static_cast<size_t>(rank)) throw ConfigError("arch: patch rank mismatch");
        if (stages.size() < 2) throw ConfigError("arch: need at least two stages");
        if (!stages[0].down_stride.empty()) throw ConfigError("arch: level 0 has no downsampling");
        for (size_t l = 1; l < stages.size(); ++l)
            if (stages[l].down_stride.size() != static_cast<size_t>(rank))
                throw ConfigError("arch: down stride rank mismatch at level " + std::to_string(l));
        // patch must be divisible by the cumulative stride on every axis
        std::vector<int64_t> extent = patch;
        for (size_t l = 1; l < stages.size(); ++l) {
            for (int a = 0; a < rank; ++a) {
                const int64_t s = stages[l].down_stride[a];
                if (extent[a] % s != 0)
                    throw ConfigError("arch: patch axis " + std::to_string(a) + " (extent " +
                                      std::to_string(extent[a]) + ") not divisible by stride " +
                                      std::to_string(s) + " entering level " + std::to_string(l));
                extent[a] /= s;
            }
        }
        if (ds_heads < 1 || ds_heads > levels() - 1)
            throw ConfigError("arch: ds_heads out of range");
        if (relation_stage < -1 || relation_stage >= levels())
            throw ConfigError("arch: relation_stage out of range");
    }

    int resolved_relation_stage() const {
        return relation_stage < 0 ? levels() - 1 : relation_stage;
    }

    nlohmann::json to_json() const {
        nlohmann::json js;
        js["rank"] = rank;
        js["patch"] = patch;
        js["ds_heads"] = ds_heads;
        js["relation_stage"] = relation_stage;
        js["stages"] = nlohmann::json::array();
        for (const auto& st : stages)
            js["stages"].push_back({{"channels", st.channels},
                                    {"conv_kernel", st.conv_kernel},
                                    {"down_stride", st.down_stride}});
        return js;
    }

    static ArchitectureSpec from_json(const nlohmann::json& js) {
        ArchitectureSpec s;
        s.rank = js.at("rank").get<int>();
        s.patch = js.at("patch").get<std::vector<int64_t>>();
        s.ds_heads = js.at("ds_heads").get<int>();
        s.relation_stage = js.at("relation_stage").get<int>();
        for (const auto& jst : js.at("stages"))
            s.stages.push_back({jst.at("channels").get<int64_t>(),
                                jst.at("conv_kernel").get<std::vector<int64_t>>(),
                                jst.at("down_stride").get<std::vector<int64_t>>()});
        return s;
    }
};

/// Named feature-size probe, one entry per architecture row.
struct StageShape {
    std::string name;
    std::vector<int64_t> shape;  // [channels, spatial...]
};

/// Walks the encoder's shape transforms without allocating activations.
inline std::vector<StageShape> probe_encoder_shapes(const ArchitectureSpec& spec) {
    spec.validate();
    std::vector<StageShape> rows;
    std::vector<int64_t> sp = spec.patch;
    auto with_ch = [](int64_t c, const std::vector<int64_t>& s) {
        std::vector<int64_t> r{c};
        r.insert(r.end(), s.begin(), s.end());
        return r;
    };
    rows.push_back({"input", with_ch(1, sp)});
    rows.push_back({"conv1", with_ch(spec.stages[0].channels, sp)});
    for (int l = 1; l < spec.levels(); ++l) {
        for (int a = 0; a < spec.rank; ++a) sp[a] /= spec.stages[l].down_stride[a];
        rows.push_back({"down" + std::to_string(l), with_ch(spec.stages[l].channels, sp)});
        if (!spec.stages[l].conv_kernel.empty())
            rows.push_back({"conv" + std::to_string(l + 1), with_ch(spec.stages[l].channels, sp)});
    }
    return rows;
}

/// Decoder mirror of the probe: transposed-conv and conv-block outputs from
/// the bottleneck up, ending at the full-resolution segmentation output.
inline std::vector<StageShape> probe_decoder_shapes(const ArchitectureSpec& spec) {
    spec.validate();
    std::vector<StageShape> rows;
    const int L = spec.levels();
    std::vector<int64_t> sp = spec.patch;
    std::vector<std::vector<int64_t>> level_sp(static_cast<size_t>(L));
    level_sp[0] = sp;
    for (int l = 1; l < L; ++l) {
        for (int a = 0; a < spec.rank; ++a) sp[a] /= spec.stages[l].down_stride[a];
        level_sp[static_cast<size_t>(l)] = sp;
    }
    auto with_ch = [](int64_t c, const std::vector<int64_t>& s) {
        std::vector<int64_t> r{c};
        r.insert(r.end(), s.begin(), s.end());
        return r;
    };
    int up_id = 1;
    for (int l = L - 1; l >= 1; --l, ++up_id) {
        rows.push_back({"up" + std::to_string(l), with_ch(spec.stages[l - 1].channels,
                                                          level_sp[static_cast<size_t>(l - 1)])});
        if (!spec.stages[l - 1].conv_kernel.empty())
            rows.push_back({"dec_conv" + std::to_string(l - 1),
                            with_ch(spec.stages[l - 1].channels, level_sp[static_cast<size_t>(l - 1)])});
    }
    rows.push_back({"output", with_ch(1, level_sp[0])});
    return rows;
}

template <typename T>
struct EncoderPass {
    std::vector<Tensor<T>> outputs;                  // one per level
    std::vector<nn::ConvBlockCache<T>> block_caches; // parallel to blocks
    std::vector<nn::ConvCache<T>> down_caches;       // levels-1 entries
};

/// Contracting path: conv block at level 0, then (down conv, conv block) per
/// level; the deepest level may be a bare strided conv (the bottleneck).
template <typename T>
struct Encoder {
    ArchitectureSpec spec;
    std::vector<nn::ConvBlock<T>> blocks;
    std::vector<int> block_index;  // per level, -1 when the level has no conv block
    std::vector<nn::Conv<T>> downs;

    void build(const ArchitectureSpec& s, int64_t in_channels) {
        spec = s;
        blocks.clear();
        downs.clear();
        block_index.assign(static_cast<size_t>(s.levels()), -1);
        int64_t prev_ch = in_channels;
        for (int l = 0; l < s.levels(); ++l) {
            const auto& st = s.stages[static_cast<size_t>(l)];
            if (l > 0) {
                downs.emplace_back(prev_ch, st.channels, st.down_stride, st.down_stride,
                                   std::vector<int64_t>(st.down_stride.size(), 0));
                prev_ch = st.channels;
            }
            if (!st.conv_kernel.empty()) {
                block_index[static_cast<size_t>(l)] = static_cast<int>(blocks.size());
                blocks.emplace_back(prev_ch, st.channels, st.conv_kernel);
                prev_ch = st.channels;
            }
        }
    }

    void init(Rng& rng) {
        for (auto& b : blocks) b.init(rng);
        for (auto& d : downs) d.init(rng);
    }

    /// Runs one sample [in_ch, spatial...]; returns the deepest output and
    /// fills per-level outputs when a pass is given.
    Tensor<T> forward(const Tensor<T>& x, EncoderPass<T>* pass) const {
        const int L = spec.levels();
        if (pass) {
            pass->outputs.resize(static_cast<size_t>(L));
            pass->block_caches.resize(blocks.size());
            pass->down_caches.resize(downs.size());
        }
        Tensor<T> cur = x;
        for (int l = 0; l < L; ++l) {
            if (l > 0)
                cur = downs[static_cast<size_t>(l - 1)].forward(
                    cur, pass ? &pass->down_caches[static_cast<size_t>(l - 1)] : nullptr);
            const int bi = block_index[static_cast<size_t>(l)];
            if (bi >= 0)
                cur = blocks[static_cast<size_t>(bi)].forward(
                    cur, pass ? &pass->block_caches[static_cast<size_t>(bi)] : nullptr);
            if (pass) pass->outputs[static_cast<size_t>(l)] = cur;
        }
        return cur;
    }

    /// Backpropagates gradients arriving at any subset of level outputs
    /// (empty tensors mean no gradient). Parameter gradients accumulate.
    void backward(std::vector<Tensor<T>> d_outputs, const EncoderPass<T>& pass) {
        const int L = spec.levels();
        Tensor<T> g = std::move(d_outputs[static_cast<size_t>(L - 1)]);
        if (g.numel() == 0) g = zeros_like(pass.outputs[static_cast<size_t>(L - 1)]);
        for (int l = L - 1; l >= 1; --l) {
            const int bi = block_index[static_cast<size_t>(l)];
            if (bi >= 0)
                g = blocks[static_cast<size_t>(bi)].backward(g, pass.block_caches[static_cast<size_t>(bi)]);
            g = downs[static_cast<size_t>(l - 1)].backward(g, pass.down_caches[static_cast<size_t>(l - 1)]);
            Tensor<T>& extra = d_outputs[static_cast<size_t>(l - 1)];
            if (extra.numel() > 0)
                for (int64_t i = 0; i < g.numel(); ++i) g[i] += extra[i];
        }
        const int b0 = block_index[0];
        if (b0 >= 0) blocks[static_cast<size_t>(b0)].backward(g, pass.block_caches[static_cast<size_t>(b0)]);
    }

    int64_t flops() const {
        int64_t total = 0;
        std::vector<int64_t> shape{1};
        shape.insert(shape.end(), spec.patch.begin(), spec.patch.end());
        for (int l = 0; l < spec.levels(); ++l) {
            if (l > 0) {
                total += downs[static_cast<size_t>(l - 1)].flops(shape);
                shape = downs[static_cast<size_t>(l - 1)].out_shape(shape);
            }
            const int bi = block_index[static_cast<size_t>(l)];
            if (bi >= 0) {
                total += blocks[static_cast<size_t>(bi)].flops(shape);
                shape = blocks[static_cast<size_t>(bi)].out_shape(shape);
            }
        }
        return total;
    }

    void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
        for (size_t l = 0; l < block_index.size(); ++l) {
            if (l > 0) downs[l - 1].visit(prefix + ".down" + std::to_string(l), fn);
            const int bi = block_index[l];
            if (bi >= 0)
                blocks[static_cast<size_t>(bi)].visit(prefix + ".conv" + std::to_string(l + 1), fn);
        }
    }
};

template <typename T>
struct DecoderPass {
    nn::ConvCache<T> fuse_cache;
    std::vector<nn::TConvCache<T>> up_caches;
    std::vector<nn::ConvBlockCache<T>> block_caches;
    std::vector<nn::ConvCache<T>> head_caches;
    std::vector<nn::SigmoidCache<T>> sig_caches;
};

template <typename T>
struct DecoderGrads {
    Tensor<T> d_bottleneck_concat;
    std::vector<Tensor<T>> d_skips;  // per level 0..L-2
};

/// Expanding path: fuses the concatenated bottlenecks, then per level a
/// transposed conv, concatenation with the target-encoder skip, and a conv
/// block. Sigmoid heads provide multi-scale outputs, full resolution first.
template <typename T>
struct Decoder {
    ArchitectureSpec spec;
    nn::Conv<T> fuse;                          // 1x1(x1): 2*C_bot -> C_bot
    std::vector<nn::TransposedConv<T>> ups;    // decode order, deepest first
    std::vector<nn::ConvBlock<T>> blocks;      // decode order
    std::vector<nn::Conv<T>> heads;            // per supervised level, full res first
    nn::Sigmoid<T> sigmoid;

    void build(const ArchitectureSpec& s) {
        spec = s;
        const int L = s.levels();
        const int64_t cb = s.bottleneck_channels();
        std::vector<int64_t> ones(static_cast<size_t>(s.rank), 1);
        std::vector<int64_t> zeros(static_cast<size_t>(s.rank), 0);
        fuse = nn::Conv<T>(2 * cb, cb, ones, ones, zeros);
        ups.clear();
        blocks.clear();
        heads.clear();
        for (int l = L - 1; l >= 1; --l) {
            const auto& st = s.stages[static_cast<size_t>(l)];
            const auto& prev = s.stages[static_cast<size_t>(l - 1)];
            ups.emplace_back(st.channels, prev.channels, st.down_stride, st.down_stride);
            blocks.emplace_back(2 * prev.channels, prev.channels,
                                prev.conv_kernel.empty() ? std::vector<int64_t>(static_cast<size_t>(s.rank), 3)
                                                         : prev.conv_kernel);
        }
        for (int h = 0; h < s.ds_heads; ++h)
            heads.emplace_back(s.stages[static_cast<size_t>(h)].channels, 1, ones, ones, zeros);
    }

    void init(Rng& rng) {
        fuse.init(rng);
        for (auto& u : ups) u.init(rng);
        for (auto& b : blocks) b.init(rng);
        for (auto& h : heads) h.init(rng);
    }

    /// `bottleneck_concat` is [2*C_bot, sp]; `skips` are target-encoder
    /// outputs per level 0..L-2. Returns sigmoid outputs per supervised
    /// scale, full resolution first.
    std::vector<Tensor<T>> forward(const Tensor<T>& bottleneck_concat,
                                   const std::vector<Tensor<T>>& skips, DecoderPass<T>* pass) const {
        const int L = spec.levels();
        if (pass) {
            pass->up_caches.resize(ups.size());
            pass->block_caches.resize(blocks.size());
            pass->head_caches.resize(heads.size());
            pass->sig_caches.resize(heads.size());
        }
        Tensor<T> cur = fuse.forward(bottleneck_concat, pass ? &pass->fuse_cache : nullptr);
        std::vector<Tensor<T>> features(static_cast<size_t>(L - 1));
        for (size_t j = 0; j < ups.size(); ++j) {
            const int level = L - 2 - static_cast<int>(j);
            Tensor<T> u = ups[j].forward(cur, pass ? &pass->up_caches[j] : nullptr);
            Tensor<T> cat = nn::concat_channels(u, skips[static_cast<size_t>(level)]);
            cur = blocks[j].forward(cat, pass ? &pass->block_caches[j] : nullptr);
            features[static_cast<size_t>(level)] = cur;
        }
        std::vector<Tensor<T>> preds;
        preds.reserve(heads.size());
        for (size_t h = 0; h < heads.size(); ++h) {
            Tensor<T> logits = heads[h].forward(features[h], pass ? &pass->head_caches[h] : nullptr);
            preds.push_back(sigmoid.forward(logits, pass ? &pass->sig_caches[h] : nullptr));
        }
        return preds;
    }

    DecoderGrads<T> backward(const std::vector<Tensor<T>>& d_preds, const DecoderPass<T>& pass,
                             const std::vector<Tensor<T>>& skips) {
        const int L = spec.levels();
        std::vector<Tensor<T>> gf(static_cast<size_t>(L - 1));
        for (size_t h = 0; h < heads.size(); ++h) {
            Tensor<T> g = sigmoid.backward(d_preds[h], pass.sig_caches[h]);
            g = heads[h].backward(g, pass.head_caches[h]);
            if (gf[h].numel() == 0) gf[h] = std::move(g);
            else
                for (int64_t i = 0; i < g.numel(); ++i) gf[h][i] += g[i];
        }

        DecoderGrads<T> out;
        out.d_skips.resize(static_cast<size_t>(L - 1));
        Tensor<T> gcur = std::move(gf[0]);
        if (gcur.numel() == 0 && !blocks.empty())
            throw ConfigError("decoder backward: missing full-resolution gradient");
        for (int j = static_cast<int>(ups.size()) - 1; j >= 0; --j) {
            const int level = L - 2 - j;
            Tensor<T> gcat = blocks[static_cast<size_t>(j)].backward(gcur, pass.block_caches[static_cast<size_t>(j)]);
            auto [gu, gskip] = nn::split_channels(gcat, gcat.shape[0] - skips[static_cast<size_t>(level)].shape[0]);
            out.d_skips[static_cast<size_t>(level)] = std::move(gskip);
            gcur = ups[static_cast<size_t>(j)].backward(gu, pass.up_caches[static_cast<size_t>(j)]);
            if (j > 0) {
                Tensor<T>& extra = gf[static_cast<size_t>(level + 1)];
                if (extra.numel() > 0)
                    for (int64_t i = 0; i < gcur.numel(); ++i) gcur[i] += extra[i];
            }
        }
        out.d_bottleneck_concat = fuse.backward(gcur, pass.fuse_cache);
        return out;
    }

    int64_t flops() const {
        int64_t total = 0;
        const int L = spec.levels();
        std::vector<std::vector<int64_t>> level_sp(static_cast<size_t>(L));
        std::vector<int64_t> sp = spec.patch;
        level_sp[0] = sp;
        for (int l = 1; l < L; ++l) {
            for (int a = 0; a < spec.rank; ++a) sp[a] /= spec.stages[static_cast<size_t>(l)].down_stride[a];
            level_sp[static_cast<size_t>(l)] = sp;
        }
        auto with_ch = [](int64_t c, const std::vector<int64_t>& s) {
            std::vector<int64_t> r{c};
            r.insert(r.end(), s.begin(), s.end());
            return r;
        };
        total += fuse.flops(with_ch(2 * spec.bottleneck_channels(), level_sp[static_cast<size_t>(L - 1)]));
        for (size_t j = 0; j < ups.size(); ++j) {
            const int l = L - 1 - static_cast<int>(j);
            total += ups[j].flops(with_ch(spec.stages[static_cast<size_t>(l)].channels,
                                          level_sp[static_cast<size_t>(l)]));
            total += blocks[j].flops(with_ch(2 * spec.stages[static_cast<size_t>(l - 1)].channels,
                                             level_sp[static_cast<size_t>(l - 1)]));
        }
        for (size_t h = 0; h < heads.size(); ++h)
            total += heads[h].flops(with_ch(spec.stages[h].channels, level_sp[h]));
        return total;
    }

    void visit(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
        fuse.visit(prefix + ".fuse", fn);
        for (size_t j = 0; j < ups.size(); ++j)
            ups[j].visit(prefix + ".up" + std::to_string(spec.levels() - 1 - static_cast<int>(j)), fn);
        for (size_t j = 0; j < blocks.size(); ++j)
            blocks[j].visit(prefix + ".conv" + std::to_string(spec.levels() - 2 - static_cast<int>(j)), fn);
        for (size_t h = 0; h < heads.size(); ++h)
            heads[h].visit(prefix + ".head" + std::to_string(h), fn);
    }
};

/// Result of a target-stream forward: multi-scale predictions plus both
/// encoders' stage outputs for relation computation and routing.
template <typename T>
struct TargetPass {
    std::vector<Tensor<T>> preds;  // per supervised scale
    EncoderPass<T> general;
    EncoderPass<T> target;
    DecoderPass<T> decoder;
};

template <typename T>
struct DualEncoderNet {
    ArchitectureSpec spec;
    Encoder<T> general_encoder;
    Encoder<T> target_encoder;
    Decoder<T> decoder;

    /// Deterministic construction: same spec and seed give identical weights.
    static DualEncoderNet build(const ArchitectureSpec& spec, uint64_t seed) {
        spec.validate();
        DualEncoderNet net;
        net.spec = spec;
        net.general_encoder.build(spec, 1);
        net.target_encoder.build(spec, 1);
        net.decoder.build(spec);
        Rng rng(derive_seed(seed, 0x6e6574 /* "net" */));
        net.general_encoder.init(rng);
        net.target_encoder.init(rng);
        net.decoder.init(rng);
        return net;
    }

    /// Runs both encoders on a target-stream sample and decodes from the
    /// concatenated bottlenecks plus target-encoder skips.
    TargetPass<T> forward_target(const Tensor<T>& x) const {
        TargetPass<T> pass;
        Tensor<T> fg = general_encoder.forward(x, &pass.general);
        Tensor<T> ft = target_encoder.forward(x, &pass.target);
        Tensor<T> cat = nn::concat_channels(fg, ft);
        std::vector<Tensor<T>> skips(pass.target.outputs.begin(),
                                     pass.target.outputs.end() - 1);
        pass.preds = decoder.forward(cat, skips, &pass.decoder);
        return pass;
    }

    /// Inference-only variant (no caches kept).
    std::vector<Tensor<T>> predict(const Tensor<T>& x) const {
        EncoderPass<T> pg, pt;
        Tensor<T> fg = general_encoder.forward(x, &pg);
        Tensor<T> ft = target_encoder.forward(x, &pt);
        Tensor<T> cat = nn::concat_channels(fg, ft);
        std::vector<Tensor<T>> skips(pt.outputs.begin(), pt.outputs.end() - 1);
        return decoder.forward(cat, skips, nullptr);
    }

    /// General-encoder-only pass for the auxiliary stream; no decoder work.
    Tensor<T> forward_general(const Tensor<T>& x, EncoderPass<T>* pass) const {
        return general_encoder.forward(x, pass);
    }

    std::vector<nn::ParamRef<T>> params_general() { return collect("general_encoder", general_encoder); }
    std::vector<nn::ParamRef<T>> params_target() { return collect("target_encoder", target_encoder); }
    std::vector<nn::ParamRef<T>> params_decoder() {
        std::vector<nn::ParamRef<T>> out;
        decoder.visit("decoder", [&](const std::string& n, Tensor<T>& v, Tensor<T>& g) {
            out.push_back({n, &v, &g});
        });
        return out;
    }

    void zero_grads() {
        for (auto group : {params_general(), params_target(), params_decoder()})
            for (auto& p : group) p.grad->zero();
    }

    int64_t flops_forward_target() const {
        return general_encoder.flops() + target_encoder.flops() + decoder.flops();
    }
    int64_t flops_forward_general() const { return general_encoder.flops(); }

private:
    std::vector<nn::ParamRef<T>> collect(const std::string& prefix, Encoder<T>& enc) {
        std::vector<nn::ParamRef<T>> out;
        enc.visit(prefix, [&](const std::string& n, Tensor<T>& v, Tensor<T>& g) {
            out.push_back({n, &v, &g});
        });
        return out;
    }
};

/// Copies parameter values between same-shaped groups (e.g. to start both
/// encoders from identical weights in tests).
template <typename T>
void copy_params(const std::vector<nn::ParamRef<T>>& from, std::vector<nn::ParamRef<T>> to) {
    if (from.size() != to.size()) throw ConfigError("copy_params: group size mismatch");
    for (size_t i = 0; i < from.size(); ++i) {
        if (from[i].value->shape != to[i].value->shape)
            throw ConfigError("copy_params: shape mismatch at " + from[i].name);
        to[i].value->data = from[i].value->data;
    }
}

}  // namespace relcollab
