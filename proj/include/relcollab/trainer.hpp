#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/rng.hpp"
#include "relcollab/data/preprocess.hpp"
#include "relcollab/data/sample.hpp"
#include "relcollab/data/sampler.hpp"
#include "relcollab/io/tensor_file.hpp"
#include "relcollab/losses.hpp"
#include "relcollab/metrics.hpp"
#include "relcollab/network.hpp"
#include "relcollab/nn/optimizer.hpp"
#include "relcollab/relation.hpp"

namespace relcollab {

/// Training loop with asymmetric gradient routing: the general encoder is
/// driven only by the general relation consistency loss, the target encoder
/// by segmentation plus target relation consistency, and the shared decoder
/// by segmentation alone. Each parameter group owns its optimizer so
/// momentum never mixes gradient sources.

enum class TrainMode { baseline, rcg, rct, full, semi };

inline const char* to_string(TrainMode m) {
    switch (m) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::rcg: return "rcg";
        case TrainMode::rct: return "rct";
        case TrainMode::full: return "full";
        case TrainMode::semi: return "semi";
    }
    return "?";
}

inline TrainMode train_mode_from(const std::string& s) {
    if (s == "baseline") return TrainMode::baseline;
    if (s == "rcg") return TrainMode::rcg;
    if (s == "rct") return TrainMode::rct;
    if (s == "full") return TrainMode::full;
    if (s == "semi") return TrainMode::semi;
    throw ConfigError("unknown train mode: " + s);
}

struct TrainConfig {
    ArchitectureSpec arch = ArchitectureSpec::tiny();
    TrainMode mode = TrainMode::full;
    int64_t max_steps = 200;
    int batch_size = 2;
    double lr = 0.01;
    double momentum = 0.99;
    nn::LrDecay lr_decay = nn::LrDecay::poly;
    double poly_power = 0.9;
    double lambda_g_base = 0.1;
    double lambda_t_base = 0.1;
    RampForm ramp_form = RampForm::gaussian;
    double rc_clamp = 0.0;  // 0 disables the optional repulsion clamp
    bool per_sample_gram = false;
    int labeled_ratio = 1;    // semi mode: labeled parts per batch
    int unlabeled_ratio = 1;  // semi mode: unlabeled parts per batch
    uint64_t seed = 7;
    int64_t eval_every = 0;        // 0 disables periodic eval
    int64_t checkpoint_every = 0;  // 0: final checkpoint only
    int64_t relation_every = 0;    // 0: first/last step only
    int early_stop_patience = 0;   // evals without DSC improvement; 0 disables
    double tau_mm = 3.0;
    data::PreprocessConfig preprocess;

    bool semi_supervised() const { return mode == TrainMode::semi; }

    RampSchedule ramp_g() const { return {lambda_g_base, max_steps, ramp_form}; }
    RampSchedule ramp_t() const { return {lambda_t_base, max_steps, ramp_form}; }

    double lambda_g_at(int64_t step) const {
        if (mode == TrainMode::baseline || mode == TrainMode::rct) return 0.0;
        return ramp_lambda(step, ramp_g());
    }
    double lambda_t_at(int64_t step) const {
        if (mode == TrainMode::baseline || mode == TrainMode::rcg) return 0.0;
        return ramp_lambda(step, ramp_t());
    }

    void validate() const {
        arch.validate();
        if (max_steps < 1) throw ConfigError("train: max_steps must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (!(lr > 0)) throw ConfigError("train: lr must be positive");
        if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
        if (lambda_g_base < 0 || lambda_t_base < 0) throw ConfigError("train: negative lambda base");
        if (labeled_ratio < 0 || unlabeled_ratio < 0 || labeled_ratio + unlabeled_ratio == 0)
            throw ConfigError("train: invalid labeled/unlabeled ratio");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"arch", arch.to_json()},
            {"mode", to_string(mode)},
            {"max_steps", max_steps},
            {"batch_size", batch_size},
            {"lr", lr},
            {"momentum", momentum},
            {"lr_decay", lr_decay == nn::LrDecay::poly ? "poly" : "constant"},
            {"poly_power", poly_power},
            {"lambda_g_base", lambda_g_base},
            {"lambda_t_base", lambda_t_base},
            {"ramp_form", ramp_form == RampForm::gaussian ? "gaussian" : "literal"},
            {"rc_clamp", rc_clamp},
            {"per_sample_gram", per_sample_gram},
            {"labeled_ratio", labeled_ratio},
            {"unlabeled_ratio", unlabeled_ratio},
            {"seed", seed},
            {"eval_every", eval_every},
            {"checkpoint_every", checkpoint_every},
            {"relation_every", relation_every},
            {"early_stop_patience", early_stop_patience},
            {"tau_mm", tau_mm},
            {"preprocess",
             {{"window", preprocess.window},
              {"mode", preprocess.mode == data::NormMode::minmax ? "minmax" : "zscore"}}},
        };
    }

    static TrainConfig from_json(const nlohmann::json& js) {
        TrainConfig c;
        if (js.contains("arch")) c.arch = ArchitectureSpec::from_json(js.at("arch"));
        if (js.contains("mode")) c.mode = train_mode_from(js.at("mode").get<std::string>());
        c.max_steps = js.value("max_steps", c.max_steps);
        c.batch_size = js.value("batch_size", c.batch_size);
        c.lr = js.value("lr", c.lr);
        c.momentum = js.value("momentum", c.momentum);
        if (js.contains("lr_decay"))
            c.lr_decay = js.at("lr_decay").get<std::string>() == "poly" ? nn::LrDecay::poly
                                                                        : nn::LrDecay::constant;
        c.poly_power = js.value("poly_power", c.poly_power);
        c.lambda_g_base = js.value("lambda_g_base", c.lambda_g_base);
        c.lambda_t_base = js.value("lambda_t_base", c.lambda_t_base);
        if (js.contains("ramp_form"))
            c.ramp_form = js.at("ramp_form").get<std::string>() == "gaussian" ? RampForm::gaussian
                                                                              : RampForm::literal;
        c.rc_clamp = js.value("rc_clamp", c.rc_clamp);
        c.per_sample_gram = js.value("per_sample_gram", c.per_sample_gram);
        c.labeled_ratio = js.value("labeled_ratio", c.labeled_ratio);
        c.unlabeled_ratio = js.value("unlabeled_ratio", c.unlabeled_ratio);
        c.seed = js.value("seed", c.seed);
        c.eval_every = js.value("eval_every", c.eval_every);
        c.checkpoint_every = js.value("checkpoint_every", c.checkpoint_every);
        c.relation_every = js.value("relation_every", c.relation_every);
        c.early_stop_patience = js.value("early_stop_patience", c.early_stop_patience);
        c.tau_mm = js.value("tau_mm", c.tau_mm);
        if (js.contains("preprocess")) {
            const auto& jp = js.at("preprocess");
            c.preprocess.window = jp.value("window", c.preprocess.window);
            if (jp.contains("mode"))
                c.preprocess.mode = jp.at("mode").get<std::string>() == "minmax"
                                        ? data::NormMode::minmax
                                        : data::NormMode::zscore;
        }
        return c;
    }
};

struct TrainState {
    TrainConfig cfg;
    DualEncoderNet<float> net;
    nn::SgdMomentum<float> opt_general, opt_target, opt_decoder;
    int64_t step = 0;
    Rng rng;
    std::vector<LossBundle> history;
};

inline TrainState make_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.net = DualEncoderNet<float>::build(cfg.arch, cfg.seed);
    st.opt_general = nn::SgdMomentum<float>(cfg.lr, cfg.momentum, cfg.max_steps, cfg.lr_decay,
                                            cfg.poly_power);
    st.opt_target = nn::SgdMomentum<float>(cfg.lr, cfg.momentum, cfg.max_steps, cfg.lr_decay,
                                           cfg.poly_power);
    st.opt_decoder = nn::SgdMomentum<float>(cfg.lr, cfg.momentum, cfg.max_steps, cfg.lr_decay,
                                            cfg.poly_power);
    st.opt_general.attach(st.net.params_general());
    st.opt_target.attach(st.net.params_target());
    st.opt_decoder.attach(st.net.params_decoder());
    st.rng = Rng(derive_seed(cfg.seed, 0x747261696e /* "train" */));
    return st;
}

/// Audit switches: force a loss term to zero (its backward is skipped) to
/// observe which parameter groups respond.
struct StepOptions {
    bool zero_seg = false;
    bool zero_rc_general = false;
    bool zero_rc_target = false;
};

/// Relation matrices produced within a step, for serialization/inspection.
struct StepArtifacts {
    Tensor<float> r_general_aux;     // R of general encoder on the auxiliary batch
    Tensor<float> r_general_target;  // R of general encoder on the target batch
    Tensor<float> r_target_target;   // R of target encoder on the target batch
};

namespace detail {

template <typename T>
Tensor<T> stack_features(const std::vector<Tensor<T>>& per_sample) {
    std::vector<int64_t> shape = per_sample.front().shape;
    shape.insert(shape.begin(), static_cast<int64_t>(per_sample.size()));
    Tensor<T> out(shape);
    const int64_t per = per_sample.front().numel();
    for (size_t b = 0; b < per_sample.size(); ++b)
        std::copy(per_sample[b].data.begin(), per_sample[b].data.end(),
                  out.data.begin() + static_cast<int64_t>(b) * per);
    return out;
}

template <typename T>
Tensor<T> batch_slice(const Tensor<T>& batch, int64_t b) {
    std::vector<int64_t> shape(batch.shape.begin() + 1, batch.shape.end());
    Tensor<T> out(shape);
    const int64_t per = out.numel();
    std::copy(batch.data.begin() + b * per, batch.data.begin() + (b + 1) * per, out.data.begin());
    return out;
}

inline Tensor<float> mask_to_float(const Tensor<uint8_t>& mask) {
    std::vector<int64_t> shape{1};
    shape.insert(shape.end(), mask.shape.begin(), mask.shape.end());
    Tensor<float> out(shape);
    for (int64_t i = 0; i < mask.numel(); ++i) out[i] = static_cast<float>(mask[i]);
    return out;
}

}  // namespace detail

/// One paired-batch update. Computes the three relation matrices and the
/// segmentation output, assembles the losses, and applies exactly this
/// routing: general encoder <- general relation consistency only; target
/// encoder <- segmentation + target relation consistency; decoder <-
/// segmentation only.
inline LossBundle train_step(TrainState& state, const data::BatchPair& pair,
                             const StepOptions& opts = {}, StepArtifacts* artifacts = nullptr) {
    const TrainConfig& cfg = state.cfg;
    if (state.step >= cfg.max_steps)
        throw StepError(state.step, "step budget exhausted (max_steps reached)");
    if (pair.target.empty() || pair.target.size() != pair.auxiliary.size())
        throw StepError(state.step, "batch pair sizes must match and be non-empty");

    const int64_t B = static_cast<int64_t>(pair.target.size());
    const int relation_stage = cfg.arch.resolved_relation_stage();
    const int L = cfg.arch.levels();

    LossBundle bundle;
    bundle.lambda_g = cfg.lambda_g_at(state.step);
    bundle.lambda_t = cfg.lambda_t_at(state.step);

    state.net.zero_grads();

    // ---- forward: target stream through both encoders + decoder
    std::vector<TargetPass<float>> tpasses;
    std::vector<int> labeled;
    tpasses.reserve(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        const data::Sample& s = pair.target[static_cast<size_t>(b)];
        if (s.image.shape != cfg.arch.patch)
            throw StepError(state.step, "target sample " + s.id + " does not match patch shape");
        const auto& lbl = s.supervised_label();
        if (lbl) labeled.push_back(static_cast<int>(b));
        else if (!cfg.semi_supervised())
            throw StepError(state.step, "sample " + s.id + " has no label in supervised mode");
        std::vector<int64_t> xshape{1};
        xshape.insert(xshape.end(), s.image.shape.begin(), s.image.shape.end());
        tpasses.push_back(state.net.forward_target(s.image.reshaped(xshape)));
    }

    // ---- forward: auxiliary stream through the general encoder only
    std::vector<EncoderPass<float>> apasses(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        const data::Sample& s = pair.auxiliary[static_cast<size_t>(b)];
        if (s.image.shape != cfg.arch.patch)
            throw StepError(state.step, "auxiliary sample " + s.id + " does not match patch shape");
        std::vector<int64_t> xshape{1};
        xshape.insert(xshape.end(), s.image.shape.begin(), s.image.shape.end());
        state.net.forward_general(s.image.reshaped(xshape), &apasses[static_cast<size_t>(b)]);
    }

    // ---- relation matrices (computed over the full batches)
    auto gather_stage = [&](auto select) {
        std::vector<Tensor<float>> feats;
        feats.reserve(static_cast<size_t>(B));
        for (int64_t b = 0; b < B; ++b) feats.push_back(select(b));
        return detail::stack_features(feats);
    };
    Tensor<float> feat_g_tgt = gather_stage([&](int64_t b) {
        return tpasses[static_cast<size_t>(b)].general.outputs[static_cast<size_t>(relation_stage)];
    });
    Tensor<float> feat_t_tgt = gather_stage([&](int64_t b) {
        return tpasses[static_cast<size_t>(b)].target.outputs[static_cast<size_t>(relation_stage)];
    });
    Tensor<float> feat_g_aux = gather_stage([&](int64_t b) {
        return apasses[static_cast<size_t>(b)].outputs[static_cast<size_t>(relation_stage)];
    });

    RelationCache<float> cache_g_tgt, cache_t_tgt, cache_g_aux;
    PerSampleRelationCache<float> ps_g_tgt, ps_t_tgt, ps_g_aux;
    RelationMatrix<float> r_g_tgt, r_t_tgt, r_g_aux;
    if (cfg.per_sample_gram) {
        r_g_tgt = compute_relation_per_sample(feat_g_tgt, &ps_g_tgt);
        r_t_tgt = compute_relation_per_sample(feat_t_tgt, &ps_t_tgt);
        r_g_aux = compute_relation_per_sample(feat_g_aux, &ps_g_aux);
    } else {
        r_g_tgt = compute_relation(feat_g_tgt, &cache_g_tgt);
        r_t_tgt = compute_relation(feat_t_tgt, &cache_t_tgt);
        r_g_aux = compute_relation(feat_g_aux, &cache_g_aux);
    }
    if (artifacts) {
        artifacts->r_general_aux = r_g_aux.values;
        artifacts->r_general_target = r_g_tgt.values;
        artifacts->r_target_target = r_t_tgt.values;
    }

    // ---- losses
    std::vector<Tensor<float>> masks(static_cast<size_t>(B));
    if (!opts.zero_seg && !labeled.empty()) {
        double seg_acc = 0;
        for (int b : labeled) {
            masks[static_cast<size_t>(b)] =
                detail::mask_to_float(*pair.target[static_cast<size_t>(b)].supervised_label());
            seg_acc += seg_loss(tpasses[static_cast<size_t>(b)].preds, masks[static_cast<size_t>(b)]);
        }
        bundle.seg = seg_acc / static_cast<double>(labeled.size());
    }

    const float lam_g = static_cast<float>(opts.zero_rc_general ? 0.0 : bundle.lambda_g);
    const float lam_t = static_cast<float>(opts.zero_rc_target ? 0.0 : bundle.lambda_t);
    bundle.rc_general = rc_general_loss(r_g_aux.values, r_g_tgt.values, lam_g);
    bundle.rc_target = rc_target_loss(r_g_tgt.values, r_t_tgt.values, lam_t, cfg.rc_clamp);

    if (!std::isfinite(bundle.seg)) throw StepError(state.step, "non-finite segmentation loss");
    if (!std::isfinite(bundle.rc_general))
        throw StepError(state.step, "non-finite general relation consistency loss");
    if (!std::isfinite(bundle.rc_target))
        throw StepError(state.step, "non-finite target relation consistency loss");

    // ---- backward: segmentation into decoder and target encoder.
    // The general half of the concatenated bottleneck gradient is dropped:
    // segmentation never drives the general encoder.
    std::vector<std::vector<Tensor<float>>> d_target_outputs(
        static_cast<size_t>(B), std::vector<Tensor<float>>(static_cast<size_t>(L)));
    if (!opts.zero_seg && !labeled.empty()) {
        const float upstream = 1.0f / static_cast<float>(labeled.size());
        for (int b : labeled) {
            TargetPass<float>& tp = tpasses[static_cast<size_t>(b)];
            auto d_preds = seg_loss_backward(tp.preds, masks[static_cast<size_t>(b)], upstream);
            std::vector<Tensor<float>> skips(tp.target.outputs.begin(), tp.target.outputs.end() - 1);
            DecoderGrads<float> dg = state.net.decoder.backward(d_preds, tp.decoder, skips);
            auto [d_fg, d_ft] =
                nn::split_channels(dg.d_bottleneck_concat, cfg.arch.bottleneck_channels());
            (void)d_fg;  // stop-gradient into the general encoder
            auto& outs = d_target_outputs[static_cast<size_t>(b)];
            outs[static_cast<size_t>(L - 1)] = std::move(d_ft);
            for (int l = 0; l < L - 1; ++l) outs[static_cast<size_t>(l)] = std::move(dg.d_skips[static_cast<size_t>(l)]);
        }
    }

    // ---- backward: general relation consistency into the general encoder
    // through both its relation matrices.
    std::vector<std::vector<Tensor<float>>> d_general_tgt_outputs(
        static_cast<size_t>(B), std::vector<Tensor<float>>(static_cast<size_t>(L)));
    std::vector<std::vector<Tensor<float>>> d_general_aux_outputs(
        static_cast<size_t>(B), std::vector<Tensor<float>>(static_cast<size_t>(L)));
    if (lam_g > 0) {
        auto [d_r_aux, d_r_tgt] = rc_general_backward(r_g_aux.values, r_g_tgt.values, lam_g);
        Tensor<float> d_feat_aux =
            cfg.per_sample_gram ? relation_backward_per_sample(d_r_aux, feat_g_aux, ps_g_aux)
                                : relation_backward(d_r_aux, cache_g_aux);
        Tensor<float> d_feat_tgt =
            cfg.per_sample_gram ? relation_backward_per_sample(d_r_tgt, feat_g_tgt, ps_g_tgt)
                                : relation_backward(d_r_tgt, cache_g_tgt);
        for (int64_t b = 0; b < B; ++b) {
            d_general_aux_outputs[static_cast<size_t>(b)][static_cast<size_t>(relation_stage)] =
                detail::batch_slice(d_feat_aux, b);
            d_general_tgt_outputs[static_cast<size_t>(b)][static_cast<size_t>(relation_stage)] =
                detail::batch_slice(d_feat_tgt, b);
        }
    }

    // ---- backward: target relation consistency into the target encoder
    // only; the general matrix is treated as constant here.
    if (lam_t > 0) {
        Tensor<float> d_r_t =
            rc_target_backward(r_g_tgt.values, r_t_tgt.values, lam_t, 1.0f, cfg.rc_clamp);
        Tensor<float> d_feat_t = cfg.per_sample_gram
                                     ? relation_backward_per_sample(d_r_t, feat_t_tgt, ps_t_tgt)
                                     : relation_backward(d_r_t, cache_t_tgt);
        for (int64_t b = 0; b < B; ++b) {
            Tensor<float> slice = detail::batch_slice(d_feat_t, b);
            Tensor<float>& slot =
                d_target_outputs[static_cast<size_t>(b)][static_cast<size_t>(relation_stage)];
            if (slot.numel() == 0) slot = std::move(slice);
            else
                for (int64_t i = 0; i < slot.numel(); ++i) slot[i] += slice[i];
        }
    }

    // ---- run encoder backward passes
    for (int64_t b = 0; b < B; ++b) {
        auto& touts = d_target_outputs[static_cast<size_t>(b)];
        bool any = false;
        for (const auto& t : touts) any = any || t.numel() > 0;
        if (any)
            state.net.target_encoder.backward(std::move(touts), tpasses[static_cast<size_t>(b)].target);
    }
    if (lam_g > 0) {
        for (int64_t b = 0; b < B; ++b) {
            state.net.general_encoder.backward(std::move(d_general_tgt_outputs[static_cast<size_t>(b)]),
                                               tpasses[static_cast<size_t>(b)].general);
            state.net.general_encoder.backward(std::move(d_general_aux_outputs[static_cast<size_t>(b)]),
                                               apasses[static_cast<size_t>(b)]);
        }
    }

    // ---- apply the three group updates
    state.opt_general.step(state.net.params_general(), state.step);
    state.opt_target.step(state.net.params_target(), state.step);
    state.opt_decoder.step(state.net.params_decoder(), state.step);

    ++state.step;
    state.history.push_back(bundle);
    return bundle;
}

/// Semi-supervised step: identical mechanics, but the segmentation loss is
/// averaged over labeled samples only while relation losses cover the whole
/// target batch. A batch with no labeled sample simply has zero
/// segmentation loss.
inline LossBundle semi_step(TrainState& state, const data::BatchPair& pair,
                            const StepOptions& opts = {}, StepArtifacts* artifacts = nullptr) {
    if (!state.cfg.semi_supervised())
        throw ConfigError("semi_step: config is not in semi-supervised mode");
    return train_step(state, pair, opts, artifacts);
}

/// Tiled full-image inference: windows of the patch size with half-patch
/// steps, overlapping probabilities averaged, full-resolution head only.
inline Tensor<float> sliding_window_predict(const DualEncoderNet<float>& net,
                                            const Tensor<float>& image) {
    const auto& patch = net.spec.patch;
    const int rank = net.spec.rank;
    if (image.rank() != rank) throw DataError("predict: image rank mismatch");

    // pad tail when the image is smaller than the patch
    std::vector<int64_t> padded_shape(static_cast<size_t>(rank));
    bool needs_pad = false;
    for (int a = 0; a < rank; ++a) {
        padded_shape[static_cast<size_t>(a)] = std::max(image.shape[static_cast<size_t>(a)], patch[static_cast<size_t>(a)]);
        needs_pad = needs_pad || padded_shape[static_cast<size_t>(a)] != image.shape[static_cast<size_t>(a)];
    }
    Tensor<float> padded = image;
    if (needs_pad) {
        padded = Tensor<float>(padded_shape);
        std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
        do { padded.at(idx) = image.at(idx); } while (next_index(idx, image.shape));
    }

    // tile start positions per axis
    std::vector<std::vector<int64_t>> starts(static_cast<size_t>(rank));
    for (int a = 0; a < rank; ++a) {
        const int64_t dim = padded_shape[static_cast<size_t>(a)];
        const int64_t p = patch[static_cast<size_t>(a)];
        const int64_t step = std::max<int64_t>(1, p / 2);
        for (int64_t pos = 0;; pos += step) {
            if (pos + p >= dim) { starts[static_cast<size_t>(a)].push_back(dim - p); break; }
            starts[static_cast<size_t>(a)].push_back(pos);
        }
    }

    Tensor<double> sum(padded_shape);
    Tensor<double> count(padded_shape);
    std::vector<int64_t> tile_idx(static_cast<size_t>(rank), 0);
    std::vector<int64_t> tiles(static_cast<size_t>(rank));
    for (int a = 0; a < rank; ++a) tiles[static_cast<size_t>(a)] = static_cast<int64_t>(starts[static_cast<size_t>(a)].size());
    do {
        std::vector<int64_t> origin(static_cast<size_t>(rank));
        for (int a = 0; a < rank; ++a)
            origin[static_cast<size_t>(a)] =
                starts[static_cast<size_t>(a)][static_cast<size_t>(tile_idx[static_cast<size_t>(a)])];
        // crop tile
        std::vector<int64_t> tshape{1};
        tshape.insert(tshape.end(), patch.begin(), patch.end());
        Tensor<float> tile(tshape);
        std::vector<int64_t> it(static_cast<size_t>(rank), 0), src(static_cast<size_t>(rank));
        int64_t flat = 0;
        do {
            for (int a = 0; a < rank; ++a) src[static_cast<size_t>(a)] = origin[static_cast<size_t>(a)] + it[static_cast<size_t>(a)];
            tile[flat++] = padded.at(src);
        } while (next_index(it, patch));
        Tensor<float> prob = net.predict(tile)[0];  // [1, patch...]
        std::fill(it.begin(), it.end(), 0);
        flat = 0;
        do {
            for (int a = 0; a < rank; ++a) src[static_cast<size_t>(a)] = origin[static_cast<size_t>(a)] + it[static_cast<size_t>(a)];
            sum.at(src) += prob[flat];
            count.at(src) += 1.0;
            ++flat;
        } while (next_index(it, patch));
    } while (next_index(tile_idx, tiles));

    Tensor<float> out(image.shape);
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    int64_t flat = 0;
    do {
        out[flat++] = static_cast<float>(sum.at(idx) / count.at(idx));
    } while (next_index(idx, image.shape));
    return out;
}

/// Deterministic full-image evaluation of labeled cases (threshold 0.5).
inline metrics::MetricReport evaluate(const DualEncoderNet<float>& net,
                                      const std::vector<const data::Sample*>& cases,
                                      double tau_mm) {
    metrics::MetricReport report;
    for (const data::Sample* s : cases) {
        if (!s->label) throw DataError("evaluate: sample " + s->id + " has no label");
        if (s->spacing.empty()) throw DataError("evaluate: sample " + s->id + " has no spacing");
        Tensor<float> prob = sliding_window_predict(net, s->image);
        report.rows.push_back(metrics::evaluate_case(s->id, *s->label, prob, s->spacing, tau_mm));
    }
    return report;
}

// ---------------------------------------------------------------------------
// checkpointing

namespace detail {

template <typename T>
void save_group(io::TensorFileWriter& w, const std::string& key,
                const std::vector<nn::ParamRef<T>>& params) {
    for (const auto& p : params) w.add(key + "/" + p.name, *p.value);
}

template <typename T>
void load_group(const io::TensorFileReader& r, const std::string& key,
                std::vector<nn::ParamRef<T>> params) {
    for (auto& p : params) {
        Tensor<T> t = r.template get<T>(key + "/" + p.name);
        if (t.shape != p.value->shape)
            throw DataError("checkpoint: shape mismatch for " + p.name);
        p.value->data = std::move(t.data);
    }
}

}  // namespace detail

/// Layout: <dir>/{general_encoder.bin, target_encoder.bin, decoder.bin,
/// optimizer.bin, state.json}. Restores bit-exactly.
inline void save_checkpoint(TrainState& state, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("checkpoint: cannot create " + dir);

    {
        io::TensorFileWriter w(dir + "/general_encoder.bin");
        detail::save_group(w, "general_encoder", state.net.params_general());
        w.finish();
    }
    {
        io::TensorFileWriter w(dir + "/target_encoder.bin");
        detail::save_group(w, "target_encoder", state.net.params_target());
        w.finish();
    }
    {
        io::TensorFileWriter w(dir + "/decoder.bin");
        detail::save_group(w, "decoder", state.net.params_decoder());
        w.finish();
    }
    {
        io::TensorFileWriter w(dir + "/optimizer.bin");
        auto dump = [&](const std::string& key, const nn::SgdMomentum<float>& opt) {
            const auto& vel = opt.velocity();
            for (size_t i = 0; i < vel.size(); ++i) w.add(key + "/v" + std::to_string(i), vel[i]);
        };
        dump("general", state.opt_general);
        dump("target", state.opt_target);
        dump("decoder", state.opt_decoder);
        w.finish();
    }
    const auto rng_state = state.rng.state();
    nlohmann::json js = {
        {"step", state.step},
        {"rng_state", std::vector<uint64_t>(rng_state.begin(), rng_state.end())},
        {"config", state.cfg.to_json()},
    };
    std::ofstream f(dir + "/state.json");
    if (!f) throw DataError("checkpoint: cannot write state.json in " + dir);
    f << js.dump(2) << "\n";
    if (!f.good()) throw DataError("checkpoint: truncated write in " + dir);
}

inline TrainState load_checkpoint(const std::string& dir) {
    std::ifstream f(dir + "/state.json");
    if (!f) throw DataError("checkpoint: missing state.json in " + dir);
    nlohmann::json js;
    f >> js;
    TrainConfig cfg = TrainConfig::from_json(js.at("config"));
    TrainState state = make_train_state(cfg);
    state.step = js.at("step").get<int64_t>();
    auto rs = js.at("rng_state").get<std::vector<uint64_t>>();
    if (rs.size() != 4) throw DataError("checkpoint: malformed rng state");
    state.rng.set_state({rs[0], rs[1], rs[2], rs[3]});

    detail::load_group(io::TensorFileReader(dir + "/general_encoder.bin"), "general_encoder",
                       state.net.params_general());
    detail::load_group(io::TensorFileReader(dir + "/target_encoder.bin"), "target_encoder",
                       state.net.params_target());
    detail::load_group(io::TensorFileReader(dir + "/decoder.bin"), "decoder",
                       state.net.params_decoder());

    io::TensorFileReader opt(dir + "/optimizer.bin");
    auto restore = [&](const std::string& key, nn::SgdMomentum<float>& o) {
        auto& vel = o.velocity();
        for (size_t i = 0; i < vel.size(); ++i)
            vel[i] = opt.get<float>(key + "/v" + std::to_string(i));
    };
    restore("general", state.opt_general);
    restore("target", state.opt_target);
    restore("decoder", state.opt_decoder);
    return state;
}

// ---------------------------------------------------------------------------
// full training run

struct RunPools {
    std::vector<const data::Sample*> target_labeled;
    std::vector<const data::Sample*> target_unlabeled;
    std::vector<const data::Sample*> auxiliary;
    std::vector<const data::Sample*> eval_cases;  // held-out labeled target
};

struct RunResult {
    TrainState state;
    metrics::MetricReport final_report;
    std::string checkpoint_dir;
    int64_t steps_run = 0;
};

inline nlohmann::json summary_json(const metrics::MetricReport& report) {
    const auto s = report.summarize();
    return nlohmann::json{
        {"cases", s.cases},
        {"dsc", {{"mean", s.dsc_mean}, {"std", s.dsc_std}}},
        {"nsd", {{"mean", s.nsd_mean}, {"std", s.nsd_std}}},
        {"sen", {{"mean", s.sen_mean}, {"std", s.sen_std}}},
        {"spec", {{"mean", s.spec_mean}, {"std", s.spec_std}}},
        {"mae", {{"mean", s.mae_mean}, {"std", s.mae_std}}},
    };
}

namespace detail {

inline void dump_relations(const StepArtifacts& art, int64_t step, int stage,
                           const std::string& run_dir) {
    namespace fs = std::filesystem;
    const std::string dir = run_dir + "/relations/step_" + std::to_string(step);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("run: cannot create " + dir);
    auto dump_one = [&](const std::string& name, const Tensor<float>& m) {
        io::TensorFileWriter w(dir + "/" + name + ".bin");
        w.add(name, m);
        w.finish();
        nlohmann::json side = {{"channels", m.shape[0]},
                               {"stage", "level" + std::to_string(stage)},
                               {"step", step}};
        std::ofstream f(dir + "/" + name + ".json");
        f << side.dump(2) << "\n";
    };
    dump_one("r_general_aux", art.r_general_aux);
    dump_one("r_general_target", art.r_general_target);
    dump_one("r_target_target", art.r_target_target);
}

}  // namespace detail

/// Runs the configured number of steps over the given pools, logging loss
/// terms to losses.jsonl and writing checkpoints, relation snapshots and
/// periodic evaluations under run_dir. Stops early only on the optional
/// eval-DSC plateau rule.
inline RunResult run_training(const TrainConfig& cfg, const RunPools& pools,
                              const std::string& run_dir) {
    namespace fs = std::filesystem;
    cfg.validate();
    if (pools.target_labeled.empty() && !cfg.semi_supervised())
        throw DataError("run: no labeled target samples");
    if (pools.auxiliary.empty()) throw DataError("run: no auxiliary samples");

    std::error_code ec;
    fs::create_directories(run_dir + "/checkpoints", ec);
    fs::create_directories(run_dir + "/eval", ec);
    if (!fs::is_directory(run_dir + "/checkpoints"))
        throw DataError("run: cannot create run directory " + run_dir);

    {
        std::ofstream f(run_dir + "/config.json");
        f << cfg.to_json().dump(2) << "\n";
    }

    RunResult result{make_train_state(cfg), {}, "", 0};
    TrainState& state = result.state;

    data::SamplerOptions sopt;
    sopt.patch = cfg.arch.patch;
    sopt.batch_size = cfg.batch_size;
    sopt.semi_supervised = cfg.semi_supervised();
    sopt.labeled_ratio = cfg.labeled_ratio;
    sopt.unlabeled_ratio = cfg.unlabeled_ratio;

    std::ofstream losses(run_dir + "/losses.jsonl");
    if (!losses) throw DataError("run: cannot write losses.jsonl");

    double best_dsc = -1.0;
    int evals_since_best = 0;
    bool stopped_early = false;

    for (int64_t t = 0; t < cfg.max_steps && !stopped_early; ++t) {
        data::BatchPair pair = data::sample_batch_pair(
            pools.target_labeled, pools.target_unlabeled, pools.auxiliary, sopt, state.rng);

        const bool want_relations =
            (cfg.relation_every > 0 && t % cfg.relation_every == 0) || t == 0 ||
            t == cfg.max_steps - 1;
        StepArtifacts art;
        LossBundle bundle = train_step(state, pair, {}, want_relations ? &art : nullptr);
        if (want_relations)
            detail::dump_relations(art, t, cfg.arch.resolved_relation_stage(), run_dir);

        losses << nlohmann::json{{"step", t},
                                 {"seg", bundle.seg},
                                 {"rc_general", bundle.rc_general},
                                 {"rc_target", bundle.rc_target},
                                 {"lambda_G", bundle.lambda_g},
                                 {"lambda_T", bundle.lambda_t}}
                      .dump()
               << "\n";

        if (cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0 &&
            t + 1 < cfg.max_steps)
            save_checkpoint(state, run_dir + "/checkpoints/step_" + std::to_string(t + 1));

        if (cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0 && !pools.eval_cases.empty()) {
            auto report = evaluate(state.net, pools.eval_cases, cfg.tau_mm);
            {
                std::ofstream f(run_dir + "/eval/metrics_step_" + std::to_string(t + 1) + ".csv");
                metrics::write_csv(f, report);
            }
            const double dsc = report.summarize().dsc_mean;
            if (dsc > best_dsc + 1e-9) {
                best_dsc = dsc;
                evals_since_best = 0;
            } else if (cfg.early_stop_patience > 0 &&
                       ++evals_since_best >= cfg.early_stop_patience) {
                stopped_early = true;
            }
        }
        result.steps_run = t + 1;
    }
    losses.flush();

    result.checkpoint_dir = run_dir + "/checkpoints/step_" + std::to_string(state.step);
    save_checkpoint(state, result.checkpoint_dir);

    if (!pools.eval_cases.empty()) {
        result.final_report = evaluate(state.net, pools.eval_cases, cfg.tau_mm);
        std::ofstream f(run_dir + "/eval/metrics.csv");
        metrics::write_csv(f, result.final_report);
        std::ofstream fj(run_dir + "/eval/summary.json");
        fj << summary_json(result.final_report).dump(2) << "\n";
    }
    return result;
}

}  // namespace relcollab
