#pragma once

#include <algorithm>
#include <vector>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/rng.hpp"
#include "relcollab/data/sample.hpp"

namespace relcollab::data {

/// Crops (randomly positioned) or zero-pads a sample to the patch shape.
/// The label, when present, gets the identical window.
inline Sample crop_or_pad(const Sample& s, const std::vector<int64_t>& patch, Rng& rng) {
    const int rank = s.rank();
    if (patch.size() != static_cast<size_t>(rank))
        throw ConfigError("crop_or_pad: patch rank mismatch");

    std::vector<int64_t> src_off(rank), dst_off(rank), copy(rank);
    for (int a = 0; a < rank; ++a) {
        const int64_t in = s.image.shape[a], out = patch[a];
        if (in >= out) {
            src_off[a] = in > out ? rng.uniform_int(0, in - out) : 0;
            dst_off[a] = 0;
            copy[a] = out;
        } else {
            src_off[a] = 0;
            dst_off[a] = (out - in) / 2;
            copy[a] = in;
        }
    }

    Sample out = s;
    out.image = Tensor<float>(patch);
    if (s.label) out.label = Tensor<uint8_t>(patch);

    std::vector<int64_t> idx(rank, 0), si(rank), di(rank);
    do {
        for (int a = 0; a < rank; ++a) {
            si[a] = src_off[a] + idx[a];
            di[a] = dst_off[a] + idx[a];
        }
        out.image.at(di) = s.image.at(si);
        if (s.label) out.label->at(di) = s.label->at(si);
    } while (next_index(idx, copy));
    return out;
}

namespace detail {

/// Picks `count` samples: distinct when the pool is large enough, otherwise
/// uniformly with replacement.
inline std::vector<const Sample*> pick(const std::vector<const Sample*>& pool, int count,
                                       Rng& rng) {
    std::vector<const Sample*> out;
    out.reserve(static_cast<size_t>(count));
    if (pool.size() >= static_cast<size_t>(count)) {
        std::vector<size_t> order(pool.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (int i = 0; i < count; ++i) {
            const size_t j = static_cast<size_t>(
                rng.uniform_int(static_cast<int64_t>(i), static_cast<int64_t>(order.size()) - 1));
            std::swap(order[static_cast<size_t>(i)], order[j]);
            out.push_back(pool[order[static_cast<size_t>(i)]]);
        }
    } else {
        for (int i = 0; i < count; ++i)
            out.push_back(pool[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))]);
    }
    return out;
}

}  // namespace detail

struct SamplerOptions {
    std::vector<int64_t> patch;
    int batch_size = 2;
    bool semi_supervised = false;
    int labeled_ratio = 1;    // labeled : unlabeled parts per batch in semi mode
    int unlabeled_ratio = 1;
};

/// Draws one synchronized batch pair: B target samples plus B auxiliary
/// samples, each cropped/padded to the patch shape. In semi-supervised mode
/// the target batch mixes labeled and unlabeled samples at the configured
/// ratio (labeled first); otherwise all target samples are labeled.
inline BatchPair sample_batch_pair(const std::vector<const Sample*>& target_labeled,
                                   const std::vector<const Sample*>& target_unlabeled,
                                   const std::vector<const Sample*>& auxiliary_pool,
                                   const SamplerOptions& opt, Rng& rng) {
    const int B = opt.batch_size;
    if (B < 1) throw ConfigError("sample_batch_pair: batch size must be >= 1");
    if (auxiliary_pool.empty()) throw DataError("sample_batch_pair: auxiliary pool is empty");

    int n_labeled = B;
    if (opt.semi_supervised && !target_unlabeled.empty()) {
        if (target_labeled.empty()) {
            n_labeled = 0;
        } else {
            const double frac = static_cast<double>(opt.labeled_ratio) /
                                static_cast<double>(opt.labeled_ratio + opt.unlabeled_ratio);
            n_labeled = std::clamp(static_cast<int>(std::lround(frac * B)), 0, B);
        }
    } else if (target_labeled.empty()) {
        throw DataError("sample_batch_pair: target labeled pool is empty");
    }

    BatchPair pair;
    if (n_labeled > 0)
        for (const Sample* s : detail::pick(target_labeled, n_labeled, rng))
            pair.target.push_back(crop_or_pad(*s, opt.patch, rng));
    if (n_labeled < B)
        for (const Sample* s : detail::pick(target_unlabeled, B - n_labeled, rng))
            pair.target.push_back(crop_or_pad(*s, opt.patch, rng));
    for (const Sample* s : detail::pick(auxiliary_pool, B, rng))
        pair.auxiliary.push_back(crop_or_pad(*s, opt.patch, rng));
    return pair;
}

/// Convenience overload for the supervised case.
inline BatchPair sample_batch_pair(const std::vector<const Sample*>& target_pool,
                                   const std::vector<const Sample*>& auxiliary_pool, int batch,
                                   const std::vector<int64_t>& patch, Rng& rng) {
    SamplerOptions opt;
    opt.patch = patch;
    opt.batch_size = batch;
    return sample_batch_pair(target_pool, {}, auxiliary_pool, opt, rng);
}

}  // namespace relcollab::data
