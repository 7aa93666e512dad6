#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/rng.hpp"

namespace relcollab::data {

struct DatasetSplit {
    int fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    uint64_t seed = 0;
};

/// `holdout_test`: the fold's cell is held out for testing (conventional
/// k-fold). `holdout_train`: the fold's cell is the small training set and
/// everything else is tested — the inverted few-annotation ratio.
enum class FoldMode { holdout_test, holdout_train };

/// Deterministic k-fold partition: every id lands in exactly one fold cell,
/// cell sizes differ by at most one.
inline std::vector<DatasetSplit> make_folds(const std::vector<std::string>& ids, int k,
                                            uint64_t seed,
                                            FoldMode mode = FoldMode::holdout_test) {
    if (k < 2) throw ConfigError("make_folds: k must be >= 2");
    if (static_cast<size_t>(k) > ids.size())
        throw ConfigError("make_folds: k exceeds number of ids");

    std::vector<std::string> shuffled = ids;
    Rng rng(derive_seed(seed, 0x666f6c64 /* "fold" */));
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

    const size_t n = shuffled.size();
    std::vector<DatasetSplit> folds(static_cast<size_t>(k));
    size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const size_t cell = n / static_cast<size_t>(k) + (static_cast<size_t>(f) < n % static_cast<size_t>(k) ? 1 : 0);
        std::vector<std::string> in_cell(shuffled.begin() + static_cast<int64_t>(pos),
                                         shuffled.begin() + static_cast<int64_t>(pos + cell));
        std::vector<std::string> rest;
        rest.reserve(n - cell);
        rest.insert(rest.end(), shuffled.begin(), shuffled.begin() + static_cast<int64_t>(pos));
        rest.insert(rest.end(), shuffled.begin() + static_cast<int64_t>(pos + cell), shuffled.end());
        pos += cell;

        DatasetSplit& split = folds[static_cast<size_t>(f)];
        split.fold_index = f;
        split.seed = seed;
        if (mode == FoldMode::holdout_test) {
            split.test_ids = std::move(in_cell);
            split.train_ids = std::move(rest);
        } else {
            split.train_ids = std::move(in_cell);
            split.test_ids = std::move(rest);
        }
    }
    return folds;
}

}  // namespace relcollab::data
