#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "relcollab/data/folds.hpp"
#include "relcollab/data/phantom.hpp"
#include "relcollab/data/preprocess.hpp"
#include "relcollab/data/sampler.hpp"

using namespace relcollab;
using namespace relcollab::data;

TEST_CASE("phantom generation") {
    PhantomConfig cfg;
    cfg.grid = {64, 64};
    cfg.n_target_labeled = 3;
    cfg.n_target_unlabeled = 2;
    cfg.n_auxiliary = 4;
    cfg.seed = 21;

    SECTION("deterministic for a fixed config and seed") {
        Dataset a = generate_phantom_dataset(cfg);
        Dataset b = generate_phantom_dataset(cfg);
        REQUIRE(a.samples.size() == b.samples.size());
        for (size_t i = 0; i < a.samples.size(); ++i) {
            REQUIRE(a.samples[i].id == b.samples[i].id);
            REQUIRE(a.samples[i].image.data == b.samples[i].image.data);
            REQUIRE(a.samples[i].label->data == b.samples[i].label->data);
        }
    }

    SECTION("different seeds give different images") {
        Dataset a = generate_phantom_dataset(cfg);
        PhantomConfig cfg2 = cfg;
        cfg2.seed = 22;
        Dataset b = generate_phantom_dataset(cfg2);
        REQUIRE(a.samples[0].image.data != b.samples[0].image.data);
    }

    SECTION("zero lesions per image gives all-empty masks") {
        PhantomConfig empty = cfg;
        empty.target_family.blobs_min = empty.target_family.blobs_max = 0;
        empty.auxiliary_family.blobs_min = empty.auxiliary_family.blobs_max = 0;
        Dataset ds = generate_phantom_dataset(empty);
        for (const auto& s : ds.samples) {
            int64_t sum = 0;
            for (int64_t i = 0; i < s.label->numel(); ++i) sum += (*s.label)[i];
            REQUIRE(sum == 0);
        }
    }

    SECTION("mask equals an independent rasterization of the recorded blobs") {
        PhantomConfig disk = cfg;
        disk.noise_sigma = 0.0;
        disk.target_family = {1, 1, 8.0, 8.0, 0.0, 0.8};
        disk.n_target_labeled = 4;
        disk.n_target_unlabeled = 0;
        disk.n_auxiliary = 1;
        Dataset ds = generate_phantom_dataset(disk);
        for (const auto& s : ds.samples) {
            if (s.tag != DomainTag::target_labeled) continue;
            REQUIRE(s.lesions.size() == 1);
            // re-rasterize from the recorded geometry
            int64_t expect = 0;
            for (int64_t y = 0; y < 64; ++y)
                for (int64_t x = 0; x < 64; ++x) {
                    const double dy = (static_cast<double>(y) - s.lesions[0].center[0]) / s.lesions[0].radii[0];
                    const double dx = (static_cast<double>(x) - s.lesions[0].center[1]) / s.lesions[0].radii[1];
                    if (dy * dy + dx * dx <= 1.0) ++expect;
                }
            int64_t got = 0;
            for (int64_t i = 0; i < s.label->numel(); ++i) got += (*s.label)[i];
            REQUIRE(got == expect);
        }
    }

    SECTION("invalid configs are rejected") {
        PhantomConfig bad = cfg;
        bad.n_auxiliary = -1;
        REQUIRE_THROWS_AS(generate_phantom_dataset(bad), ConfigError);
        bad = cfg;
        bad.grid = {12, 12};
        bad.target_family.radius_max = 10.0;
        REQUIRE_THROWS_AS(generate_phantom_dataset(bad), ConfigError);
    }

    SECTION("unlabeled samples hide their mask from the loss path") {
        Dataset ds = generate_phantom_dataset(cfg);
        bool saw_unlabeled = false;
        for (const auto& s : ds.samples) {
            if (s.tag == DomainTag::target_unlabeled) {
                saw_unlabeled = true;
                REQUIRE(s.label.has_value());             // truth exists for analysis
                REQUIRE_FALSE(s.supervised_label().has_value());  // but not for losses
            } else {
                REQUIRE(s.supervised_label().has_value());
            }
        }
        REQUIRE(saw_unlabeled);
    }
}

TEST_CASE("k-fold splits") {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("case" + std::to_string(i));

    SECTION("k equal to n holds out one id per fold") {
        std::vector<std::string> five(ids.begin(), ids.begin() + 5);
        auto folds = make_folds(five, 5, 9);
        for (const auto& f : folds) {
            REQUIRE(f.test_ids.size() == 1);
            REQUIRE(f.train_ids.size() == 4);
        }
    }

    SECTION("inverted ratio: 4 train / 16 test per fold") {
        auto folds = make_folds(ids, 5, 9, FoldMode::holdout_train);
        for (const auto& f : folds) {
            REQUIRE(f.train_ids.size() == 4);
            REQUIRE(f.test_ids.size() == 16);
        }
    }

    SECTION("fold cells partition the id universe for any seed") {
        for (uint64_t seed : {1ull, 2ull, 777ull}) {
            for (FoldMode mode : {FoldMode::holdout_test, FoldMode::holdout_train}) {
                auto folds = make_folds(ids, 5, seed, mode);
                std::set<std::string> seen;
                for (const auto& f : folds) {
                    const auto& cell = mode == FoldMode::holdout_test ? f.test_ids : f.train_ids;
                    for (const auto& id : cell) {
                        REQUIRE(seen.insert(id).second);  // pairwise disjoint
                    }
                    // train/test disjoint within the fold
                    std::set<std::string> train(f.train_ids.begin(), f.train_ids.end());
                    for (const auto& id : f.test_ids) REQUIRE(train.count(id) == 0);
                }
                REQUIRE(seen.size() == ids.size());  // union covers everything
            }
        }
    }

    SECTION("deterministic in seed, different across seeds") {
        auto a = make_folds(ids, 4, 5);
        auto b = make_folds(ids, 4, 5);
        auto c = make_folds(ids, 4, 6);
        REQUIRE(a[0].test_ids == b[0].test_ids);
        bool all_equal = true;
        for (int f = 0; f < 4; ++f) all_equal = all_equal && a[static_cast<size_t>(f)].test_ids == c[static_cast<size_t>(f)].test_ids;
        REQUIRE_FALSE(all_equal);
    }

    SECTION("k larger than n is rejected") {
        std::vector<std::string> three(ids.begin(), ids.begin() + 3);
        REQUIRE_THROWS_AS(make_folds(three, 5, 1), ConfigError);
        REQUIRE_THROWS_AS(make_folds(ids, 1, 1), ConfigError);
    }
}

TEST_CASE("preprocess") {
    PreprocessConfig cfg;

    SECTION("constant image under min-max becomes all zeros") {
        Sample s;
        s.id = "c";
        s.image = Tensor<float>({4, 4});
        s.image.fill(0.7f);
        s.spacing = {1, 1};
        Sample out = preprocess(s, cfg);
        for (int64_t i = 0; i < out.image.numel(); ++i) REQUIRE(out.image[i] == 0.0f);
        REQUIRE(out.preprocess_note.find("minmax-constant") != std::string::npos);
    }

    SECTION("clipping happens before scaling") {
        PreprocessConfig ct;
        ct.window = {-1000.0, 400.0};
        Sample s;
        s.id = "w";
        s.image = Tensor<float>({1, 3}, {-2000.0f, 0.0f, 2000.0f});
        s.spacing = {1, 1};
        Sample out = preprocess(s, ct);
        // after clip: [-1000, 0, 400] -> minmax to [0, 1000/1400, 1]
        REQUIRE(out.image[0] == 0.0f);
        REQUIRE(out.image[2] == 1.0f);
        REQUIRE(out.image[1] == Catch::Approx(1000.0 / 1400.0).margin(1e-6));
    }

    SECTION("z-score output has mean 0 and std 1") {
        PreprocessConfig z;
        z.mode = NormMode::zscore;
        z.window = {-10.0, 10.0};
        Rng rng(3);
        Sample s;
        s.id = "z";
        s.image = Tensor<float>({32, 32});
        for (int64_t i = 0; i < s.image.numel(); ++i)
            s.image[i] = static_cast<float>(rng.normal(1.0, 2.0));
        s.spacing = {1, 1};
        Sample out = preprocess(s, z);
        double mean = 0;
        for (int64_t i = 0; i < out.image.numel(); ++i) mean += out.image[i];
        mean /= static_cast<double>(out.image.numel());
        double var = 0;
        for (int64_t i = 0; i < out.image.numel(); ++i) {
            const double d = out.image[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(out.image.numel());
        REQUIRE(std::abs(mean) < 1e-5);
        REQUIRE(std::abs(std::sqrt(var) - 1.0) < 1e-5);
    }

    SECTION("constant image under z-score falls back to centering") {
        PreprocessConfig z;
        z.mode = NormMode::zscore;
        Sample s;
        s.id = "zc";
        s.image = Tensor<float>({4, 4});
        s.image.fill(0.25f);
        s.spacing = {1, 1};
        Sample out = preprocess(s, z);
        for (int64_t i = 0; i < out.image.numel(); ++i) REQUIRE(out.image[i] == 0.0f);
        REQUIRE(out.preprocess_note.find("constant") != std::string::npos);
    }
}

TEST_CASE("batch pair sampling") {
    PhantomConfig cfg;
    cfg.grid = {64, 64};
    cfg.n_target_labeled = 4;
    cfg.n_target_unlabeled = 4;
    cfg.n_auxiliary = 6;
    cfg.seed = 5;
    Dataset ds = generate_phantom_dataset(cfg);
    auto labeled = ds.by_tag(DomainTag::target_labeled);
    auto unlabeled = ds.by_tag(DomainTag::target_unlabeled);
    auto aux = ds.by_tag(DomainTag::auxiliary);

    SECTION("singleton pools repeat the sample under replacement") {
        std::vector<const Sample*> one_t{labeled[0]}, one_a{aux[0]};
        Rng rng(1);
        BatchPair pair = sample_batch_pair(one_t, one_a, 2, {64, 64}, rng);
        REQUIRE(pair.target.size() == 2);
        REQUIRE(pair.auxiliary.size() == 2);
        REQUIRE(pair.target[0].id == pair.target[1].id);
        REQUIRE(pair.auxiliary[0].id == pair.auxiliary[1].id);
    }

    SECTION("every element matches the patch shape, cropping larger images") {
        Rng rng(2);
        BatchPair pair = sample_batch_pair(labeled, aux, 3, {48, 32}, rng);
        for (const auto& s : pair.target) REQUIRE(s.image.shape == std::vector<int64_t>{48, 32});
        for (const auto& s : pair.auxiliary) REQUIRE(s.image.shape == std::vector<int64_t>{48, 32});
        for (const auto& s : pair.target) REQUIRE(s.label->shape == s.image.shape);
    }

    SECTION("padding smaller images reaches the requested 448x384 patch") {
        Rng rng(3);
        BatchPair pair = sample_batch_pair(labeled, aux, 2, {448, 384}, rng);
        for (const auto& s : pair.target) REQUIRE(s.image.shape == std::vector<int64_t>{448, 384});
        for (const auto& s : pair.auxiliary)
            REQUIRE(s.image.shape == std::vector<int64_t>{448, 384});
    }

    SECTION("semi mode hits the labeled:unlabeled ratio exactly") {
        SamplerOptions opt;
        opt.patch = {64, 64};
        opt.batch_size = 4;
        opt.semi_supervised = true;
        opt.labeled_ratio = 1;
        opt.unlabeled_ratio = 1;
        Rng rng(4);
        for (int draw = 0; draw < 20; ++draw) {
            BatchPair pair = sample_batch_pair(labeled, unlabeled, aux, opt, rng);
            int n_lab = 0, n_unlab = 0;
            for (const auto& s : pair.target)
                (s.tag == DomainTag::target_labeled ? n_lab : n_unlab)++;
            REQUIRE(n_lab == 2);
            REQUIRE(n_unlab == 2);
        }
    }

    SECTION("empty pools are rejected") {
        Rng rng(5);
        REQUIRE_THROWS_AS(sample_batch_pair({}, aux, 2, {64, 64}, rng), DataError);
        REQUIRE_THROWS_AS(sample_batch_pair(labeled, {}, 2, {64, 64}, rng), DataError);
    }
}
