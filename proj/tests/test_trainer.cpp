#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "relcollab/data/phantom.hpp"
#include "relcollab/trainer.hpp"

using namespace relcollab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("relcollab_trainer_" + std::to_string(std::rand()) + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

data::Dataset tiny_phantoms(int labeled, int unlabeled, int aux, uint64_t seed = 11) {
    data::PhantomConfig cfg;
    cfg.grid = {64, 64};
    cfg.n_target_labeled = labeled;
    cfg.n_target_unlabeled = unlabeled;
    cfg.n_auxiliary = aux;
    cfg.seed = seed;
    return data::generate_phantom_dataset(cfg);
}

TrainConfig tiny_config(TrainMode mode = TrainMode::full) {
    TrainConfig cfg;
    cfg.arch = ArchitectureSpec::tiny();
    cfg.mode = mode;
    cfg.max_steps = 50;
    cfg.batch_size = 2;
    cfg.seed = 17;
    return cfg;
}

data::BatchPair draw_pair(const data::Dataset& ds, const TrainConfig& cfg, Rng& rng,
                          bool include_unlabeled = false) {
    data::SamplerOptions opt;
    opt.patch = cfg.arch.patch;
    opt.batch_size = cfg.batch_size;
    opt.semi_supervised = include_unlabeled;
    return data::sample_batch_pair(ds.by_tag(data::DomainTag::target_labeled),
                                   include_unlabeled ? ds.by_tag(data::DomainTag::target_unlabeled)
                                                     : std::vector<const data::Sample*>{},
                                   ds.by_tag(data::DomainTag::auxiliary), opt, rng);
}

std::vector<Tensor<float>> snapshot(std::vector<nn::ParamRef<float>> group) {
    std::vector<Tensor<float>> out;
    for (auto& p : group) out.push_back(*p.value);
    return out;
}

bool identical(const std::vector<Tensor<float>>& a, std::vector<nn::ParamRef<float>> group) {
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].data != group[i].value->data) return false;
    return true;
}

double max_update(const std::vector<Tensor<float>>& before,
                  std::vector<nn::ParamRef<float>> group) {
    double m = 0;
    for (size_t i = 0; i < before.size(); ++i)
        for (int64_t j = 0; j < before[i].numel(); ++j)
            m = std::max(m, std::abs(static_cast<double>(before[i][j]) - (*group[i].value)[j]));
    return m;
}

}  // namespace

TEST_CASE("gradient routing") {
    data::Dataset ds = tiny_phantoms(4, 0, 4);
    TrainConfig cfg = tiny_config();
    Rng batch_rng(3);

    SECTION("no consistency loss leaves the general encoder untouched") {
        TrainConfig c = cfg;
        c.mode = TrainMode::baseline;
        TrainState state = make_train_state(c);
        auto before_g = snapshot(state.net.params_general());
        auto before_d = snapshot(state.net.params_decoder());
        auto bundle = train_step(state, draw_pair(ds, c, batch_rng));
        REQUIRE(bundle.rc_general == 0.0);
        REQUIRE(bundle.rc_target == 0.0);
        REQUIRE(identical(before_g, state.net.params_general()));
        REQUIRE_FALSE(identical(before_d, state.net.params_decoder()));
    }

    SECTION("zeroed segmentation loss freezes the decoder exactly") {
        TrainState state = make_train_state(cfg);
        auto before_d = snapshot(state.net.params_decoder());
        auto before_g = snapshot(state.net.params_general());
        StepOptions opts;
        opts.zero_seg = true;
        train_step(state, draw_pair(ds, cfg, batch_rng), opts);
        REQUIRE(identical(before_d, state.net.params_decoder()));
        // the general encoder still moves: relation consistency is active
        REQUIRE_FALSE(identical(before_g, state.net.params_general()));
    }

    SECTION("zeroed general consistency freezes the general encoder exactly") {
        TrainState state = make_train_state(cfg);
        auto before_g = snapshot(state.net.params_general());
        StepOptions opts;
        opts.zero_rc_general = true;
        train_step(state, draw_pair(ds, cfg, batch_rng), opts);
        REQUIRE(identical(before_g, state.net.params_general()));
    }

    SECTION("the target encoder responds to segmentation alone") {
        TrainState state = make_train_state(cfg);
        auto before_t = snapshot(state.net.params_target());
        StepOptions opts;
        opts.zero_rc_general = true;
        opts.zero_rc_target = true;
        train_step(state, draw_pair(ds, cfg, batch_rng), opts);
        REQUIRE_FALSE(identical(before_t, state.net.params_target()));
    }

    SECTION("the target encoder responds to target consistency alone") {
        TrainState state = make_train_state(cfg);
        auto before_t = snapshot(state.net.params_target());
        auto before_d = snapshot(state.net.params_decoder());
        StepOptions opts;
        opts.zero_seg = true;
        opts.zero_rc_general = true;
        train_step(state, draw_pair(ds, cfg, batch_rng), opts);
        REQUIRE_FALSE(identical(before_t, state.net.params_target()));
        REQUIRE(identical(before_d, state.net.params_decoder()));
    }
}

TEST_CASE("zero-gradient fixed point") {
    // Perfect (saturated) empty prediction + identical relation matrices:
    // no parameter group moves.
    data::Dataset ds = tiny_phantoms(2, 0, 2);
    TrainConfig cfg = tiny_config();
    TrainState state = make_train_state(cfg);

    // make both encoders identical so R_general == R_target exactly
    copy_params(state.net.params_target(), state.net.params_general());
    // saturate every head towards 0 so predictions are exactly 0
    for (auto& head : state.net.decoder.heads) head.bias.fill(-1000.0f);

    // batch whose auxiliary images equal the target images and whose masks
    // are empty: segmentation is perfect, relation matrices coincide
    Rng rng(9);
    data::BatchPair pair = draw_pair(ds, cfg, rng);
    for (size_t b = 0; b < pair.target.size(); ++b) {
        pair.target[b].label->zero();
        pair.auxiliary[b].image = pair.target[b].image;
    }

    auto before_g = snapshot(state.net.params_general());
    auto before_t = snapshot(state.net.params_target());
    auto before_d = snapshot(state.net.params_decoder());
    LossBundle bundle = train_step(state, pair);
    REQUIRE(bundle.seg < 1e-5);
    REQUIRE(bundle.rc_general == 0.0);
    REQUIRE(bundle.rc_target == 0.0);
    REQUIRE(max_update(before_g, state.net.params_general()) == 0.0);
    REQUIRE(max_update(before_t, state.net.params_target()) == 0.0);
    REQUIRE(max_update(before_d, state.net.params_decoder()) == 0.0);
}

TEST_CASE("step errors") {
    data::Dataset ds = tiny_phantoms(2, 2, 2);
    TrainConfig cfg = tiny_config();

    SECTION("unlabeled sample rejected in supervised mode") {
        TrainState state = make_train_state(cfg);
        Rng rng(1);
        data::BatchPair pair = draw_pair(ds, cfg, rng);
        pair.target[0].tag = data::DomainTag::target_unlabeled;
        REQUIRE_THROWS_AS(train_step(state, pair), StepError);
    }

    SECTION("non-finite loss aborts with the step index") {
        TrainState state = make_train_state(cfg);
        state.net.params_decoder()[0].value->data[0] = std::numeric_limits<float>::infinity();
        Rng rng(1);
        try {
            train_step(state, draw_pair(ds, cfg, rng));
            FAIL("expected StepError");
        } catch (const StepError& e) {
            REQUIRE(e.step() == 0);
        }
    }

    SECTION("step budget is enforced") {
        TrainConfig c = cfg;
        c.max_steps = 1;
        TrainState state = make_train_state(c);
        Rng rng(1);
        train_step(state, draw_pair(ds, c, rng));
        REQUIRE_THROWS_AS(train_step(state, draw_pair(ds, c, rng)), StepError);
    }

    SECTION("semi_step requires semi mode") {
        TrainState state = make_train_state(cfg);
        Rng rng(1);
        REQUIRE_THROWS_AS(semi_step(state, draw_pair(ds, cfg, rng)), ConfigError);
    }
}

TEST_CASE("semi-supervised extension") {
    data::Dataset ds = tiny_phantoms(3, 3, 4);

    SECTION("all-labeled batch is bit-identical to supervised mode") {
        TrainConfig sup = tiny_config(TrainMode::full);
        TrainConfig semi = tiny_config(TrainMode::semi);
        TrainState s1 = make_train_state(sup);
        TrainState s2 = make_train_state(semi);
        Rng r1(5), r2(5);
        data::BatchPair p1 = draw_pair(ds, sup, r1);
        data::BatchPair p2 = draw_pair(ds, semi, r2);  // same rng stream, labeled pool only
        LossBundle b1 = train_step(s1, p1);
        LossBundle b2 = semi_step(s2, p2);
        REQUIRE(b1.seg == b2.seg);
        REQUIRE(b1.rc_general == b2.rc_general);
        REQUIRE(b1.rc_target == b2.rc_target);
        auto g1 = s1.net.params_target();
        auto g2 = s2.net.params_target();
        for (size_t i = 0; i < g1.size(); ++i) REQUIRE(g1[i].value->data == g2[i].value->data);
    }

    SECTION("all-unlabeled batch freezes the decoder but moves both encoders") {
        TrainConfig cfg = tiny_config(TrainMode::semi);
        TrainState state = make_train_state(cfg);
        Rng rng(6);
        data::SamplerOptions opt;
        opt.patch = cfg.arch.patch;
        opt.batch_size = 2;
        opt.semi_supervised = true;
        data::BatchPair pair = data::sample_batch_pair(
            {}, ds.by_tag(data::DomainTag::target_unlabeled),
            ds.by_tag(data::DomainTag::auxiliary), opt, rng);
        REQUIRE(pair.target.size() == 2);
        for (const auto& s : pair.target) REQUIRE(s.tag == data::DomainTag::target_unlabeled);

        auto before_d = snapshot(state.net.params_decoder());
        auto before_g = snapshot(state.net.params_general());
        auto before_t = snapshot(state.net.params_target());
        LossBundle bundle = semi_step(state, pair);
        REQUIRE(bundle.seg == 0.0);
        REQUIRE(identical(before_d, state.net.params_decoder()));
        REQUIRE_FALSE(identical(before_g, state.net.params_general()));
        REQUIRE_FALSE(identical(before_t, state.net.params_target()));
    }

    SECTION("mixed batch averages segmentation over labeled samples only") {
        TrainConfig cfg = tiny_config(TrainMode::semi);
        TrainState state = make_train_state(cfg);
        Rng rng(7);
        data::SamplerOptions opt;
        opt.patch = cfg.arch.patch;
        opt.batch_size = 4;
        opt.semi_supervised = true;
        data::BatchPair pair = data::sample_batch_pair(
            ds.by_tag(data::DomainTag::target_labeled),
            ds.by_tag(data::DomainTag::target_unlabeled),
            ds.by_tag(data::DomainTag::auxiliary), opt, rng);

        // manual recomputation with an explicit labeled mask
        double manual = 0;
        int n_labeled = 0;
        for (const auto& s : pair.target) {
            if (!s.supervised_label()) continue;
            std::vector<int64_t> xshape{1, 64, 64};
            auto pass = state.net.forward_target(s.image.reshaped(xshape));
            Tensor<float> m({1, 64, 64});
            for (int64_t i = 0; i < m.numel(); ++i)
                m[i] = static_cast<float>((*s.supervised_label())[i]);
            manual += seg_loss(pass.preds, m);
            ++n_labeled;
        }
        REQUIRE(n_labeled == 2);
        manual /= n_labeled;

        LossBundle bundle = semi_step(state, pair);
        REQUIRE(bundle.seg == Catch::Approx(manual).epsilon(1e-6));
    }
}

TEST_CASE("training determinism and checkpoint round trip") {
    data::Dataset ds = tiny_phantoms(4, 0, 4);

    SECTION("same seed, same loss curve") {
        TrainConfig cfg = tiny_config();
        cfg.max_steps = 6;
        TrainState s1 = make_train_state(cfg);
        TrainState s2 = make_train_state(cfg);
        for (int t = 0; t < 6; ++t) {
            data::BatchPair p1 = draw_pair(ds, cfg, s1.rng);
            data::BatchPair p2 = draw_pair(ds, cfg, s2.rng);
            LossBundle b1 = train_step(s1, p1);
            LossBundle b2 = train_step(s2, p2);
            REQUIRE(b1.seg == b2.seg);
            REQUIRE(b1.rc_general == b2.rc_general);
            REQUIRE(b1.rc_target == b2.rc_target);
        }
    }

    SECTION("save -> load -> step equals step without the round trip") {
        TempDir tmp;
        TrainConfig cfg = tiny_config();
        cfg.max_steps = 10;
        TrainState live = make_train_state(cfg);
        for (int t = 0; t < 3; ++t) train_step(live, draw_pair(ds, cfg, live.rng));

        save_checkpoint(live, tmp.str() + "/ckpt");
        TrainState restored = load_checkpoint(tmp.str() + "/ckpt");
        REQUIRE(restored.step == live.step);

        data::BatchPair p_live = draw_pair(ds, cfg, live.rng);
        data::BatchPair p_rest = draw_pair(ds, cfg, restored.rng);
        LossBundle b_live = train_step(live, p_live);
        LossBundle b_rest = train_step(restored, p_rest);
        REQUIRE(b_live.seg == b_rest.seg);
        REQUIRE(b_live.rc_general == b_rest.rc_general);

        auto g1 = live.net.params_general();
        auto g2 = restored.net.params_general();
        for (size_t i = 0; i < g1.size(); ++i) REQUIRE(g1[i].value->data == g2[i].value->data);
        auto t1 = live.net.params_target();
        auto t2 = restored.net.params_target();
        for (size_t i = 0; i < t1.size(); ++i) REQUIRE(t1[i].value->data == t2[i].value->data);
        auto d1 = live.net.params_decoder();
        auto d2 = restored.net.params_decoder();
        for (size_t i = 0; i < d1.size(); ++i) REQUIRE(d1[i].value->data == d2[i].value->data);
    }
}

TEST_CASE("lambda ramp is logged non-decreasing and ends at its base") {
    data::Dataset ds = tiny_phantoms(2, 0, 2);
    TrainConfig cfg = tiny_config();
    cfg.max_steps = 12;
    TrainState state = make_train_state(cfg);
    double prev_g = -1, prev_t = -1;
    for (int t = 0; t < 12; ++t) {
        LossBundle b = train_step(state, draw_pair(ds, cfg, state.rng));
        REQUIRE(b.lambda_g >= prev_g);
        REQUIRE(b.lambda_t >= prev_t);
        REQUIRE(b.lambda_g <= cfg.lambda_g_base + 1e-15);
        prev_g = b.lambda_g;
        prev_t = b.lambda_t;
    }
    REQUIRE(cfg.lambda_g_at(cfg.max_steps) == cfg.lambda_g_base);
}

TEST_CASE("evaluation") {
    data::Dataset ds = tiny_phantoms(3, 0, 3);
    TrainConfig cfg = tiny_config();
    TrainState state = make_train_state(cfg);

    SECTION("patch-sized images reduce to a single-tile forward pass") {
        const data::Sample& s = ds.samples[0];
        Tensor<float> tiled = sliding_window_predict(state.net, s.image);
        std::vector<int64_t> xshape{1, 64, 64};
        Tensor<float> direct = state.net.predict(s.image.reshaped(xshape))[0];
        REQUIRE(tiled.shape == s.image.shape);
        for (int64_t i = 0; i < tiled.numel(); ++i)
            REQUIRE(tiled[i] == Catch::Approx(direct[i]).margin(1e-6));
    }

    SECTION("larger images are tiled and averaged into the same shape") {
        data::PhantomConfig big;
        big.grid = {96, 80};
        big.n_target_labeled = 1;
        big.n_auxiliary = 1;
        big.seed = 2;
        data::Dataset bigds = data::generate_phantom_dataset(big);
        Tensor<float> prob = sliding_window_predict(state.net, bigds.samples[0].image);
        REQUIRE(prob.shape == std::vector<int64_t>{96, 80});
        for (int64_t i = 0; i < prob.numel(); ++i) {
            REQUIRE(prob[i] >= 0.0f);
            REQUIRE(prob[i] <= 1.0f);
        }
    }

    SECTION("evaluate produces one row per case") {
        auto cases = ds.by_tag(data::DomainTag::target_labeled);
        auto report = evaluate(state.net, cases, 3.0);
        REQUIRE(report.rows.size() == cases.size());
        for (const auto& r : report.rows) {
            REQUIRE(r.dsc >= 0.0);
            REQUIRE(r.dsc <= 1.0);
        }
    }

    SECTION("missing spacing or label is rejected") {
        data::Sample s = ds.samples[0];
        s.spacing.clear();
        REQUIRE_THROWS_AS(evaluate(state.net, {&s}, 3.0), DataError);
        data::Sample s2 = ds.samples[0];
        s2.label.reset();
        REQUIRE_THROWS_AS(evaluate(state.net, {&s2}, 3.0), DataError);
    }
}

TEST_CASE("run_training writes the full run layout") {
    TempDir tmp;
    data::Dataset ds = tiny_phantoms(4, 0, 4);
    TrainConfig cfg = tiny_config(TrainMode::baseline);
    cfg.max_steps = 8;
    cfg.eval_every = 4;
    cfg.relation_every = 4;

    RunPools pools;
    pools.target_labeled = ds.by_tag(data::DomainTag::target_labeled);
    pools.auxiliary = ds.by_tag(data::DomainTag::auxiliary);
    pools.eval_cases = pools.target_labeled;

    RunResult result = run_training(cfg, pools, tmp.str());
    REQUIRE(result.steps_run == 8);
    REQUIRE(fs::exists(tmp.str() + "/config.json"));
    REQUIRE(fs::exists(tmp.str() + "/losses.jsonl"));
    REQUIRE(fs::exists(tmp.str() + "/eval/metrics.csv"));
    REQUIRE(fs::exists(tmp.str() + "/eval/summary.json"));
    REQUIRE(fs::exists(result.checkpoint_dir + "/state.json"));
    REQUIRE(fs::exists(tmp.str() + "/relations/step_0/r_general_aux.bin"));

    // baseline mode logs rc terms as exactly zero on every step
    std::ifstream losses(tmp.str() + "/losses.jsonl");
    std::string line;
    int rows = 0;
    while (std::getline(losses, line)) {
        if (line.empty()) continue;
        auto js = nlohmann::json::parse(line);
        REQUIRE(js.at("rc_general").get<double>() == 0.0);
        REQUIRE(js.at("rc_target").get<double>() == 0.0);
        REQUIRE(std::isfinite(js.at("seg").get<double>()));
        ++rows;
    }
    REQUIRE(rows == 8);
}
