// Command-line entry point: phantom synthesis, training, evaluation and
// relation-matrix inspection over one deterministic toolkit.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/hash.hpp"
#include "relcollab/data/dataset_io.hpp"
#include "relcollab/data/folds.hpp"
#include "relcollab/data/phantom.hpp"
#include "relcollab/data/phantom_json.hpp"
#include "relcollab/data/preprocess.hpp"
#include "relcollab/inspect.hpp"
#include "relcollab/trainer.hpp"
#include "relcollab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relcollab;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string cache_dir() {
    const char* env = std::getenv("RELCOLLAB_CACHE");
    return env ? std::string(env) : std::string();
}

std::string resolve_dataset_path(const std::string& path) {
    if (fs::exists(path)) return path;
    const std::string cache = cache_dir();
    if (!cache.empty() && fs::path(path).is_relative() && fs::exists(cache + "/" + path))
        return cache + "/" + path;
    return path;
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    try {
        json js;
        f >> js;
        return js;
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

void write_manifest(const std::string& dir, const std::string& command, const json& resolved,
                    const json& input_hashes, uint64_t seed, bool deterministic) {
    json manifest = {{"command", command},
                     {"toolkit_version", kVersion},
                     {"resolved_config", resolved},
                     {"seeds", {{"seed", seed}}},
                     {"input_hashes", input_hashes}};
    if (!deterministic) {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        manifest["timestamp_unix_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    }
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw DataError("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

struct LoadedData {
    data::StoredDataset stored;
    std::string manifest_hash;
};

LoadedData load_and_preprocess(const std::string& dataset_arg, const data::PreprocessConfig& pp) {
    const std::string dir = resolve_dataset_path(dataset_arg);
    if (!fs::exists(dir + "/manifest.json"))
        throw DataError("dataset not found (no manifest.json): " + dir);
    LoadedData out{data::load_dataset(dir), hash_file_hex(dir + "/manifest.json")};
    for (auto& s : out.stored.dataset.samples) s = data::preprocess(std::move(s), pp);
    return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, std::string out_dir, int64_t seed_override,
              bool deterministic) {
    json js = config_path.empty() ? json::object() : load_json_file(config_path);
    data::PhantomConfig cfg = data::phantom_config_from_json(js);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (out_dir.empty()) {
        const std::string cache = cache_dir();
        if (cache.empty()) throw ConfigError("--out required (or set RELCOLLAB_CACHE)");
        out_dir = cache + "/phantom_seed" + std::to_string(cfg.seed);
    }

    data::Dataset ds = data::generate_phantom_dataset(cfg);
    const json resolved = data::phantom_config_to_json(cfg);
    data::DatasetMeta meta;
    meta.rank = cfg.rank;
    meta.spacing = cfg.spacing;
    meta.window = cfg.window;
    meta.seed = cfg.seed;
    meta.config_hash = hex64(fnv1a64(resolved.dump()));
    meta.config = {{"command", "synth"},
                   {"toolkit_version", kVersion},
                   {"deterministic", deterministic},
                   {"phantom", resolved}};
    data::save_dataset(ds, meta, out_dir);
    std::cout << "wrote " << ds.samples.size() << " samples to " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct DataSection {
    std::string dataset;
    int k_folds = 0;  // 0: train and evaluate on all labeled samples
    int fold = 0;
    data::FoldMode fold_mode = data::FoldMode::holdout_test;
    uint64_t split_seed = 0;
    bool split_seed_set = false;
};

DataSection data_section_from(const json& js) {
    DataSection d;
    if (!js.contains("data")) return d;
    const auto& jd = js.at("data");
    d.dataset = jd.value("dataset", d.dataset);
    d.k_folds = jd.value("k_folds", d.k_folds);
    d.fold = jd.value("fold", d.fold);
    if (jd.contains("fold_mode"))
        d.fold_mode = jd.at("fold_mode").get<std::string>() == "holdout_train"
                          ? data::FoldMode::holdout_train
                          : data::FoldMode::holdout_test;
    if (jd.contains("split_seed")) {
        d.split_seed = jd.at("split_seed").get<uint64_t>();
        d.split_seed_set = true;
    }
    return d;
}

TrainConfig train_config_from(const json& js) {
    TrainConfig cfg;
    if (js.contains("arch")) {
        const auto& ja = js.at("arch");
        if (ja.contains("preset")) cfg.arch = ArchitectureSpec::preset(ja.at("preset").get<std::string>());
        if (ja.contains("stages")) cfg.arch = ArchitectureSpec::from_json(ja);
        if (ja.contains("patch")) cfg.arch.patch = ja.at("patch").get<std::vector<int64_t>>();
        if (ja.contains("ds_heads")) cfg.arch.ds_heads = ja.at("ds_heads").get<int>();
        if (ja.contains("relation_stage"))
            cfg.arch.relation_stage = ja.at("relation_stage").get<int>();
    }
    if (js.contains("train")) {
        TrainConfig parsed = TrainConfig::from_json(js.at("train"));
        parsed.arch = cfg.arch;
        cfg = parsed;
    }
    if (js.contains("mode")) cfg.mode = train_mode_from(js.at("mode").get<std::string>());
    return cfg;
}

int cmd_train(const std::string& config_path, const std::string& mode_flag, int fold_flag,
              int64_t seed_flag, int64_t steps_flag, std::string out_dir, bool deterministic) {
    json js = config_path.empty() ? json::object() : load_json_file(config_path);
    TrainConfig cfg = train_config_from(js);
    DataSection dsec = data_section_from(js);
    if (!mode_flag.empty()) cfg.mode = train_mode_from(mode_flag);
    if (fold_flag >= 0) dsec.fold = fold_flag;
    if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
    if (steps_flag > 0) cfg.max_steps = steps_flag;
    if (out_dir.empty()) throw ConfigError("--out run directory is required");
    if (dsec.dataset.empty()) throw ConfigError("config must name a dataset (data.dataset)");
    cfg.validate();

    LoadedData loaded = load_and_preprocess(dsec.dataset, cfg.preprocess);
    const data::Dataset& ds = loaded.stored.dataset;

    RunPools pools;
    pools.target_unlabeled = ds.by_tag(data::DomainTag::target_unlabeled);
    pools.auxiliary = ds.by_tag(data::DomainTag::auxiliary);
    auto labeled = ds.by_tag(data::DomainTag::target_labeled);

    json fold_info;
    if (dsec.k_folds > 0) {
        std::vector<std::string> ids;
        for (const auto* s : labeled) ids.push_back(s->id);
        const uint64_t split_seed = dsec.split_seed_set ? dsec.split_seed : cfg.seed;
        auto folds = data::make_folds(ids, dsec.k_folds, split_seed, dsec.fold_mode);
        if (dsec.fold < 0 || dsec.fold >= dsec.k_folds)
            throw ConfigError("fold index out of range");
        const auto& split = folds[static_cast<size_t>(dsec.fold)];
        for (const auto* s : labeled) {
            const bool in_train = std::find(split.train_ids.begin(), split.train_ids.end(),
                                            s->id) != split.train_ids.end();
            (in_train ? pools.target_labeled : pools.eval_cases).push_back(s);
        }
        fold_info = {{"k_folds", dsec.k_folds},
                     {"fold", dsec.fold},
                     {"split_seed", split_seed},
                     {"train_ids", split.train_ids},
                     {"test_ids", split.test_ids}};
    } else {
        pools.target_labeled = labeled;
        pools.eval_cases = labeled;
        fold_info = {{"k_folds", 0}};
    }
    if (pools.target_labeled.empty()) throw DataError("no labeled target samples to train on");

    fs::create_directories(out_dir);
    json resolved = {{"train", cfg.to_json()},
                     {"data",
                      {{"dataset", dsec.dataset},
                       {"fold_info", fold_info}}}};
    write_manifest(out_dir, "train", resolved, {{"dataset_manifest", loaded.manifest_hash}},
                   cfg.seed, deterministic);

    RunResult result = run_training(cfg, pools, out_dir);
    std::cout << "run complete: " << result.steps_run << " steps, checkpoint at "
              << result.checkpoint_dir << "\n";
    if (!result.final_report.rows.empty()) {
        const auto s = result.final_report.summarize();
        std::cout << "eval: dsc " << s.dsc_mean << " +/- " << s.dsc_std << ", nsd " << s.nsd_mean
                  << " +/- " << s.nsd_std << " over " << s.cases << " cases\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint_dir, const std::string& dataset_arg,
             std::string out_dir, double tau_mm, bool deterministic) {
    if (!fs::exists(checkpoint_dir + "/state.json"))
        throw DataError("checkpoint not found: " + checkpoint_dir);
    TrainState state = load_checkpoint(checkpoint_dir);
    LoadedData loaded = load_and_preprocess(dataset_arg, state.cfg.preprocess);
    auto cases = loaded.stored.dataset.by_tag(data::DomainTag::target_labeled);
    if (cases.empty()) throw DataError("dataset has no labeled target samples to evaluate");
    if (out_dir.empty()) out_dir = checkpoint_dir + "/eval";
    fs::create_directories(out_dir);

    metrics::MetricReport report = evaluate(state.net, cases, tau_mm);
    {
        std::ofstream f(out_dir + "/metrics.csv");
        metrics::write_csv(f, report);
    }
    {
        std::ofstream f(out_dir + "/summary.json");
        f << summary_json(report).dump(2) << "\n";
    }
    write_manifest(out_dir, "eval",
                   {{"checkpoint", checkpoint_dir}, {"dataset", dataset_arg}, {"tau_mm", tau_mm}},
                   {{"dataset_manifest", loaded.manifest_hash}}, state.cfg.seed, deterministic);
    const auto s = report.summarize();
    std::cout << "dsc " << s.dsc_mean << " +/- " << s.dsc_std << ", nsd " << s.nsd_mean << " +/- "
              << s.nsd_std << ", sen " << s.sen_mean << ", spec " << s.spec_mean << ", mae "
              << s.mae_mean << " over " << s.cases << " cases\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& run_dir, const std::string& steps_arg, std::string out_dir,
                bool deterministic) {
    if (!fs::is_directory(run_dir)) throw DataError("run directory not found: " + run_dir);
    std::vector<int64_t> steps;
    if (!steps_arg.empty()) {
        std::stringstream ss(steps_arg);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) steps.push_back(std::stoll(tok));
    }
    if (out_dir.empty()) out_dir = run_dir + "/inspect";
    auto result = inspect::inspect_run(run_dir, steps, out_dir, std::cerr);
    write_manifest(out_dir, "inspect-relations",
                   {{"run", run_dir}, {"steps_rendered", result.steps_rendered}}, json::object(),
                   0, deterministic);
    if (result.steps_rendered.empty())
        throw DataError("no relation snapshots found in " + run_dir);
    std::cout << "rendered " << result.steps_rendered.size() << " steps into " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relation-regularized collaborative segmentation toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    bool deterministic = false;
    app.add_flag("--deterministic", deterministic,
                 "omit timestamps so reruns are byte-identical");

    std::string config_path, out_dir, mode_flag, steps_arg, checkpoint_dir, dataset_arg, run_dir;
    int fold_flag = -1;
    int64_t seed_flag = -1, steps_flag = 0;
    double tau_mm = 3.0;

    auto* synth = app.add_subcommand("synth", "generate a phantom dataset");
    synth->add_option("--config", config_path, "phantom config JSON");
    synth->add_option("--out", out_dir, "output dataset directory");
    synth->add_option("--seed", seed_flag, "seed override");

    auto* train = app.add_subcommand("train", "train a dual-encoder model");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--mode", mode_flag, "baseline|rcg|rct|full|semi");
    train->add_option("--fold", fold_flag, "fold index override");
    train->add_option("--seed", seed_flag, "seed override");
    train->add_option("--steps", steps_flag, "max steps override");
    train->add_option("--out", out_dir, "run directory")->required();

    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a labeled dataset");
    evalc->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    evalc->add_option("--data", dataset_arg, "dataset directory")->required();
    evalc->add_option("--out", out_dir, "output directory (default <checkpoint>/eval)");
    evalc->add_option("--tau", tau_mm, "surface tolerance in mm");

    auto* insp = app.add_subcommand("inspect-relations", "render relation matrices and curves");
    insp->add_option("--run", run_dir, "training run directory")->required();
    insp->add_option("--steps", steps_arg, "comma-separated steps (default: all found)");
    insp->add_option("--out", out_dir, "output directory (default <run>/inspect)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir, seed_flag, deterministic);
        if (train->parsed())
            return cmd_train(config_path, mode_flag, fold_flag, seed_flag, steps_flag, out_dir,
                             deterministic);
        if (evalc->parsed())
            return cmd_eval(checkpoint_dir, dataset_arg, out_dir, tau_mm, deterministic);
        if (insp->parsed()) return cmd_inspect(run_dir, steps_arg, out_dir, deterministic);
    } catch (const ConfigError& e) {
        std::cerr << "error[config]: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StepError& e) {
        std::cerr << "error[numeric]: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error[data]: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
