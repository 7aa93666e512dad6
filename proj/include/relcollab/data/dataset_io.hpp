#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/hash.hpp"
#include "relcollab/data/sample.hpp"
#include "relcollab/io/nifti.hpp"
#include "relcollab/io/pgm.hpp"

namespace relcollab::data {

/// On-disk dataset layout: one directory holding per-sample image/mask files
/// plus manifest.json (ids, tags, spacing, seed, config hash). 3D samples are
/// single-file .nii volumes carrying their spacing; 2D samples are 16-bit
/// grayscale .pgm rasters whose intensity window lives in the manifest.

struct DatasetMeta {
    int rank = 2;
    std::vector<double> spacing;
    std::array<double, 2> window = {0.0, 1.0};
    uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json config;  // resolved generator config, if any
};

namespace detail {

inline uint16_t to_window_level(float v, const std::array<double, 2>& w) {
    double q = std::round((static_cast<double>(v) - w[0]) / (w[1] - w[0]) * 65535.0);
    return static_cast<uint16_t>(std::clamp(q, 0.0, 65535.0));
}

inline float from_window_level(uint16_t q, const std::array<double, 2>& w) {
    return static_cast<float>(w[0] + static_cast<double>(q) * (w[1] - w[0]) / 65535.0);
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const DatasetMeta& meta, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("save_dataset: cannot create " + dir);

    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : ds.samples) {
        validate_sample(s);
        const std::string img_name =
            s.id + (s.rank() == 3 ? std::string("_img.nii") : std::string("_img.pgm"));
        const std::string msk_name =
            s.id + (s.rank() == 3 ? std::string("_msk.nii") : std::string("_msk.pgm"));
        const std::string img_path = dir + "/" + img_name;

        if (s.rank() == 3) {
            io::write_nifti(img_path, s.image, s.spacing);
            if (s.label) io::write_nifti(dir + "/" + msk_name, s.label->cast<float>(), s.spacing);
        } else {
            Tensor<uint16_t> raw(s.image.shape);
            for (int64_t i = 0; i < raw.numel(); ++i)
                raw[i] = detail::to_window_level(s.image[i], meta.window);
            io::write_pgm16(img_path, raw);
            if (s.label) io::write_pgm_mask(dir + "/" + msk_name, *s.label);
        }

        nlohmann::json lesions = nlohmann::json::array();
        for (const auto& b : s.lesions)
            lesions.push_back({{"center", b.center}, {"radii", b.radii}});
        samples.push_back({{"id", s.id},
                           {"tag", to_string(s.tag)},
                           {"spacing", s.spacing},
                           {"image", img_name},
                           {"mask", s.label ? msk_name : std::string()},
                           {"lesions", lesions}});
    }

    nlohmann::json manifest = {{"format_version", 1},
                               {"rank", meta.rank},
                               {"window", meta.window},
                               {"seed", meta.seed},
                               {"config_hash", meta.config_hash},
                               {"config", meta.config},
                               {"samples", samples}};
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw DataError("save_dataset: cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

struct StoredDataset {
    Dataset dataset;
    DatasetMeta meta;
};

inline StoredDataset load_dataset(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw DataError("load_dataset: missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_dataset: malformed manifest: " + std::string(e.what()));
    }

    StoredDataset out;
    out.meta.rank = manifest.at("rank").get<int>();
    out.meta.window = manifest.at("window").get<std::array<double, 2>>();
    out.meta.seed = manifest.at("seed").get<uint64_t>();
    out.meta.config_hash = manifest.value("config_hash", std::string());
    out.meta.config = manifest.value("config", nlohmann::json());

    for (const auto& js : manifest.at("samples")) {
        Sample s;
        s.id = js.at("id").get<std::string>();
        s.tag = domain_tag_from(js.at("tag").get<std::string>());
        s.spacing = js.at("spacing").get<std::vector<double>>();
        const std::string img_name = js.at("image").get<std::string>();
        const std::string msk_name = js.value("mask", std::string());

        if (out.meta.rank == 3) {
            auto img = io::read_nifti(dir + "/" + img_name);
            s.image = std::move(img.image);
            if (!msk_name.empty()) {
                auto msk = io::read_nifti(dir + "/" + msk_name);
                Tensor<uint8_t> m(msk.image.shape);
                for (int64_t i = 0; i < m.numel(); ++i) m[i] = msk.image[i] >= 0.5f ? 1 : 0;
                s.label = std::move(m);
            }
        } else {
            auto img = io::read_pgm(dir + "/" + img_name);
            s.image = Tensor<float>(img.pixels.shape);
            for (int64_t i = 0; i < s.image.numel(); ++i)
                s.image[i] = detail::from_window_level(img.pixels[i], out.meta.window);
            if (!msk_name.empty()) {
                auto msk = io::read_pgm(dir + "/" + msk_name);
                Tensor<uint8_t> m(msk.pixels.shape);
                for (int64_t i = 0; i < m.numel(); ++i) m[i] = msk.pixels[i] ? 1 : 0;
                s.label = std::move(m);
            }
        }

        if (js.contains("lesions"))
            for (const auto& jb : js.at("lesions"))
                s.lesions.push_back({jb.at("center").get<std::vector<double>>(),
                                     jb.at("radii").get<std::vector<double>>()});
        out.meta.spacing = s.spacing;
        validate_sample(s);
        out.dataset.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace relcollab::data
