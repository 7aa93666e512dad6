#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "relcollab/core/tensor.hpp"
#include "relcollab/edt.hpp"

namespace relcollab::metrics {

/// Region and boundary segmentation metrics. Degenerate (empty-set) cases
/// follow the challenge-evaluation convention: both empty -> 1, one empty
/// -> 0, and reports carry a flag whenever a convention fired.

struct MaskPair {
    Tensor<uint8_t> truth;
    Tensor<uint8_t> pred;
    std::vector<double> spacing;  // mm per axis; may be empty if unused
};

inline void check_binary(const Tensor<uint8_t>& m, const char* what) {
    for (int64_t i = 0; i < m.numel(); ++i)
        if (m[i] > 1) throw std::invalid_argument(std::string(what) + ": mask values must be 0/1");
}

/// Dice similarity coefficient 2|G∩S| / (|G|+|S|); both-empty -> 1.
inline double dsc(const uint8_t* g, const uint8_t* s, int64_t n) {
    int64_t inter = 0, gs = 0, ss = 0;
    for (int64_t i = 0; i < n; ++i) {
        inter += g[i] & s[i];
        gs += g[i];
        ss += s[i];
    }
    if (gs + ss == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(gs + ss);
}

inline double dsc(const Tensor<uint8_t>& g, const Tensor<uint8_t>& s) {
    if (!g.same_shape(s)) throw std::invalid_argument("dsc: shape mismatch");
    return dsc(g.ptr(), s.ptr(), g.numel());
}

inline double dsc(const MaskPair& pair) { return dsc(pair.truth, pair.pred); }

/// Surface voxels: foreground with at least one face-adjacent background or
/// out-of-grid neighbour (4-connectivity in 2D, 6 in 3D).
inline Tensor<uint8_t> extract_surface(const Tensor<uint8_t>& mask) {
    const int rank = mask.rank();
    Tensor<uint8_t> surf(mask.shape);
    std::vector<int64_t> stride(rank, 1);
    for (int a = rank - 2; a >= 0; --a) stride[a] = stride[a + 1] * mask.shape[a + 1];
    std::vector<int64_t> idx(rank, 0);
    int64_t flat = 0;
    do {
        if (mask[flat]) {
            bool border = false;
            for (int a = 0; a < rank && !border; ++a) {
                if (idx[a] == 0 || !mask[flat - stride[a]]) border = true;
                else if (idx[a] == mask.shape[a] - 1 || !mask[flat + stride[a]]) border = true;
            }
            surf[flat] = border ? 1 : 0;
        }
        ++flat;
    } while (next_index(idx, mask.shape));
    return surf;
}

/// Normalized surface distance at physical tolerance tau (mm): the fraction
/// of surface voxels of each mask lying within tau of the other mask's
/// surface. Both surfaces empty -> 1; exactly one empty -> 0.
inline double nsd(const MaskPair& pair, double tau_mm) {
    if (!pair.truth.same_shape(pair.pred)) throw std::invalid_argument("nsd: shape mismatch");
    if (pair.spacing.size() != static_cast<size_t>(pair.truth.rank()))
        throw std::invalid_argument("nsd: spacing required (mm per axis)");
    if (!(tau_mm > 0)) throw std::invalid_argument("nsd: tau must be positive");

    Tensor<uint8_t> sg = extract_surface(pair.truth);
    Tensor<uint8_t> ss = extract_surface(pair.pred);
    int64_t ng = 0, ns = 0;
    for (int64_t i = 0; i < sg.numel(); ++i) { ng += sg[i]; ns += ss[i]; }
    if (ng == 0 && ns == 0) return 1.0;
    if (ng == 0 || ns == 0) return 0.0;

    const double tau_sq = tau_mm * tau_mm;
    Tensor<double> dist_to_g = squared_distance_transform(sg, pair.spacing);
    Tensor<double> dist_to_s = squared_distance_transform(ss, pair.spacing);
    int64_t g_in_band = 0, s_in_band = 0;
    for (int64_t i = 0; i < sg.numel(); ++i) {
        if (sg[i] && dist_to_s[i] <= tau_sq) ++g_in_band;
        if (ss[i] && dist_to_g[i] <= tau_sq) ++s_in_band;
    }
    return static_cast<double>(g_in_band + s_in_band) / static_cast<double>(ng + ns);
}

struct SenSpecMae {
    double sen = 0;
    double spec = 0;
    double mae = 0;
    bool sen_defined = true;   // false when truth has no positives (sentinel 1)
    bool spec_defined = true;  // false when truth has no negatives (sentinel 1)
};

/// Sensitivity TP/(TP+FN), specificity TN/(TN+FP) at threshold 0.5, and mean
/// absolute error against the soft prediction.
template <typename T>
SenSpecMae sen_spec_mae(const Tensor<uint8_t>& truth, const Tensor<T>& pred_soft) {
    if (truth.shape != pred_soft.shape) throw std::invalid_argument("sen_spec_mae: shape mismatch");
    int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    double abs_err = 0;
    for (int64_t i = 0; i < truth.numel(); ++i) {
        const bool p = pred_soft[i] >= T(0.5);
        if (truth[i]) { p ? ++tp : ++fn; }
        else          { p ? ++fp : ++tn; }
        abs_err += std::abs(static_cast<double>(pred_soft[i]) - truth[i]);
    }
    SenSpecMae r;
    r.mae = abs_err / static_cast<double>(truth.numel());
    if (tp + fn == 0) { r.sen = 1.0; r.sen_defined = false; }
    else r.sen = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tn + fp == 0) { r.spec = 1.0; r.spec_defined = false; }
    else r.spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
    return r;
}

struct CaseMetrics {
    std::string id;
    double dsc = 0, nsd = 0, sen = 0, spec = 0, mae = 0;
    std::string flags;  // comma-separated degenerate-case markers
};

struct Summary {
    int64_t cases = 0;
    double dsc_mean = 0, dsc_std = 0;
    double nsd_mean = 0, nsd_std = 0;
    double sen_mean = 0, sen_std = 0;
    double spec_mean = 0, spec_std = 0;
    double mae_mean = 0, mae_std = 0;
};

struct MetricReport {
    std::vector<CaseMetrics> rows;

    Summary summarize() const {
        Summary s;
        s.cases = static_cast<int64_t>(rows.size());
        auto stats = [&](auto get, double& mean, double& stddev) {
            if (rows.empty()) return;
            double m = 0;
            for (const auto& r : rows) m += get(r);
            m /= static_cast<double>(rows.size());
            double var = 0;
            for (const auto& r : rows) { const double d = get(r) - m; var += d * d; }
            var /= static_cast<double>(rows.size());
            mean = m;
            stddev = std::sqrt(var);
        };
        stats([](const CaseMetrics& r) { return r.dsc; }, s.dsc_mean, s.dsc_std);
        stats([](const CaseMetrics& r) { return r.nsd; }, s.nsd_mean, s.nsd_std);
        stats([](const CaseMetrics& r) { return r.sen; }, s.sen_mean, s.sen_std);
        stats([](const CaseMetrics& r) { return r.spec; }, s.spec_mean, s.spec_std);
        stats([](const CaseMetrics& r) { return r.mae; }, s.mae_mean, s.mae_std);
        return s;
    }
};

/// One row per case: id, dsc, nsd, sen, spec, mae, flags.
inline void write_csv(std::ostream& os, const MetricReport& report) {
    os << "id,dsc,nsd,sen,spec,mae,flags\n";
    os.precision(9);
    os << std::fixed;
    for (const auto& r : report.rows)
        os << r.id << ',' << r.dsc << ',' << r.nsd << ',' << r.sen << ',' << r.spec << ','
           << r.mae << ',' << r.flags << '\n';
}

/// Full per-case evaluation with degenerate-case flags.
template <typename T>
CaseMetrics evaluate_case(const std::string& id, const Tensor<uint8_t>& truth,
                          const Tensor<T>& pred_soft, const std::vector<double>& spacing,
                          double tau_mm) {
    CaseMetrics c;
    c.id = id;
    Tensor<uint8_t> pred_bin(truth.shape);
    for (int64_t i = 0; i < pred_bin.numel(); ++i) pred_bin[i] = pred_soft[i] >= T(0.5) ? 1 : 0;

    int64_t gsum = 0, ssum = 0;
    for (int64_t i = 0; i < truth.numel(); ++i) { gsum += truth[i]; ssum += pred_bin[i]; }

    std::vector<std::string> flags;
    c.dsc = dsc(truth, pred_bin);
    if (gsum == 0 && ssum == 0) flags.push_back("dsc_both_empty");

    MaskPair pair{truth, pred_bin, spacing};
    c.nsd = nsd(pair, tau_mm);
    if (gsum == 0 && ssum == 0) flags.push_back("nsd_both_empty");
    else if (gsum == 0 || ssum == 0) flags.push_back("nsd_one_empty");

    auto ssm = sen_spec_mae(truth, pred_soft);
    c.sen = ssm.sen;
    c.spec = ssm.spec;
    c.mae = ssm.mae;
    if (!ssm.sen_defined) flags.push_back("sen_absent");
    if (!ssm.spec_defined) flags.push_back("spec_absent");

    for (size_t i = 0; i < flags.size(); ++i) {
        if (i) c.flags += ";";
        c.flags += flags[i];
    }
    return c;
}

}  // namespace relcollab::metrics
