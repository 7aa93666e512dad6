#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/tensor.hpp"
#include "relcollab/io/pgm.hpp"
#include "relcollab/io/tensor_file.hpp"

namespace relcollab::inspect {

/// Renders serialized relation matrices as three-panel raster plots
/// (matrix A | matrix B | absolute difference) plus a difference-vs-step
/// curve, mirroring the training-dynamics diagnostics.

struct RelationDump {
    int64_t step = 0;
    Tensor<float> general_aux;     // general encoder, auxiliary batch
    Tensor<float> general_target;  // general encoder, target batch
    Tensor<float> target_target;   // target encoder, target batch
};

inline std::vector<int64_t> find_relation_steps(const std::string& run_dir) {
    namespace fs = std::filesystem;
    std::vector<int64_t> steps;
    const fs::path base = fs::path(run_dir) / "relations";
    if (!fs::is_directory(base)) return steps;
    for (const auto& entry : fs::directory_iterator(base)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("step_", 0) == 0)
            steps.push_back(std::stoll(name.substr(5)));
    }
    std::sort(steps.begin(), steps.end());
    return steps;
}

inline RelationDump load_relation_dump(const std::string& run_dir, int64_t step) {
    const std::string dir = run_dir + "/relations/step_" + std::to_string(step);
    RelationDump d;
    d.step = step;
    d.general_aux = io::TensorFileReader(dir + "/r_general_aux.bin").get<float>("r_general_aux");
    d.general_target =
        io::TensorFileReader(dir + "/r_general_target.bin").get<float>("r_general_target");
    d.target_target =
        io::TensorFileReader(dir + "/r_target_target.bin").get<float>("r_target_target");
    return d;
}

inline double frobenius_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace detail {

inline int cell_pixels(int64_t c) { return std::max<int>(2, static_cast<int>(192 / c)); }

// Signed entries in [-1,1] -> grayscale; difference entries -> white-to-red.
inline void paint_matrix(Tensor<uint8_t>& canvas, int64_t y0, int64_t x0,
                         const Tensor<float>& m, int px, bool diff_style) {
    const int64_t c = m.shape[0];
    for (int64_t i = 0; i < c; ++i)
        for (int64_t j = 0; j < c; ++j) {
            uint8_t r, g, b;
            const float v = m[i * c + j];
            if (diff_style) {
                const float t = std::clamp(std::abs(v) / 2.0f, 0.0f, 1.0f);
                r = 255;
                g = b = static_cast<uint8_t>(255 - 255 * t);
            } else {
                const float t = std::clamp((v + 1.0f) / 2.0f, 0.0f, 1.0f);
                r = g = b = static_cast<uint8_t>(255 * t);
            }
            for (int dy = 0; dy < px; ++dy)
                for (int dx = 0; dx < px; ++dx) {
                    const int64_t y = y0 + i * px + dy;
                    const int64_t x = x0 + j * px + dx;
                    uint8_t* p = canvas.ptr() + (y * canvas.shape[1] + x) * 3;
                    p[0] = r;
                    p[1] = g;
                    p[2] = b;
                }
        }
}

}  // namespace detail

/// Three panels side by side: A, B and |A - B|.
inline Tensor<uint8_t> render_pair_panels(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape != b.shape || a.rank() != 2) throw DataError("render: matrix shape mismatch");
    const int64_t c = a.shape[0];
    const int px = detail::cell_pixels(c);
    const int64_t panel = c * px;
    const int64_t gap = 4;
    Tensor<uint8_t> canvas({panel, 3 * panel + 2 * gap, 3});
    canvas.fill(255);
    Tensor<float> diff(a.shape);
    for (int64_t i = 0; i < a.numel(); ++i) diff[i] = std::abs(a[i] - b[i]);
    detail::paint_matrix(canvas, 0, 0, a, px, false);
    detail::paint_matrix(canvas, 0, panel + gap, b, px, false);
    detail::paint_matrix(canvas, 0, 2 * (panel + gap), diff, px, true);
    return canvas;
}

/// Simple polyline chart of the two difference norms over steps.
inline Tensor<uint8_t> render_curve(const std::vector<int64_t>& steps,
                                    const std::vector<double>& cross_domain,
                                    const std::vector<double>& encoder_gap) {
    const int64_t W = 480, H = 320, margin = 24;
    Tensor<uint8_t> canvas({H, W, 3});
    canvas.fill(255);
    auto put = [&](int64_t y, int64_t x, uint8_t r, uint8_t g, uint8_t b) {
        if (y < 0 || y >= H || x < 0 || x >= W) return;
        uint8_t* p = canvas.ptr() + (y * W + x) * 3;
        p[0] = r; p[1] = g; p[2] = b;
    };
    for (int64_t x = margin; x < W - margin; ++x) put(H - margin, x, 0, 0, 0);
    for (int64_t y = margin; y < H - margin; ++y) put(y, margin, 0, 0, 0);
    if (steps.empty()) return canvas;

    double vmax = 1e-9;
    for (double v : cross_domain) vmax = std::max(vmax, v);
    for (double v : encoder_gap) vmax = std::max(vmax, v);
    const double smax = static_cast<double>(std::max<int64_t>(steps.back(), 1));

    auto draw_series = [&](const std::vector<double>& vals, uint8_t r, uint8_t g, uint8_t b) {
        int64_t prev_x = -1, prev_y = -1;
        for (size_t i = 0; i < steps.size(); ++i) {
            const int64_t x =
                margin + static_cast<int64_t>((W - 2 * margin - 1) * steps[i] / smax);
            const int64_t y =
                H - margin - static_cast<int64_t>((H - 2 * margin - 1) * vals[i] / vmax);
            if (prev_x >= 0) {
                const int64_t n = std::max(std::abs(x - prev_x), std::abs(y - prev_y)) + 1;
                for (int64_t k = 0; k <= n; ++k)
                    put(prev_y + (y - prev_y) * k / n, prev_x + (x - prev_x) * k / n, r, g, b);
            }
            prev_x = x;
            prev_y = y;
        }
    };
    draw_series(cross_domain, 40, 90, 200);
    draw_series(encoder_gap, 200, 60, 40);
    return canvas;
}

struct InspectResult {
    std::vector<int64_t> steps_rendered;
    std::vector<int64_t> steps_missing;
    std::string curve_csv;
};

/// Renders the two matrix pairings per requested step (skipping missing
/// steps with a warning) and the difference-vs-step curve over whatever was
/// found. Returns the list of rendered/missing steps for exit-code handling.
inline InspectResult inspect_run(const std::string& run_dir, std::vector<int64_t> steps,
                                 const std::string& out_dir, std::ostream& warnings) {
    namespace fs = std::filesystem;
    if (steps.empty()) steps = find_relation_steps(run_dir);
    fs::create_directories(out_dir);

    InspectResult result;
    std::vector<double> cross_domain, encoder_gap;
    for (int64_t step : steps) {
        const std::string dir = run_dir + "/relations/step_" + std::to_string(step);
        if (!fs::exists(dir + "/r_general_aux.bin")) {
            warnings << "warning: no relation snapshot for step " << step << ", skipping\n";
            result.steps_missing.push_back(step);
            continue;
        }
        RelationDump d = load_relation_dump(run_dir, step);
        io::write_ppm(out_dir + "/cross_domain_step_" + std::to_string(step) + ".ppm",
                      render_pair_panels(d.general_aux, d.general_target));
        io::write_ppm(out_dir + "/encoder_gap_step_" + std::to_string(step) + ".ppm",
                      render_pair_panels(d.general_target, d.target_target));
        cross_domain.push_back(frobenius_diff(d.general_aux, d.general_target));
        encoder_gap.push_back(frobenius_diff(d.general_target, d.target_target));
        result.steps_rendered.push_back(step);
    }

    result.curve_csv = out_dir + "/relation_difference_curve.csv";
    std::ofstream csv(result.curve_csv);
    csv << "step,cross_domain_frob,encoder_gap_frob\n";
    csv.precision(9);
    for (size_t i = 0; i < result.steps_rendered.size(); ++i)
        csv << result.steps_rendered[i] << ',' << cross_domain[i] << ',' << encoder_gap[i] << '\n';
    io::write_ppm(out_dir + "/relation_difference_curve.ppm",
                  render_curve(result.steps_rendered, cross_domain, encoder_gap));
    return result;
}

}  // namespace relcollab::inspect
