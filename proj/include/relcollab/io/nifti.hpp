#pragma once

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relcollab/core/tensor.hpp"

namespace relcollab::io {

/// Minimal single-file .nii support: float32 voxels plus grid spacing.
/// Covers 2D and 3D images written by this toolkit; little-endian hosts only.

namespace detail {

#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;      // 348
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;        // 16 = float32
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;        // 352
    float scl_slope, scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];           // "n+1\0"
};
#pragma pack(pop)

static_assert(sizeof(Nifti1Header) == 348, "nifti header must be 348 bytes");

}  // namespace detail

/// Writes a float32 volume. `spacing` is mm per axis in tensor-axis order
/// (slowest axis first); the header stores dims fastest-first per the format.
inline void write_nifti(const std::string& path, const Tensor<float>& img,
                        const std::vector<double>& spacing) {
    const int r = img.rank();
    if (r < 1 || r > 3) throw std::invalid_argument("nifti: rank must be 1..3");
    if (spacing.size() != static_cast<size_t>(r))
        throw std::invalid_argument("nifti: spacing rank mismatch");

    detail::Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = static_cast<int16_t>(r);
    h.pixdim[0] = 1.0f;
    for (int a = 0; a < r; ++a) {
        // axis r-1-a of the tensor is dim[a+1] of the file (fastest first)
        h.dim[a + 1] = static_cast<int16_t>(img.shape[r - 1 - a]);
        h.pixdim[a + 1] = static_cast<float>(spacing[r - 1 - a]);
    }
    for (int a = r; a < 7; ++a) h.dim[a + 1] = 1;
    h.datatype = 16;  // float32
    h.bitpix = 32;
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.xyzt_units = 2;  // mm
    std::memcpy(h.magic, "n+1", 4);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("nifti: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const char pad[4] = {0, 0, 0, 0};
    f.write(pad, 4);
    f.write(reinterpret_cast<const char*>(img.ptr()), img.numel() * sizeof(float));
    if (!f) throw std::runtime_error("nifti: write failed: " + path);
}

struct NiftiImage {
    Tensor<float> image;
    std::vector<double> spacing;  // tensor-axis order
};

inline NiftiImage read_nifti(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("nifti: cannot open: " + path);
    detail::Nifti1Header h{};
    f.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!f || h.sizeof_hdr != 348 || std::strncmp(h.magic, "n+1", 3) != 0)
        throw std::runtime_error("nifti: not a single-file nifti-1: " + path);
    if (h.datatype != 16) throw std::runtime_error("nifti: only float32 voxels supported: " + path);

    const int r = h.dim[0];
    if (r < 1 || r > 3) throw std::runtime_error("nifti: unsupported rank: " + path);
    NiftiImage out;
    std::vector<int64_t> shape(r);
    out.spacing.resize(r);
    for (int a = 0; a < r; ++a) {
        shape[r - 1 - a] = h.dim[a + 1];
        out.spacing[r - 1 - a] = h.pixdim[a + 1];
    }
    out.image = Tensor<float>(shape);
    f.seekg(static_cast<std::streamoff>(h.vox_offset), std::ios::beg);
    f.read(reinterpret_cast<char*>(out.image.ptr()), out.image.numel() * sizeof(float));
    if (!f) throw std::runtime_error("nifti: truncated voxel data: " + path);
    return out;
}

}  // namespace relcollab::io
