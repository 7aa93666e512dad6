#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relcollab/core/errors.hpp"
#include "relcollab/core/tensor.hpp"

namespace relcollab::data {

enum class DomainTag { target_labeled, target_unlabeled, auxiliary };

inline const char* to_string(DomainTag t) {
    switch (t) {
        case DomainTag::target_labeled: return "target_labeled";
        case DomainTag::target_unlabeled: return "target_unlabeled";
        case DomainTag::auxiliary: return "auxiliary";
    }
    return "?";
}

inline DomainTag domain_tag_from(const std::string& s) {
    if (s == "target_labeled") return DomainTag::target_labeled;
    if (s == "target_unlabeled") return DomainTag::target_unlabeled;
    if (s == "auxiliary") return DomainTag::auxiliary;
    throw DataError("unknown domain tag: " + s);
}

/// Geometry of one synthesized lesion blob (ellipsoid in voxel coordinates).
struct LesionBlob {
    std::vector<double> center;
    std::vector<double> radii;
};

/// One image with optional mask. Images are [H,W] or [D,H,W] scalar grids.
struct Sample {
    std::string id;
    Tensor<float> image;
    std::optional<Tensor<uint8_t>> label;
    std::vector<double> spacing;  // mm per axis
    DomainTag tag = DomainTag::target_labeled;
    std::vector<LesionBlob> lesions;  // synthesis geometry, empty for real data
    std::string preprocess_note;      // transform record, set by preprocess()

    /// The only label accessor the loss path may use. Unlabeled target
    /// samples never expose a mask here, even if ground truth exists for
    /// evaluation purposes.
    const std::optional<Tensor<uint8_t>>& supervised_label() const {
        static const std::optional<Tensor<uint8_t>> none;
        if (tag == DomainTag::target_unlabeled) return none;
        return label;
    }

    int rank() const { return image.rank(); }
};

inline void validate_sample(const Sample& s) {
    if (s.label && s.label->shape != s.image.shape)
        throw DataError("sample " + s.id + ": label/image shape mismatch");
    if (s.spacing.size() != static_cast<size_t>(s.image.rank()))
        throw DataError("sample " + s.id + ": spacing rank mismatch");
    for (double sp : s.spacing)
        if (!(sp > 0)) throw DataError("sample " + s.id + ": spacing must be positive");
    if (s.label)
        for (int64_t i = 0; i < s.label->numel(); ++i)
            if ((*s.label)[i] > 1) throw DataError("sample " + s.id + ": label values must be 0/1");
}

/// Immutable after construction; safe for concurrent reads.
struct Dataset {
    std::vector<Sample> samples;

    std::vector<const Sample*> by_tag(DomainTag t) const {
        std::vector<const Sample*> out;
        for (const auto& s : samples)
            if (s.tag == t) out.push_back(&s);
        return out;
    }

    const Sample* find(const std::string& id) const {
        for (const auto& s : samples)
            if (s.id == id) return &s;
        return nullptr;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.id);
        return out;
    }
};

/// A synchronized pair of same-size batches consumed by one training step.
/// All elements are cropped/padded to the configured patch shape.
struct BatchPair {
    std::vector<Sample> target;
    std::vector<Sample> auxiliary;
};

}  // namespace relcollab::data
