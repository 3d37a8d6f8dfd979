#pragma once

#include <cstdint>
#include <vector>

#include "gtaseg/tensor.hpp"

namespace gtaseg {

struct SegSample {
    Tensor image;                     // [3,H,W], values in [0,1]
    std::vector<std::int32_t> mask;   // H*W class ids in [0,K)
    std::int32_t id = 0;
};

struct DatasetSplit {
    std::vector<SegSample> labeled;
    std::vector<SegSample> unlabeled;  // masks retained for analysis, hidden from training
    std::vector<SegSample> heldout;
    int classes = 0;
    int image_size = 0;
};

struct IouReport {
    std::vector<double> per_class_iou;   // meaningful where class_defined
    std::vector<bool> class_defined;     // class appears in prediction or ground truth
    double miou = 0.0;
};

// K x K pixel confusion counts, accumulated image by image in any order.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes);

    void add(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt);

    // Per-class intersection-over-union; classes absent from both prediction
    // and ground truth are excluded from the mean.
    IouReport iou() const;

    std::int64_t total() const;
    std::int64_t count(int gt, int pred) const { return mat_[static_cast<std::size_t>(gt * classes_ + pred)]; }

private:
    int classes_;
    std::vector<std::int64_t> mat_;  // [gt][pred]
};

// Images with 1-3 non-overlapping shapes (square, disk, triangle as classes
// 1..K-1) on a textured noise background (class 0). K in [2,4]. Each sample is
// a pure function of (seed, id).
std::vector<SegSample> generate(std::uint64_t seed, int n, int classes, int size = 32);

// Deterministic shuffled partition into labeled/unlabeled/heldout; the
// labeled set is adjusted so every class appears in at least one of its
// masks.
DatasetSplit split(const std::vector<SegSample>& samples, int n_labeled, int n_heldout,
                   std::uint64_t seed, int classes, int image_size);

IouReport miou(const std::vector<std::vector<std::int32_t>>& pred_masks,
               const std::vector<std::vector<std::int32_t>>& gt_masks, int classes);

}  // namespace gtaseg
