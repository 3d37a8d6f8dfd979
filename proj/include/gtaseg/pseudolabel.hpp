#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gtaseg/graph.hpp"
#include "gtaseg/tensor.hpp"

namespace gtaseg {

// Hard per-pixel predictions with their confidences for one batch.
struct Prediction {
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> pred;  // argmax class per pixel
    std::vector<float> conf;         // max softmax probability per pixel

    std::size_t pixel_count() const { return pred.size(); }
};

// Thresholded, re-weighted pseudo labels for one unlabeled batch.
// Invariants: label == kIgnoreLabel <=> weight == 0, and after reweight()
// the kept weights sum to the kept-pixel count.
struct PseudoLabelMap {
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;
    std::vector<float> confidence;
    std::vector<float> weights;
    float gamma = 0.0f;
    float kept_fraction = 0.0f;
    bool degenerate_keep_all = false;  // equal-confidence fallback fired
    bool zero_kept = false;            // nothing survived the threshold

    std::int64_t kept_count() const;
    double mean_kept_weight() const;
};

struct ReweightConfig {
    bool enabled = true;
    float tau = 1.0f;
    float quantile = 0.2f;
};

// argmax class and max softmax probability per pixel; ties break toward the
// smaller class index.
Prediction predict_confidence(const Tensor& logits);

// q-quantile (linear interpolation between order statistics) of the batch
// confidences. q == 0 keeps everything (returns -inf).
float compute_threshold(const std::vector<float>& conf, float q);

// label = pred where conf > gamma, kIgnoreLabel otherwise. Weights unset.
PseudoLabelMap generate_pseudo_labels(const Prediction& prediction, float gamma);

// Fills weights: (c + tau) * n_kept / sum_kept(c + tau) on kept pixels, zero
// elsewhere; plain 1.0 on kept pixels when disabled.
void reweight(PseudoLabelMap& map, const ReweightConfig& cfg);

// Full teacher-side pipeline: confidence -> threshold (quantile of this
// batch, or the fixed gamma override) -> labels -> weights. When the quantile
// threshold degenerates (all confidences equal), keeps every pixel.
PseudoLabelMap make_pseudo_labels(const Tensor& teacher_logits, const ReweightConfig& cfg,
                                  std::optional<float> fixed_gamma = std::nullopt);

// Weighted cross-entropy of student/GTA logits against the map (zero loss,
// zero gradient when nothing was kept).
NodeId unsupervised_loss(Graph& g, NodeId logits, const PseudoLabelMap& map);

// Mean pixel cross-entropy against ground truth.
NodeId supervised_loss(Graph& g, NodeId logits, const std::vector<std::int32_t>& gt_mask);

}  // namespace gtaseg
