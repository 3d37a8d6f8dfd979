#include "gtaseg/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gtaseg/error.hpp"

namespace gtaseg {

std::int64_t PseudoLabelMap::kept_count() const {
    std::int64_t n = 0;
    for (std::int32_t lab : labels) {
        if (lab != kIgnoreLabel) ++n;
    }
    return n;
}

double PseudoLabelMap::mean_kept_weight() const {
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kIgnoreLabel) continue;
        sum += weights[i];
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

Prediction predict_confidence(const Tensor& logits) {
    if (logits.ndim() != 4) throw DimensionError("predict_confidence expects [B,K,H,W]");
    const int batch = logits.dim(0), kc = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    if (kc < 2) throw DimensionError("predict_confidence needs K >= 2");
    const int hw = h * w;

    Prediction out;
    out.batch = batch;
    out.height = h;
    out.width = w;
    out.pred.resize(static_cast<std::size_t>(batch) * hw);
    out.conf.resize(static_cast<std::size_t>(batch) * hw);
    for (int n = 0; n < batch; ++n) {
        const float* ip = logits.data() + static_cast<std::ptrdiff_t>(n) * kc * hw;
        for (int p = 0; p < hw; ++p) {
            int best = 0;
            float mx = ip[p];
            for (int c = 1; c < kc; ++c) {
                const float v = ip[c * hw + p];
                if (v > mx) {  // strict: ties keep the smaller class index
                    mx = v;
                    best = c;
                }
            }
            double sum = 0.0;
            for (int c = 0; c < kc; ++c) sum += std::exp(static_cast<double>(ip[c * hw + p] - mx));
            const std::size_t pix = static_cast<std::size_t>(n) * hw + p;
            out.pred[pix] = best;
            out.conf[pix] = static_cast<float>(1.0 / sum);  // exp(0)/sum for the argmax channel
        }
    }
    return out;
}

float compute_threshold(const std::vector<float>& conf, float q) {
    if (conf.empty()) throw DataError("compute_threshold: empty confidence collection");
    if (q < 0.0f || q >= 1.0f) throw ConfigError("compute_threshold: quantile must lie in [0,1)");
    if (q == 0.0f) return -std::numeric_limits<float>::infinity();

    std::vector<float> sorted(conf);
    std::sort(sorted.begin(), sorted.end());
    const double pos = static_cast<double>(q) * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return static_cast<float>((1.0 - frac) * sorted[lo] + frac * sorted[lo + 1]);
}

PseudoLabelMap generate_pseudo_labels(const Prediction& prediction, float gamma) {
    if (prediction.pred.size() != prediction.conf.size()) {
        throw DimensionError("generate_pseudo_labels: pred/conf size mismatch");
    }
    PseudoLabelMap map;
    map.batch = prediction.batch;
    map.height = prediction.height;
    map.width = prediction.width;
    map.gamma = gamma;
    map.confidence = prediction.conf;
    map.labels.resize(prediction.pred.size());
    map.weights.assign(prediction.pred.size(), 0.0f);
    std::int64_t kept = 0;
    for (std::size_t i = 0; i < prediction.pred.size(); ++i) {
        if (prediction.conf[i] > gamma) {
            map.labels[i] = prediction.pred[i];
            ++kept;
        } else {
            map.labels[i] = kIgnoreLabel;
        }
    }
    map.kept_fraction =
        prediction.pred.empty() ? 0.0f : static_cast<float>(kept) / static_cast<float>(prediction.pred.size());
    return map;
}

void reweight(PseudoLabelMap& map, const ReweightConfig& cfg) {
    const std::int64_t kept = map.kept_count();
    if (kept == 0) {
        std::fill(map.weights.begin(), map.weights.end(), 0.0f);
        map.zero_kept = true;
        return;
    }
    map.zero_kept = false;
    if (!cfg.enabled) {
        for (std::size_t i = 0; i < map.labels.size(); ++i) {
            map.weights[i] = map.labels[i] == kIgnoreLabel ? 0.0f : 1.0f;
        }
        return;
    }
    if (cfg.tau < 0.0f) throw ConfigError("reweight: tau must be >= 0");
    double denom = 0.0;
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        if (map.labels[i] == kIgnoreLabel) continue;
        denom += static_cast<double>(map.confidence[i]) + cfg.tau;
    }
    const double scale = static_cast<double>(kept) / denom;
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        if (map.labels[i] == kIgnoreLabel) {
            map.weights[i] = 0.0f;
        } else {
            map.weights[i] = static_cast<float>((static_cast<double>(map.confidence[i]) + cfg.tau) * scale);
        }
    }
}

PseudoLabelMap make_pseudo_labels(const Tensor& teacher_logits, const ReweightConfig& cfg,
                                  std::optional<float> fixed_gamma) {
    Prediction pred = predict_confidence(teacher_logits);
    const float gamma = fixed_gamma ? *fixed_gamma : compute_threshold(pred.conf, cfg.quantile);
    PseudoLabelMap map = generate_pseudo_labels(pred, gamma);
    if (!fixed_gamma && map.kept_count() == 0 && !pred.conf.empty()) {
        // All confidences equal: the batch quantile equals every value and the
        // strict > rule would drop everything. Keep all instead.
        const float first = pred.conf.front();
        bool all_equal = true;
        for (float c : pred.conf) {
            if (c != first) {
                all_equal = false;
                break;
            }
        }
        if (all_equal) {
            for (std::size_t i = 0; i < map.labels.size(); ++i) map.labels[i] = pred.pred[i];
            map.kept_fraction = 1.0f;
            map.degenerate_keep_all = true;
        }
    }
    reweight(map, cfg);
    return map;
}

NodeId unsupervised_loss(Graph& g, NodeId logits, const PseudoLabelMap& map) {
    const Tensor& lv = g.value(logits);
    if (lv.ndim() != 4 || lv.dim(0) != map.batch || lv.dim(2) != map.height || lv.dim(3) != map.width) {
        throw DimensionError("unsupervised_loss: logits shape does not match pseudo-label map");
    }
    return weighted_pixel_ce(g, logits, map.labels, map.weights);
}

NodeId supervised_loss(Graph& g, NodeId logits, const std::vector<std::int32_t>& gt_mask) {
    for (std::int32_t lab : gt_mask) {
        if (lab == kIgnoreLabel) continue;
        if (lab < 0 || lab >= g.value(logits).dim(1)) {
            throw DataError("supervised_loss: class id " + std::to_string(lab) + " out of range");
        }
    }
    std::vector<float> unit(gt_mask.size());
    for (std::size_t i = 0; i < gt_mask.size(); ++i) unit[i] = gt_mask[i] == kIgnoreLabel ? 0.0f : 1.0f;
    return weighted_pixel_ce(g, logits, gt_mask, unit);
}

}  // namespace gtaseg
