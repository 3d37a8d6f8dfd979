#include "gtaseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtaseg/error.hpp"
#include "gtaseg/rng.hpp"

namespace gtaseg {

namespace {

struct ShapeSpec {
    int type;  // class id 1..K-1: 1 square, 2 disk, 3 triangle
    int cx, cy, half;
};

bool covers(const ShapeSpec& s, int x, int y) {
    const int dx = x - s.cx;
    const int dy = y - s.cy;
    switch (s.type) {
        case 1:
            return std::abs(dx) <= s.half && std::abs(dy) <= s.half;
        case 2:
            return dx * dx + dy * dy <= s.half * s.half;
        default: {
            // upward isosceles triangle: apex at cy - half
            const int row = dy + s.half;
            if (row < 0 || row > 2 * s.half) return false;
            return std::abs(dx) * 2 <= row;
        }
    }
}

bool boxes_overlap(const ShapeSpec& a, const ShapeSpec& b) {
    // 1px margin keeps shapes visually separated
    return std::abs(a.cx - b.cx) <= a.half + b.half + 1 && std::abs(a.cy - b.cy) <= a.half + b.half + 1;
}

SegSample render(std::uint64_t seed, std::int32_t id, int classes, int size) {
    Rng rng(mix_seed(mix_seed(seed, 0xDA7AULL), static_cast<std::uint64_t>(id)));

    SegSample sample;
    sample.id = id;
    sample.image = Tensor({3, size, size});
    sample.mask.assign(static_cast<std::size_t>(size) * size, 0);

    // background: tinted gray with a low-frequency sinusoid texture
    const float base = rng.uniform(0.25f, 0.55f);
    float tint[3];
    for (float& t : tint) t = rng.uniform(-0.05f, 0.05f);
    const float amp = rng.uniform(0.04f, 0.10f);
    const float fx = rng.uniform(0.5f, 2.0f);
    const float fy = rng.uniform(0.5f, 2.0f);
    const float phase = rng.uniform(0.0f, 6.2831853f);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const float tex = amp * std::sin(6.2831853f * (fx * x + fy * y) / static_cast<float>(size) + phase);
            for (int c = 0; c < 3; ++c) {
                sample.image[(static_cast<std::int64_t>(c) * size + y) * size + x] = base + tint[c] + tex;
            }
        }
    }

    // shape classes separate mostly by color; jitter keeps them overlapping
    // enough that limited labels underdetermine the boundary
    static const float kBaseColor[3][3] = {
        {0.72f, 0.38f, 0.38f}, {0.38f, 0.72f, 0.38f}, {0.38f, 0.38f, 0.72f}};

    std::vector<ShapeSpec> placed;
    const int target = rng.uniform_int(1, 3);
    for (int s = 0; s < target; ++s) {
        const int type = classes == 2 ? 1 : rng.uniform_int(1, classes - 1);
        const int half = rng.uniform_int(4, 9);
        ShapeSpec spec{type, 0, 0, half};
        bool ok = false;
        for (int attempt = 0; attempt < 6 && !ok; ++attempt) {
            spec.cx = rng.uniform_int(0, size - 1);
            spec.cy = rng.uniform_int(0, size - 1);
            if (spec.cx - half < 0 || spec.cx + half >= size || spec.cy - half < 0 || spec.cy + half >= size) {
                continue;
            }
            ok = true;
            for (const auto& other : placed) {
                if (boxes_overlap(spec, other)) {
                    ok = false;
                    break;
                }
            }
        }
        if (!ok) continue;  // placement failed; image may end up background-only
        placed.push_back(spec);

        float color[3];
        for (int c = 0; c < 3; ++c) {
            color[c] = kBaseColor[spec.type - 1][c] + rng.uniform(-0.18f, 0.18f);
        }
        for (int y = spec.cy - half; y <= spec.cy + half; ++y) {
            for (int x = spec.cx - half; x <= spec.cx + half; ++x) {
                if (!covers(spec, x, y)) continue;
                sample.mask[static_cast<std::size_t>(y) * size + x] = spec.type;
                for (int c = 0; c < 3; ++c) {
                    sample.image[(static_cast<std::int64_t>(c) * size + y) * size + x] = color[c];
                }
            }
        }
    }

    // additive pixel noise, then clamp to [0,1]
    for (std::int64_t i = 0; i < sample.image.size(); ++i) {
        const float v = sample.image[i] + rng.normal(0.05f);
        sample.image[i] = std::clamp(v, 0.0f, 1.0f);
    }
    return sample;
}

}  // namespace

std::vector<SegSample> generate(std::uint64_t seed, int n, int classes, int size) {
    if (classes < 2) throw ConfigError("generate: classes must be >= 2");
    if (classes > 4) throw ConfigError("generate: only 3 shape classes defined, classes must be <= 4");
    if (n < 1) throw ConfigError("generate: n must be >= 1");
    if (size < 8) throw ConfigError("generate: size must be >= 8");

    std::vector<SegSample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (int id = 0; id < n; ++id) {
        samples.push_back(render(seed, id, classes, size));
    }
    return samples;
}

DatasetSplit split(const std::vector<SegSample>& samples, int n_labeled, int n_heldout,
                   std::uint64_t seed, int classes, int image_size) {
    const int n = static_cast<int>(samples.size());
    if (n_labeled < 1 || n_heldout < 0 || n_labeled + n_heldout > n) {
        throw DataError("split: need n_labeled >= 1 and n_labeled + n_heldout <= sample count");
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x511ULL));
    rng.shuffle(order);

    DatasetSplit out;
    out.classes = classes;
    out.image_size = image_size;
    for (int i = 0; i < n_heldout; ++i) out.heldout.push_back(samples[static_cast<std::size_t>(order[i])]);

    std::vector<int> pool(order.begin() + n_heldout, order.end());
    auto has_class = [&](int idx, int c) {
        for (std::int32_t v : samples[static_cast<std::size_t>(idx)].mask) {
            if (v == c) return true;
        }
        return false;
    };

    // stratify: cover every class first, then fill in shuffle order
    std::vector<char> taken(pool.size(), 0);
    std::vector<int> labeled_idx;
    for (int c = 0; c < classes; ++c) {
        bool covered = false;
        for (int idx : labeled_idx) {
            if (has_class(idx, c)) {
                covered = true;
                break;
            }
        }
        if (covered) continue;
        bool found = false;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!taken[i] && has_class(pool[i], c)) {
                taken[i] = 1;
                labeled_idx.push_back(pool[i]);
                found = true;
                break;
            }
        }
        if (!found || static_cast<int>(labeled_idx.size()) > n_labeled) {
            throw DataError("split: cannot stratify labeled set to cover class " + std::to_string(c));
        }
    }
    for (std::size_t i = 0; i < pool.size() && static_cast<int>(labeled_idx.size()) < n_labeled; ++i) {
        if (!taken[i]) {
            taken[i] = 1;
            labeled_idx.push_back(pool[i]);
        }
    }

    std::vector<char> in_labeled(static_cast<std::size_t>(n), 0);
    for (int idx : labeled_idx) {
        in_labeled[static_cast<std::size_t>(idx)] = 1;
        out.labeled.push_back(samples[static_cast<std::size_t>(idx)]);
    }
    for (int idx : pool) {
        if (!in_labeled[static_cast<std::size_t>(idx)]) out.unlabeled.push_back(samples[static_cast<std::size_t>(idx)]);
    }
    return out;
}

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
    if (classes < 2) throw DataError("ConfusionMatrix: classes must be >= 2");
    mat_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt) {
    if (pred.size() != gt.size()) throw DimensionError("ConfusionMatrix: pred/gt size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::int32_t p = pred[i];
        const std::int32_t t = gt[i];
        if (p < 0 || p >= classes_ || t < 0 || t >= classes_) {
            throw DataError("ConfusionMatrix: class id outside [0,K)");
        }
        ++mat_[static_cast<std::size_t>(t * classes_ + p)];
    }
}

IouReport ConfusionMatrix::iou() const {
    IouReport rep;
    rep.per_class_iou.assign(static_cast<std::size_t>(classes_), 0.0);
    rep.class_defined.assign(static_cast<std::size_t>(classes_), false);
    double acc = 0.0;
    int defined = 0;
    for (int c = 0; c < classes_; ++c) {
        std::int64_t tp = count(c, c);
        std::int64_t fp = 0, fn = 0;
        for (int o = 0; o < classes_; ++o) {
            if (o == c) continue;
            fp += count(o, c);
            fn += count(c, o);
        }
        const std::int64_t denom = tp + fp + fn;
        if (denom == 0) continue;  // absent from both pred and gt
        rep.class_defined[static_cast<std::size_t>(c)] = true;
        rep.per_class_iou[static_cast<std::size_t>(c)] =
            static_cast<double>(tp) / static_cast<double>(denom);
        acc += rep.per_class_iou[static_cast<std::size_t>(c)];
        ++defined;
    }
    rep.miou = defined == 0 ? 0.0 : acc / static_cast<double>(defined);
    return rep;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (std::int64_t v : mat_) t += v;
    return t;
}

IouReport miou(const std::vector<std::vector<std::int32_t>>& pred_masks,
               const std::vector<std::vector<std::int32_t>>& gt_masks, int classes) {
    if (pred_masks.size() != gt_masks.size()) throw DimensionError("miou: count mismatch");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < pred_masks.size(); ++i) cm.add(pred_masks[i], gt_masks[i]);
    return cm.iou();
}

}  // namespace gtaseg
