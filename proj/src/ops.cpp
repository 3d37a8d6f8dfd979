#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "gtaseg/error.hpp"
#include "gtaseg/graph.hpp"

namespace gtaseg {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

// log(1e-12); probabilities are clamped here before the log.
constexpr float kMinLogProb = -27.631021115928547f;

// Fills one [Cin*k*k, H*W] column matrix for a single image (zero padding).
void im2col(const float* image, int cin, int h, int w, int k, float* col) {
    const int pad = k / 2;
    const int hw = h * w;
    for (int ci = 0; ci < cin; ++ci) {
        const float* plane = image + static_cast<std::ptrdiff_t>(ci) * hw;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                float* row = col + (static_cast<std::ptrdiff_t>(ci) * k * k + dy * k + dx) * hw;
                const int sy = dy - pad;
                const int sx = dx - pad;
                for (int y = 0; y < h; ++y) {
                    float* dst = row + static_cast<std::ptrdiff_t>(y) * w;
                    const int yy = y + sy;
                    if (yy < 0 || yy >= h) {
                        std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(w));
                        continue;
                    }
                    const float* src = plane + static_cast<std::ptrdiff_t>(yy) * w;
                    const int xlo = std::max(0, -sx);
                    const int xhi = std::min(w, w - sx);
                    if (xlo > 0) std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(xlo));
                    if (xhi > xlo) {
                        std::memcpy(dst + xlo, src + xlo + sx,
                                    sizeof(float) * static_cast<std::size_t>(xhi - xlo));
                    }
                    if (xhi < w) {
                        std::memset(dst + xhi, 0, sizeof(float) * static_cast<std::size_t>(w - xhi));
                    }
                }
            }
        }
    }
}

// Scatter-add of a column-matrix gradient back onto the input image gradient.
void col2im_add(const float* col, int cin, int h, int w, int k, float* image_grad) {
    const int pad = k / 2;
    const int hw = h * w;
    for (int ci = 0; ci < cin; ++ci) {
        float* plane = image_grad + static_cast<std::ptrdiff_t>(ci) * hw;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                const float* row = col + (static_cast<std::ptrdiff_t>(ci) * k * k + dy * k + dx) * hw;
                const int sy = dy - pad;
                const int sx = dx - pad;
                for (int y = 0; y < h; ++y) {
                    const int yy = y + sy;
                    if (yy < 0 || yy >= h) continue;
                    const float* src = row + static_cast<std::ptrdiff_t>(y) * w;
                    float* dst = plane + static_cast<std::ptrdiff_t>(yy) * w;
                    const int xlo = std::max(0, -sx);
                    const int xhi = std::min(w, w - sx);
                    for (int x = xlo; x < xhi; ++x) dst[x + sx] += src[x];
                }
            }
        }
    }
}

}  // namespace

NodeId conv2d(Graph& g, NodeId input, NodeId kernel, NodeId bias) {
    const Tensor& in = g.value(input);
    const Tensor& ker = g.value(kernel);
    const Tensor& b = g.value(bias);
    if (in.ndim() != 4 || ker.ndim() != 4 || b.ndim() != 1) {
        throw DimensionError("conv2d expects input[B,Cin,H,W], kernel[Cout,Cin,k,k], bias[Cout]");
    }
    const int batch = in.dim(0), cin = in.dim(1), h = in.dim(2), w = in.dim(3);
    const int cout = ker.dim(0), k = ker.dim(2);
    if (ker.dim(1) != cin) {
        throw DimensionError("conv2d channel mismatch: input Cin=" + std::to_string(cin) +
                             ", kernel Cin=" + std::to_string(ker.dim(1)));
    }
    if (ker.dim(3) != k || k % 2 == 0) {
        throw DimensionError("conv2d kernel must be square with odd size, got " + shape_str(ker.shape()));
    }
    if (b.dim(0) != cout) {
        throw DimensionError("conv2d bias length must equal Cout");
    }

    const int hw = h * w;
    const int kk = cin * k * k;
    Tensor out({batch, cout, h, w});

    // Column matrices are kept for the backward weight gradient; a
    // non-recording graph reuses one per-image scratch instead.
    auto cols = std::make_shared<FloatBuffer>(
        static_cast<std::size_t>(g.recording() ? batch : 1) * kk * hw);
    MapConstMat wmat(ker.data(), cout, kk);
    Eigen::Map<const Eigen::VectorXf> bvec(b.data(), cout);
    for (int n = 0; n < batch; ++n) {
        float* col = cols->data() + static_cast<std::ptrdiff_t>(g.recording() ? n : 0) * kk * hw;
        im2col(in.data() + static_cast<std::ptrdiff_t>(n) * cin * hw, cin, h, w, k, col);
        MapMat outmat(out.data() + static_cast<std::ptrdiff_t>(n) * cout * hw, cout, hw);
        outmat.noalias() = wmat * MapConstMat(col, kk, hw);
        outmat.colwise() += bvec;
    }

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);

    auto backward = [cols, batch, cin, cout, h, w, k, kk, hw, input, kernel, bias](Graph& gr,
                                                                                    NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        Tensor& gin = gr.grad_buffer(input);
        Tensor& gker = gr.grad_buffer(kernel);
        Tensor& gbias = gr.grad_buffer(bias);
        MapMat gw(gker.data(), cout, kk);
        Eigen::Map<Eigen::VectorXf> gb(gbias.data(), cout);
        const Tensor& ker_v = gr.value(kernel);
        MapConstMat wmat(ker_v.data(), cout, kk);
        FloatBuffer colgrad(static_cast<std::size_t>(kk) * hw);
        for (int n = 0; n < batch; ++n) {
            MapConstMat go(gout.data() + static_cast<std::ptrdiff_t>(n) * cout * hw, cout, hw);
            MapConstMat col(cols->data() + static_cast<std::ptrdiff_t>(n) * kk * hw, kk, hw);
            gw.noalias() += go * col.transpose();
            gb.noalias() += go.rowwise().sum();
            MapMat cg(colgrad.data(), kk, hw);
            cg.noalias() = wmat.transpose() * go;
            col2im_add(colgrad.data(), cin, h, w, k,
                       gin.data() + static_cast<std::ptrdiff_t>(n) * cin * hw);
        }
    };
    return g.add_node(std::move(out), {input, kernel, bias}, std::move(backward));
}

NodeId relu(Graph& g, NodeId x) {
    const Tensor& in = g.value(x);
    Tensor out(in.shape());
    const std::int64_t n = in.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto backward = [x, n](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        const Tensor& in_v = gr.value(x);
        Tensor& gin = gr.grad_buffer(x);
        for (std::int64_t i = 0; i < n; ++i) {
            if (in_v[i] > 0.0f) gin[i] += gout[i];
        }
    };
    return g.add_node(std::move(out), {x}, std::move(backward));
}

NodeId softmax_channel(Graph& g, NodeId logits) {
    const Tensor& in = g.value(logits);
    if (in.ndim() != 4) throw DimensionError("softmax_channel expects [B,K,H,W]");
    const int batch = in.dim(0), kc = in.dim(1), hw = in.dim(2) * in.dim(3);
    if (kc < 2) throw DimensionError("softmax_channel needs K >= 2");

    Tensor out(in.shape());
    for (int n = 0; n < batch; ++n) {
        const float* ip = in.data() + static_cast<std::ptrdiff_t>(n) * kc * hw;
        float* op = out.data() + static_cast<std::ptrdiff_t>(n) * kc * hw;
        for (int p = 0; p < hw; ++p) {
            float mx = ip[p];
            for (int c = 1; c < kc; ++c) mx = std::max(mx, ip[c * hw + p]);
            double sum = 0.0;
            for (int c = 0; c < kc; ++c) {
                float e = std::exp(ip[c * hw + p] - mx);
                op[c * hw + p] = e;
                sum += e;
            }
            const float inv = static_cast<float>(1.0 / sum);
            for (int c = 0; c < kc; ++c) op[c * hw + p] *= inv;
        }
    }

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto backward = [logits, batch, kc, hw](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        const Tensor& probs = gr.value(self);
        Tensor& gin = gr.grad_buffer(logits);
        for (int n = 0; n < batch; ++n) {
            const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(n) * kc * hw;
            for (int p = 0; p < hw; ++p) {
                double dot = 0.0;
                for (int c = 0; c < kc; ++c) {
                    dot += static_cast<double>(gout[base + c * hw + p]) * probs[base + c * hw + p];
                }
                for (int c = 0; c < kc; ++c) {
                    const std::ptrdiff_t i = base + c * hw + p;
                    gin[i] += probs[i] * (gout[i] - static_cast<float>(dot));
                }
            }
        }
    };
    return g.add_node(std::move(out), {logits}, std::move(backward));
}

NodeId weighted_pixel_ce(Graph& g, NodeId logits, const std::vector<std::int32_t>& labels,
                         const std::vector<float>& weights) {
    const Tensor& in = g.value(logits);
    if (in.ndim() != 4) throw DimensionError("weighted_pixel_ce expects logits [B,K,H,W]");
    const int batch = in.dim(0), kc = in.dim(1), hw = in.dim(2) * in.dim(3);
    const std::size_t npix = static_cast<std::size_t>(batch) * hw;
    if (labels.size() != npix || weights.size() != npix) {
        throw DimensionError("weighted_pixel_ce labels/weights must have one entry per pixel");
    }

    std::int64_t kept = 0;
    for (std::size_t i = 0; i < npix; ++i) {
        const std::int32_t lab = labels[i];
        if (lab == kIgnoreLabel) {
            if (weights[i] != 0.0f) {
                throw ContractError("nonzero weight on an IGNORE pixel");
            }
            continue;
        }
        if (lab < 0 || lab >= kc) {
            throw DataError("pixel label " + std::to_string(lab) + " outside [0," + std::to_string(kc) + ")");
        }
        ++kept;
    }
    const double norm = 1.0 / static_cast<double>(std::max<std::int64_t>(1, kept));

    double acc = 0.0;
    for (int n = 0; n < batch; ++n) {
        const float* ip = in.data() + static_cast<std::ptrdiff_t>(n) * kc * hw;
        for (int p = 0; p < hw; ++p) {
            const std::size_t pix = static_cast<std::size_t>(n) * hw + p;
            const std::int32_t lab = labels[pix];
            if (lab == kIgnoreLabel) continue;
            float mx = ip[p];
            for (int c = 1; c < kc; ++c) mx = std::max(mx, ip[c * hw + p]);
            double sum = 0.0;
            for (int c = 0; c < kc; ++c) sum += std::exp(static_cast<double>(ip[c * hw + p] - mx));
            float logp = static_cast<float>(ip[lab * hw + p] - mx - std::log(sum));
            logp = std::max(logp, kMinLogProb);
            acc += static_cast<double>(weights[pix]) * -static_cast<double>(logp);
        }
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc * norm));

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto lab_copy = std::make_shared<std::vector<std::int32_t>>(labels);
    auto w_copy = std::make_shared<std::vector<float>>(weights);
    auto backward = [logits, lab_copy, w_copy, batch, kc, hw, norm](Graph& gr, NodeId self) {
        const float gout = gr.grad_buffer(self)[0];
        const Tensor& in_v = gr.value(logits);
        Tensor& gin = gr.grad_buffer(logits);
        for (int n = 0; n < batch; ++n) {
            const float* ip = in_v.data() + static_cast<std::ptrdiff_t>(n) * kc * hw;
            float* gp = gin.data() + static_cast<std::ptrdiff_t>(n) * kc * hw;
            for (int p = 0; p < hw; ++p) {
                const std::size_t pix = static_cast<std::size_t>(n) * hw + p;
                const std::int32_t lab = (*lab_copy)[pix];
                if (lab == kIgnoreLabel) continue;
                float mx = ip[p];
                for (int c = 1; c < kc; ++c) mx = std::max(mx, ip[c * hw + p]);
                double sum = 0.0;
                for (int c = 0; c < kc; ++c) sum += std::exp(static_cast<double>(ip[c * hw + p] - mx));
                const float coef = gout * (*w_copy)[pix] * static_cast<float>(norm);
                const float inv = static_cast<float>(1.0 / sum);
                for (int c = 0; c < kc; ++c) {
                    float prob = std::exp(ip[c * hw + p] - mx) * inv;
                    gp[c * hw + p] += coef * (prob - (c == lab ? 1.0f : 0.0f));
                }
            }
        }
    };
    return g.add_node(std::move(out), {logits}, std::move(backward));
}

NodeId sum(Graph& g, NodeId x) {
    const Tensor& in = g.value(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < in.size(); ++i) acc += in[i];
    Tensor out = Tensor::scalar(static_cast<float>(acc));

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto backward = [x](Graph& gr, NodeId self) {
        const float gout = gr.grad_buffer(self)[0];
        Tensor& gin = gr.grad_buffer(x);
        for (std::int64_t i = 0; i < gin.size(); ++i) gin[i] += gout;
    };
    return g.add_node(std::move(out), {x}, std::move(backward));
}

NodeId dot(Graph& g, NodeId x, const Tensor& coeffs) {
    const Tensor& in = g.value(x);
    if (!in.same_shape(coeffs)) {
        throw DimensionError("dot shape mismatch: " + shape_str(in.shape()) + " vs " +
                             shape_str(coeffs.shape()));
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < in.size(); ++i) {
        acc += static_cast<double>(in[i]) * static_cast<double>(coeffs[i]);
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc));

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto c_copy = std::make_shared<Tensor>(coeffs);
    auto backward = [x, c_copy](Graph& gr, NodeId self) {
        const float gout = gr.grad_buffer(self)[0];
        Tensor& gin = gr.grad_buffer(x);
        for (std::int64_t i = 0; i < gin.size(); ++i) gin[i] += gout * (*c_copy)[i];
    };
    return g.add_node(std::move(out), {x}, std::move(backward));
}

NodeId add(Graph& g, NodeId a, NodeId b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (!av.same_shape(bv)) {
        throw DimensionError("add shape mismatch: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto backward = [a, b](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        Tensor& ga = gr.grad_buffer(a);
        Tensor& gb = gr.grad_buffer(b);
        for (std::int64_t i = 0; i < gout.size(); ++i) {
            ga[i] += gout[i];
            gb[i] += gout[i];
        }
    };
    return g.add_node(std::move(out), {a, b}, std::move(backward));
}

NodeId scale(Graph& g, NodeId x, float c) {
    const Tensor& in = g.value(x);
    Tensor out(in.shape());
    for (std::int64_t i = 0; i < in.size(); ++i) out[i] = c * in[i];

    if (!g.recording()) return g.add_node(std::move(out), {}, nullptr);
    auto backward = [x, c](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        Tensor& gin = gr.grad_buffer(x);
        for (std::int64_t i = 0; i < gout.size(); ++i) gin[i] += c * gout[i];
    };
    return g.add_node(std::move(out), {x}, std::move(backward));
}

}  // namespace gtaseg
