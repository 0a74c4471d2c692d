#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gac/tensor.hpp"

namespace gac {

// Forward-pass mode for layers that hold running statistics.
//   train:  batch statistics, running stats updated
//   frozen: batch statistics, running stats untouched (auxiliary forwards
//           inside a training step)
//   eval:   running statistics only
enum class Phase { train, frozen, eval };

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline Tensor sigmoid(const Tensor& x) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        for (size_t i = 0; i < self.scratch.size(); ++i) {
            const double y = self.data[i];
            pa->scratch[i] += self.scratch[i] * y * (1.0 - y);
        }
    });
}

inline Tensor tanh(const Tensor& x) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        for (size_t i = 0; i < self.scratch.size(); ++i) {
            const double y = self.data[i];
            pa->scratch[i] += self.scratch[i] * (1.0 - y * y);
        }
    });
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.2) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw std::invalid_argument("leaky_relu: slope must lie in (0,1), got " +
                                    std::to_string(slope));
    }
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
    return make_op(x.shape(), std::move(out), {x}, [slope](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        for (size_t i = 0; i < self.scratch.size(); ++i)
            pa->scratch[i] += self.scratch[i] * (pa->data[i] > 0.0 ? 1.0 : slope);
    });
}

// Parametric ReLU over NCHW input with one learnable slope per channel (or a
// single shared slope when the slope tensor has one element).
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
    if (x.rank() != 4) {
        throw std::invalid_argument("prelu: expects NCHW input, got " +
                                    shape_to_string(x.shape()));
    }
    const int64_t c = x.dim(1);
    if (!(slope.numel() == c || slope.numel() == 1)) {
        throw std::invalid_argument("prelu: slope must have 1 or " + std::to_string(c) +
                                    " entries, got " + shape_to_string(slope.shape()));
    }
    const bool shared = slope.numel() == 1;
    const int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
    const auto& xv = x.data();
    const auto& sv = slope.data();
    std::vector<double> out(xv.size());
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double s = sv[shared ? 0 : ch];
            const double* xp = xv.data() + (b * c + ch) * hw;
            double* op = out.data() + (b * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) op[i] = xp[i] > 0.0 ? xp[i] : s * xp[i];
        }
    return make_op(x.shape(), std::move(out), {x, slope},
                   [n, c, hw, shared](TensorNode& self) {
                       TensorNode* px = self.parents[0].get();
                       TensorNode* ps = self.parents[1].get();
                       const auto& g = self.scratch;
                       for (int64_t b = 0; b < n; ++b)
                           for (int64_t ch = 0; ch < c; ++ch) {
                               const double s = ps->data[shared ? 0 : ch];
                               const size_t base = static_cast<size_t>((b * c + ch) * hw);
                               double slope_acc = 0.0;
                               for (int64_t i = 0; i < hw; ++i) {
                                   const double xi = px->data[base + i];
                                   const double gi = g[base + i];
                                   if (px->on_grad_path)
                                       px->scratch[base + i] += gi * (xi > 0.0 ? 1.0 : s);
                                   if (xi <= 0.0) slope_acc += gi * xi;
                               }
                               if (ps->on_grad_path) ps->scratch[shared ? 0 : ch] += slope_acc;
                           }
                   });
}

// ---------------------------------------------------------------------------
// Sub-pixel rearrangement
// ---------------------------------------------------------------------------

// out[n, c, r*y+dy, r*x+dx] = in[n, c*r^2 + dy*r + dx, y, x]; a pure
// permutation of the input scalars, so backward applies the inverse map.
inline Tensor pixel_shuffle(const Tensor& x, int64_t r) {
    if (x.rank() != 4) {
        throw std::invalid_argument("pixel_shuffle: expects NCHW input, got " +
                                    shape_to_string(x.shape()));
    }
    if (r < 1) throw std::invalid_argument("pixel_shuffle: upscale factor must be >= 1");
    const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (cin % (r * r) != 0) {
        throw std::invalid_argument("pixel_shuffle: " + std::to_string(cin) +
                                    " channels not divisible by r^2 = " + std::to_string(r * r));
    }
    const int64_t cout = cin / (r * r), ho = h * r, wo = w * r;
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (int64_t b = 0; b < n; ++b)
        for (int64_t c = 0; c < cout; ++c)
            for (int64_t dy = 0; dy < r; ++dy)
                for (int64_t dx = 0; dx < r; ++dx) {
                    const double* ip = xv.data() + ((b * cin + c * r * r + dy * r + dx) * h) * w;
                    for (int64_t y = 0; y < h; ++y) {
                        double* op = out.data() + ((b * cout + c) * ho + (r * y + dy)) * wo + dx;
                        for (int64_t xpos = 0; xpos < w; ++xpos) op[xpos * r] = ip[y * w + xpos];
                    }
                }
    return make_op({n, cout, ho, wo}, std::move(out), {x},
                   [n, cin, h, w, cout, ho, wo, r](TensorNode& self) {
                       TensorNode* px = self.parents[0].get();
                       if (!px->on_grad_path) return;
                       const auto& g = self.scratch;
                       for (int64_t b = 0; b < n; ++b)
                           for (int64_t c = 0; c < cout; ++c)
                               for (int64_t dy = 0; dy < r; ++dy)
                                   for (int64_t dx = 0; dx < r; ++dx) {
                                       double* ip = px->scratch.data() +
                                                    ((b * cin + c * r * r + dy * r + dx) * h) * w;
                                       for (int64_t y = 0; y < h; ++y) {
                                           const double* gp =
                                               g.data() +
                                               ((b * cout + c) * ho + (r * y + dy)) * wo + dx;
                                           for (int64_t xpos = 0; xpos < w; ++xpos)
                                               ip[y * w + xpos] += gp[xpos * r];
                                       }
                                   }
                   });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

namespace detail {

// Shared core: standardize by the given per-channel statistics, then apply the
// affine pair. When stats_from_batch is set the backward pass differentiates
// through the statistics as functions of the input.
inline Tensor batch_norm_core(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              std::vector<double> mean, std::vector<double> var, double eps,
                              bool stats_from_batch) {
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const int64_t m = n * hw;
    std::vector<double> inv(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) inv[ch] = 1.0 / std::sqrt(var[ch] + eps);

    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double mu = mean[ch], iv = inv[ch];
            const double ga = gamma.data()[ch], be = beta.data()[ch];
            const double* xp = xv.data() + (b * c + ch) * hw;
            double* op = out.data() + (b * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) op[i] = ga * (xp[i] - mu) * iv + be;
        }

    auto bw = [n, c, hw, m, mean = std::move(mean), inv, stats_from_batch](TensorNode& self) {
        TensorNode* px = self.parents[0].get();
        TensorNode* pg = self.parents[1].get();
        TensorNode* pb = self.parents[2].get();
        const auto& g = self.scratch;
#pragma omp parallel for schedule(static)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double mu = mean[ch], iv = inv[ch];
            const double ga = pg->data[ch];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const size_t base = static_cast<size_t>((b * c + ch) * hw);
                for (int64_t i = 0; i < hw; ++i) {
                    const double xhat = (px->data[base + i] - mu) * iv;
                    sum_g += g[base + i];
                    sum_gx += g[base + i] * xhat;
                }
            }
            if (pg->on_grad_path) pg->scratch[ch] += sum_gx;
            if (pb->on_grad_path) pb->scratch[ch] += sum_g;
            if (px->on_grad_path) {
                const double md = static_cast<double>(m);
                for (int64_t b = 0; b < n; ++b) {
                    const size_t base = static_cast<size_t>((b * c + ch) * hw);
                    for (int64_t i = 0; i < hw; ++i) {
                        const double xhat = (px->data[base + i] - mu) * iv;
                        double dx;
                        if (stats_from_batch) {
                            dx = ga * iv * (g[base + i] - sum_g / md - xhat * sum_gx / md);
                        } else {
                            dx = ga * iv * g[base + i];
                        }
                        px->scratch[base + i] += dx;
                    }
                }
            }
        }
    };
    return make_op(x.shape(), std::move(out), {x, gamma, beta}, std::move(bw));
}

}  // namespace detail

// Per-channel batch normalization state: learnable affine pair plus running
// statistics. Running stats use the biased batch variance and the update
// rule running = (1-momentum)*running + momentum*batch.
struct BatchNormLayer {
    Tensor gamma, beta;
    Tensor run_mean, run_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormLayer(int64_t channels = 0) {
        gamma = Tensor::filled({channels}, 1.0, true);
        beta = Tensor::zeros({channels}, true);
        run_mean = Tensor::zeros({channels});
        run_var = Tensor::filled({channels}, 1.0);
    }

    Tensor forward(const Tensor& x, Phase phase) {
        if (x.rank() != 4) {
            throw std::invalid_argument("batch_norm: expects NCHW input, got " +
                                        shape_to_string(x.shape()));
        }
        const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        if (c != gamma.numel()) {
            throw std::invalid_argument("batch_norm: input has " + std::to_string(c) +
                                        " channels, state has " + std::to_string(gamma.numel()));
        }
        if (phase == Phase::eval) {
            return detail::batch_norm_core(x, gamma, beta, run_mean.data(), run_var.data(), eps,
                                           /*stats_from_batch=*/false);
        }
        const int64_t m = n * hw;
        if (m < 2) {
            throw std::invalid_argument(
                "batch_norm: training mode needs at least 2 values per channel, got " +
                std::to_string(m));
        }
        std::vector<double> mean(static_cast<size_t>(c), 0.0);
        std::vector<double> var(static_cast<size_t>(c), 0.0);
        const auto& xv = x.data();
        for (int64_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const double* xp = xv.data() + (b * c + ch) * hw;
                for (int64_t i = 0; i < hw; ++i) s += xp[i];
            }
            const double mu = s / static_cast<double>(m);
            double sv = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const double* xp = xv.data() + (b * c + ch) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    const double d = xp[i] - mu;
                    sv += d * d;
                }
            }
            mean[ch] = mu;
            var[ch] = sv / static_cast<double>(m);
        }
        if (phase == Phase::train) {
            for (int64_t ch = 0; ch < c; ++ch) {
                run_mean.data()[ch] = (1.0 - momentum) * run_mean.data()[ch] + momentum * mean[ch];
                run_var.data()[ch] = (1.0 - momentum) * run_var.data()[ch] + momentum * var[ch];
            }
        }
        return detail::batch_norm_core(x, gamma, beta, std::move(mean), std::move(var), eps,
                                       /*stats_from_batch=*/true);
    }

    void collect(ParamSet& params, ParamSet& buffers, const std::string& prefix) {
        params.add(prefix + ".gamma", gamma);
        params.add(prefix + ".beta", beta);
        buffers.add(prefix + ".running_mean", run_mean);
        buffers.add(prefix + ".running_var", run_var);
    }
};

// ---------------------------------------------------------------------------
// Dense layer plumbing
// ---------------------------------------------------------------------------

inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw std::invalid_argument("add_bias: incompatible shapes " +
                                    shape_to_string(x.shape()) + " and " +
                                    shape_to_string(bias.shape()));
    }
    const int64_t n = x.dim(0), m = x.dim(1);
    std::vector<double> out(x.data().size());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) out[i * m + j] = x.data()[i * m + j] + bias.data()[j];
    return make_op(x.shape(), std::move(out), {x, bias}, [n, m](TensorNode& self) {
        TensorNode* px = self.parents[0].get();
        TensorNode* pb = self.parents[1].get();
        const auto& g = self.scratch;
        if (px->on_grad_path)
            for (size_t i = 0; i < g.size(); ++i) px->scratch[i] += g[i];
        if (pb->on_grad_path)
            for (int64_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) acc += g[i * m + j];
                pb->scratch[j] += acc;
            }
    });
}

inline Tensor flatten(const Tensor& x) {
    if (x.rank() < 2) return x;
    return reshape(x, {x.dim(0), x.numel() / x.dim(0)});
}

// ---------------------------------------------------------------------------
// Softmax heads
// ---------------------------------------------------------------------------

// Probabilities are floored here so that rows stay strictly positive even
// when a logit gap underflows exp(); the floor is far below the 1e-12 clamp
// the losses apply before any log.
inline constexpr double kProbFloor = 1e-300;

// Row-wise softmax with the max-shift for stability under large logits.
inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw std::invalid_argument("softmax: expects (N,K) logits, got " +
                                    shape_to_string(logits.shape()));
    }
    const int64_t n = logits.dim(0), k = logits.dim(1);
    const auto& xv = logits.data();
    std::vector<double> out(xv.size());
    for (int64_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * k;
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        double* orow = out.data() + i * k;
        for (int64_t j = 0; j < k; ++j) {
            orow[j] = std::exp(row[j] - mx);
            s += orow[j];
        }
        for (int64_t j = 0; j < k; ++j) orow[j] = std::max(orow[j] / s, kProbFloor);
    }
    return make_op(logits.shape(), std::move(out), {logits}, [n, k](TensorNode& self) {
        TensorNode* px = self.parents[0].get();
        if (!px->on_grad_path) return;
        const auto& g = self.scratch;
        for (int64_t i = 0; i < n; ++i) {
            const double* p = self.data.data() + i * k;
            const double* grow = g.data() + i * k;
            double dot = 0.0;
            for (int64_t j = 0; j < k; ++j) dot += grow[j] * p[j];
            for (int64_t j = 0; j < k; ++j) px->scratch[i * k + j] += p[j] * (grow[j] - dot);
        }
    });
}

struct SoftmaxCrossEntropy {
    Tensor loss;   // sum over the batch
    Tensor probs;  // detached (N,K) probabilities
};

// Fused log-sum-exp cross entropy over integer class labels. The returned
// loss is the SUM over the batch; callers divide by N where the update rule
// carries the 1/N factor.
inline SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits,
                                                 const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw std::invalid_argument("softmax_cross_entropy: expects (N,K) logits, got " +
                                    shape_to_string(logits.shape()));
    }
    const int64_t n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    }
    for (int64_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw std::invalid_argument("softmax_cross_entropy: label " +
                                        std::to_string(labels[i]) + " out of range [0," +
                                        std::to_string(k) + ") at row " + std::to_string(i));
        }
    }
    const auto& xv = logits.data();
    std::vector<double> probs(xv.size());
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * k;
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        double* prow = probs.data() + i * k;
        for (int64_t j = 0; j < k; ++j) prow[j] = std::max(std::exp(row[j] - lse), kProbFloor);
        total += lse - row[labels[i]];
    }
    Tensor probs_t = Tensor::of({n, k}, probs);
    Tensor loss = make_op({1}, {total}, {logits}, [n, k, labels, probs](TensorNode& self) {
        TensorNode* px = self.parents[0].get();
        if (!px->on_grad_path) return;
        const double g = self.scratch[0];
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j) {
                const double onehot = j == labels[i] ? 1.0 : 0.0;
                px->scratch[i * k + j] += g * (probs[i * k + j] - onehot);
            }
    });
    return {loss, probs_t};
}

// ---------------------------------------------------------------------------
// Layer specifications
// ---------------------------------------------------------------------------

enum class LayerKind {
    conv,
    batchnorm,
    prelu,
    leakyrelu,
    dense,
    pixelshuffle,
    sigmoid,
    softmax,
    residual_block,
    upsample_block,
};

// Validated hyperparameter record for one layer; param_count() gives the
// closed-form trainable size so architecture configs determine the ParamSet
// size before any tensor exists.
struct LayerSpec {
    LayerKind kind;
    int64_t in_ch = 0;
    int64_t out_ch = 0;
    int64_t kernel = 0;
    int64_t stride = 1;
    int64_t padding = 0;
    int64_t scale = 0;   // pixelshuffle / upsample_block
    double slope = 0.0;  // leakyrelu

    static LayerSpec conv(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride = 1,
                          int64_t padding = 0) {
        if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1 || padding < 0) {
            throw std::invalid_argument("LayerSpec: invalid conv hyperparameters");
        }
        return {LayerKind::conv, in_ch, out_ch, kernel, stride, padding, 0, 0.0};
    }
    static LayerSpec batchnorm(int64_t channels) {
        if (channels < 1) throw std::invalid_argument("LayerSpec: batchnorm needs channels >= 1");
        return {LayerKind::batchnorm, channels, channels, 0, 1, 0, 0, 0.0};
    }
    static LayerSpec prelu(int64_t channels) {
        if (channels < 1) throw std::invalid_argument("LayerSpec: prelu needs channels >= 1");
        return {LayerKind::prelu, channels, channels, 0, 1, 0, 0, 0.0};
    }
    static LayerSpec leakyrelu(double slope = 0.2) {
        if (!(slope > 0.0 && slope < 1.0)) {
            throw std::invalid_argument("LayerSpec: leakyrelu slope must lie in (0,1)");
        }
        return {LayerKind::leakyrelu, 0, 0, 0, 1, 0, 0, slope};
    }
    static LayerSpec dense(int64_t in_features, int64_t out_features) {
        if (in_features < 1 || out_features < 1) {
            throw std::invalid_argument("LayerSpec: invalid dense extents");
        }
        return {LayerKind::dense, in_features, out_features, 0, 1, 0, 0, 0.0};
    }
    static LayerSpec pixelshuffle(int64_t r) {
        if (r < 1) throw std::invalid_argument("LayerSpec: pixelshuffle factor must be >= 1");
        return {LayerKind::pixelshuffle, 0, 0, 0, 1, 0, r, 0.0};
    }
    static LayerSpec residual_block(int64_t channels) {
        if (channels < 1) {
            throw std::invalid_argument("LayerSpec: residual_block needs channels >= 1");
        }
        return {LayerKind::residual_block, channels, channels, 3, 1, 1, 0, 0.0};
    }
    static LayerSpec upsample_block(int64_t channels, int64_t scale) {
        if (scale != 2 && scale != 4 && scale != 7) {
            throw std::invalid_argument("LayerSpec: unsupported upsample scale " +
                                        std::to_string(scale));
        }
        return {LayerKind::upsample_block, channels, channels, 3, 1, 1, scale, 0.0};
    }

    int64_t param_count() const {
        switch (kind) {
            case LayerKind::conv: return out_ch * in_ch * kernel * kernel + out_ch;
            case LayerKind::batchnorm: return 2 * out_ch;
            case LayerKind::prelu: return out_ch;
            case LayerKind::dense: return in_ch * out_ch + out_ch;
            case LayerKind::residual_block:
                // conv-bn-prelu-conv-bn over a fixed channel width
                return 2 * (out_ch * in_ch * 9 + out_ch) + 2 * (2 * out_ch) + out_ch;
            case LayerKind::upsample_block: {
                const int64_t expanded = in_ch * scale * scale;
                return expanded * in_ch * 9 + expanded + in_ch;
            }
            default: return 0;
        }
    }
};

inline int64_t param_count(const std::vector<LayerSpec>& specs) {
    int64_t n = 0;
    for (const auto& s : specs) n += s.param_count();
    return n;
}

// ---------------------------------------------------------------------------
// Layer modules
// ---------------------------------------------------------------------------

struct Conv2dLayer {
    Tensor w, b;
    int64_t stride = 1, padding = 0;

    Conv2dLayer() = default;
    Conv2dLayer(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride_ = 1,
                int64_t padding_ = 0)
        : w(Tensor::zeros({out_ch, in_ch, kernel, kernel}, true)),
          b(Tensor::zeros({out_ch}, true)),
          stride(stride_),
          padding(padding_) {}

    Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }

    void collect(ParamSet& params, const std::string& prefix) {
        params.add(prefix + ".w", w);
        params.add(prefix + ".b", b);
    }
};

struct DenseLayer {
    Tensor w, b;

    DenseLayer() = default;
    DenseLayer(int64_t in_features, int64_t out_features)
        : w(Tensor::zeros({in_features, out_features}, true)),
          b(Tensor::zeros({out_features}, true)) {}

    Tensor forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }

    void collect(ParamSet& params, const std::string& prefix) {
        params.add(prefix + ".w", w);
        params.add(prefix + ".b", b);
    }
};

struct PReLULayer {
    Tensor slope;

    PReLULayer() = default;
    explicit PReLULayer(int64_t channels) : slope(Tensor::filled({channels}, 0.25, true)) {}

    Tensor forward(const Tensor& x) const { return prelu(x, slope); }

    void collect(ParamSet& params, const std::string& prefix) {
        params.add(prefix + ".slope", slope);
    }
};

// conv3x3 -> BN -> PReLU -> conv3x3 -> BN, plus the identity skip. Spatial
// extents and channel width are preserved.
struct ResidualBlock {
    Conv2dLayer conv1, conv2;
    BatchNormLayer bn1, bn2;
    PReLULayer act;

    ResidualBlock() = default;
    explicit ResidualBlock(int64_t channels)
        : conv1(channels, channels, 3, 1, 1),
          conv2(channels, channels, 3, 1, 1),
          bn1(channels),
          bn2(channels),
          act(channels) {}

    Tensor forward(const Tensor& x, Phase phase) {
        Tensor h = conv1.forward(x);
        h = bn1.forward(h, phase);
        h = act.forward(h);
        h = conv2.forward(h);
        h = bn2.forward(h, phase);
        if (h.shape() != x.shape()) {
            throw std::runtime_error("residual_block: inner path changed shape from " +
                                     shape_to_string(x.shape()) + " to " +
                                     shape_to_string(h.shape()));
        }
        return add(h, x);
    }

    void collect(ParamSet& params, ParamSet& buffers, const std::string& prefix) {
        conv1.collect(params, prefix + ".conv1");
        bn1.collect(params, buffers, prefix + ".bn1");
        act.collect(params, prefix + ".prelu");
        conv2.collect(params, prefix + ".conv2");
        bn2.collect(params, buffers, prefix + ".bn2");
    }
};

// conv3x3 expanding channels by scale^2, sub-pixel rearrangement, PReLU.
struct UpsampleBlock {
    Conv2dLayer conv;
    PReLULayer act;
    int64_t scale = 0;

    UpsampleBlock() = default;
    UpsampleBlock(int64_t channels, int64_t scale_)
        : conv(channels, channels * scale_ * scale_, 3, 1, 1), act(channels), scale(scale_) {
        if (scale_ != 2 && scale_ != 4 && scale_ != 7) {
            throw std::invalid_argument("upsample_block: unsupported scale " +
                                        std::to_string(scale_));
        }
    }

    Tensor forward(const Tensor& x) const {
        return act.forward(pixel_shuffle(conv.forward(x), scale));
    }

    void collect(ParamSet& params, const std::string& prefix) {
        conv.collect(params, prefix + ".conv");
        act.collect(params, prefix + ".prelu");
    }
};

}  // namespace gac
