#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gac/tensor.hpp"

namespace gac {

// Probabilities are clamped here before any log; discriminator and classifier
// outputs of exactly 0 or 1 would otherwise produce non-finite losses.
inline constexpr double kLossProbClamp = 1e-12;

// Weighted combination knobs. Setting w_adv or alpha to zero recovers the
// MSE-only and adversarial-only baselines exactly: zero-weighted terms are
// never added to the objective graph, so the remaining gradient is
// bit-identical to the baseline configuration's.
struct LossWeights {
    double w_mse = 1.0;
    double w_adv = 1e-3;
    double alpha = 0.0005;

    void validate() const {
        if (w_mse < 0.0 || w_adv < 0.0 || alpha < 0.0) {
            throw std::invalid_argument("LossWeights: weights must be non-negative");
        }
    }
};

// Per-step scalar report. generator_total is the value the generator
// descends; total additionally carries the classifier's supervised anchor.
struct LossBreakdown {
    double mse = 0.0;
    double adv = 0.0;
    double cla = 0.0;
    double r_c = 0.0;
    double generator_total = 0.0;
    double total = 0.0;
};

// ---------------------------------------------------------------------------
// Component losses (graph-building)
// ---------------------------------------------------------------------------

// Pixel-wise content loss: mean squared difference over every element, i.e.
// the per-image 1/(r^2 W H) normalization followed by the batch mean.
inline Tensor content_mse(const Tensor& sr, const Tensor& hr) {
    if (sr.shape() != hr.shape()) {
        throw std::invalid_argument("content_mse: shape mismatch " +
                                    shape_to_string(sr.shape()) + " vs " +
                                    shape_to_string(hr.shape()));
    }
    return mean(square(sub(sr, hr)));
}

namespace detail {

inline void check_probabilities(const Tensor& p, const char* who) {
    for (double v : p.data()) {
        if (!(v > 0.0)) {
            throw std::runtime_error(std::string(who) + ": probability " + std::to_string(v) +
                                     " is not positive; upstream output is outside (0,1)");
        }
    }
}

// out[n] = probs[n, labels[n]]
inline Tensor pick_label_prob(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2) {
        throw std::invalid_argument("pick_label_prob: expects (N,K) probabilities, got " +
                                    shape_to_string(probs.shape()));
    }
    const int64_t n = probs.dim(0), k = probs.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw std::invalid_argument("pick_label_prob: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    }
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw std::invalid_argument("pick_label_prob: label " + std::to_string(labels[i]) +
                                        " out of range [0," + std::to_string(k) + ")");
        }
        out[i] = probs.data()[i * k + labels[i]];
    }
    return make_op({n}, std::move(out), {probs}, [n, k, labels](TensorNode& self) {
        TensorNode* pp = self.parents[0].get();
        if (!pp->on_grad_path) return;
        for (int64_t i = 0; i < n; ++i) pp->scratch[i * k + labels[i]] += self.scratch[i];
    });
}

}  // namespace detail

// Non-saturating adversarial term, summed over the batch: sum_n -log D(G(lr_n)).
// The 1/N factor of the update rule is applied by the trainer.
inline Tensor generator_adversarial_loss(const Tensor& d_probs) {
    if (d_probs.rank() != 2 || d_probs.dim(1) != 1) {
        throw std::invalid_argument("generator_adversarial_loss: expects (N,1) probabilities, "
                                    "got " + shape_to_string(d_probs.shape()));
    }
    detail::check_probabilities(d_probs, "generator_adversarial_loss");
    return neg(sum(log(clamp_min(d_probs, kLossProbClamp))));
}

// Discriminator objective in minimization form:
//   -(1/N) sum_n [ log D(hr_n) + log(1 - D(sr_n)) ]
// Descending this is ascending the adversarial objective.
inline Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
    if (d_real.shape() != d_fake.shape() || d_real.rank() != 2 || d_real.dim(1) != 1) {
        throw std::invalid_argument("discriminator_loss: expects matching (N,1) tensors, got " +
                                    shape_to_string(d_real.shape()) + " and " +
                                    shape_to_string(d_fake.shape()));
    }
    detail::check_probabilities(d_real, "discriminator_loss");
    for (double v : d_fake.data()) {
        if (!(v < 1.0)) {
            throw std::runtime_error("discriminator_loss: fake probability " +
                                     std::to_string(v) + " is not below 1");
        }
    }
    Tensor real_term = log(clamp_min(d_real, kLossProbClamp));
    Tensor fake_term = log(clamp_min(add(neg(d_fake), 1.0), kLossProbClamp));
    return neg(mean(add(real_term, fake_term)));
}

// Cross entropy of the classifier on reconstructed images, summed over the
// batch: sum_n -log C(sr_n)[y_n].
inline Tensor classification_loss_sr(const Tensor& c_probs_on_sr,
                                     const std::vector<int>& labels) {
    detail::check_probabilities(c_probs_on_sr, "classification_loss_sr");
    Tensor picked = detail::pick_label_prob(c_probs_on_sr, labels);
    return neg(sum(log(clamp_min(picked, kLossProbClamp))));
}

// The classifier's supervised anchor on true HR images; same functional form,
// different argument.
inline Tensor classifier_supervised_loss(const Tensor& c_probs_on_hr,
                                         const std::vector<int>& labels) {
    detail::check_probabilities(c_probs_on_hr, "classifier_supervised_loss");
    Tensor picked = detail::pick_label_prob(c_probs_on_hr, labels);
    return neg(sum(log(clamp_min(picked, kLossProbClamp))));
}

// ---------------------------------------------------------------------------
// Weighted totals
// ---------------------------------------------------------------------------

namespace detail {

inline void check_finite_component(double v, const char* name) {
    if (!std::isfinite(v)) {
        throw std::runtime_error(std::string("total_generator_loss: component '") + name +
                                 "' is non-finite (" + std::to_string(v) + ")");
    }
}

}  // namespace detail

// Scalar bookkeeping over already-reduced components, with the summation
// order pinned left to right: w_mse*mse + w_adv*adv + alpha*cla, then + r_c.
// Zero-weighted terms are skipped entirely.
inline LossBreakdown total_generator_loss(double mse, double adv, double cla, double r_c,
                                          const LossWeights& weights) {
    weights.validate();
    detail::check_finite_component(mse, "mse");
    detail::check_finite_component(adv, "adv");
    detail::check_finite_component(cla, "cla");
    detail::check_finite_component(r_c, "r_c");
    LossBreakdown out;
    out.mse = mse;
    out.adv = adv;
    out.cla = cla;
    out.r_c = r_c;
    double t = weights.w_mse == 1.0 ? mse : weights.w_mse * mse;
    if (weights.w_adv != 0.0) t += weights.w_adv * adv;
    if (weights.alpha != 0.0) t += weights.alpha * cla;
    out.generator_total = t;
    out.total = t + r_c;
    return out;
}

// Graph-building counterpart used by the generator update. adv_sum and
// cla_sum are batch sums (or undefined when their branch is disabled); the
// 1/N factor is applied here. The classifier anchor never enters this graph:
// it contains no generator parameters.
inline Tensor generator_loss_graph(const Tensor& mse, const Tensor& adv_sum,
                                   const Tensor& cla_sum, int64_t batch_size,
                                   const LossWeights& weights) {
    weights.validate();
    Tensor t = weights.w_mse == 1.0 ? mse : mul(mse, weights.w_mse);
    if (adv_sum.defined() && weights.w_adv != 0.0) {
        t = add(t, mul(div(adv_sum, static_cast<double>(batch_size)), weights.w_adv));
    }
    if (cla_sum.defined() && weights.alpha != 0.0) {
        t = add(t, mul(div(cla_sum, static_cast<double>(batch_size)), weights.alpha));
    }
    return t;
}

}  // namespace gac
