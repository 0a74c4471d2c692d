#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gac/layers.hpp"
#include "gac/tensor.hpp"

namespace gac {

// Width/depth knobs for the three networks. The paper-scale values are kept
// constructible; the desk presets shrink widths so the whole pipeline runs on
// a CPU in minutes.
struct ModelConfig {
    int64_t n_residual_blocks = 4;
    int64_t base_channels = 16;
    std::vector<int64_t> upsample_schedule = {7};
    int64_t image_channels = 1;
    int64_t n_classes = 10;
    int64_t hr_size = 28;  // square high-resolution extent consumed by D and C
    std::vector<int64_t> disc_channel_schedule = {16, 32, 64, 128};
    std::vector<int64_t> classifier_channel_schedule = {16, 32, 32};
    int64_t disc_dense_width = 128;
    int64_t classifier_dense_width = 128;

    int64_t scale_factor() const {
        int64_t r = 1;
        for (int64_t s : upsample_schedule) r *= s;
        return r;
    }

    void validate() const {
        if (n_residual_blocks < 1 || base_channels < 1) {
            throw std::invalid_argument("ModelConfig: residual blocks and base channels must "
                                        "be positive");
        }
        if (upsample_schedule.empty()) {
            throw std::invalid_argument("ModelConfig: upsample schedule must not be empty");
        }
        for (int64_t s : upsample_schedule) {
            if (s != 2 && s != 4 && s != 7) {
                throw std::invalid_argument("ModelConfig: unsupported upsample scale " +
                                            std::to_string(s));
            }
        }
        if (image_channels != 1 && image_channels != 3) {
            throw std::invalid_argument("ModelConfig: image_channels must be 1 or 3");
        }
        if (n_classes < 2) throw std::invalid_argument("ModelConfig: need at least 2 classes");
        if (disc_channel_schedule.size() != 4) {
            throw std::invalid_argument("ModelConfig: discriminator schedule needs 4 stages "
                                        "(eight conv layers)");
        }
        if (classifier_channel_schedule.size() != 3) {
            throw std::invalid_argument("ModelConfig: classifier schedule needs 3 stages");
        }
        if (hr_size % scale_factor() != 0) {
            throw std::invalid_argument("ModelConfig: hr_size " + std::to_string(hr_size) +
                                        " is not a multiple of the scale factor " +
                                        std::to_string(scale_factor()));
        }
        if (hr_size < 16) {
            throw std::invalid_argument("ModelConfig: input spatial extent " +
                                        std::to_string(hr_size) +
                                        " too small for the discriminator stride schedule");
        }
    }

    // 7x MNIST-style geometry at desk widths.
    static ModelConfig desk_mnist() { return ModelConfig{}; }

    // 8x geometry (64x64 HR) at desk widths.
    static ModelConfig desk_8x() {
        ModelConfig cfg;
        cfg.upsample_schedule = {2, 4};
        cfg.hr_size = 64;
        return cfg;
    }

    // Full paper-scale widths (not sized for desk runs).
    static ModelConfig paper_scale() {
        ModelConfig cfg;
        cfg.n_residual_blocks = 16;
        cfg.base_channels = 64;
        cfg.upsample_schedule = {2, 4};
        cfg.hr_size = 64;
        cfg.n_classes = 3755;
        cfg.disc_channel_schedule = {64, 128, 256, 512};
        cfg.classifier_channel_schedule = {64, 128, 128};
        cfg.disc_dense_width = 1024;
        cfg.classifier_dense_width = 1024;
        return cfg;
    }
};

// Draws conv/dense weights from a zero-mean normal scaled by fan-in; biases
// zero, PReLU slopes 0.25, batchnorm affine at identity. One generator stream
// consumed in entry order keeps the result a pure function of the seed.
inline void init_params(ParamSet& params, uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& [name, t] : params) {
        if (name.ends_with(".w")) {
            int64_t fan_in;
            if (t.rank() == 4) {
                fan_in = t.dim(1) * t.dim(2) * t.dim(3);
            } else if (t.rank() == 2) {
                fan_in = t.dim(0);
            } else {
                throw std::runtime_error("init_params: unexpected weight rank for " + name);
            }
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (auto& v : t.data()) v = dist(rng);
        } else if (name.ends_with(".b") || name.ends_with(".beta")) {
            for (auto& v : t.data()) v = 0.0;
        } else if (name.ends_with(".slope")) {
            for (auto& v : t.data()) v = 0.25;
        } else if (name.ends_with(".gamma")) {
            for (auto& v : t.data()) v = 1.0;
        } else {
            throw std::runtime_error("init_params: unrecognized parameter kind: " + name);
        }
    }
}

// ---------------------------------------------------------------------------
// Generator (SRResNet topology with a long skip and sub-pixel upsampling)
// ---------------------------------------------------------------------------

class Generator {
  public:
    explicit Generator(const ModelConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        const int64_t ch = cfg.base_channels;
        head_ = Conv2dLayer(cfg.image_channels, ch, 3, 1, 1);
        head_act_ = PReLULayer(ch);
        blocks_.reserve(cfg.n_residual_blocks);
        for (int64_t i = 0; i < cfg.n_residual_blocks; ++i) blocks_.emplace_back(ch);
        post_ = Conv2dLayer(ch, ch, 3, 1, 1);
        post_bn_ = BatchNormLayer(ch);
        for (int64_t s : cfg.upsample_schedule) ups_.emplace_back(ch, s);
        out_ = Conv2dLayer(ch, cfg.image_channels, 3, 1, 1);

        head_.collect(params_, "g.head.conv");
        head_act_.collect(params_, "g.head.prelu");
        for (size_t i = 0; i < blocks_.size(); ++i) {
            blocks_[i].collect(params_, buffers_, "g.res" + std::to_string(i));
        }
        post_.collect(params_, "g.post.conv");
        post_bn_.collect(params_, buffers_, "g.post.bn");
        for (size_t i = 0; i < ups_.size(); ++i) {
            ups_[i].collect(params_, "g.up" + std::to_string(i));
        }
        out_.collect(params_, "g.out.conv");
    }

    // LR in [-1,1] -> SR in [-1,1] at scale_factor() times the spatial size.
    Tensor forward(const Tensor& lr, Phase phase) {
        if (lr.rank() != 4 || lr.dim(1) != cfg_.image_channels) {
            throw std::invalid_argument("generator: expected (N," +
                                        std::to_string(cfg_.image_channels) + ",H,W), got " +
                                        shape_to_string(lr.shape()));
        }
        Tensor h0 = head_act_.forward(head_.forward(lr));
        Tensor h = h0;
        for (auto& block : blocks_) h = block.forward(h, phase);
        h = post_bn_.forward(post_.forward(h), phase);
        h = add(h, h0);
        for (auto& up : ups_) h = up.forward(h);
        return tanh(out_.forward(h));
    }

    static std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
        std::vector<LayerSpec> specs;
        specs.push_back(LayerSpec::conv(cfg.image_channels, cfg.base_channels, 3, 1, 1));
        specs.push_back(LayerSpec::prelu(cfg.base_channels));
        for (int64_t i = 0; i < cfg.n_residual_blocks; ++i) {
            specs.push_back(LayerSpec::residual_block(cfg.base_channels));
        }
        specs.push_back(LayerSpec::conv(cfg.base_channels, cfg.base_channels, 3, 1, 1));
        specs.push_back(LayerSpec::batchnorm(cfg.base_channels));
        for (int64_t s : cfg.upsample_schedule) {
            specs.push_back(LayerSpec::upsample_block(cfg.base_channels, s));
        }
        specs.push_back(LayerSpec::conv(cfg.base_channels, cfg.image_channels, 3, 1, 1));
        return specs;
    }

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    ParamSet& buffers() { return buffers_; }

  private:
    ModelConfig cfg_;
    Conv2dLayer head_, post_, out_;
    PReLULayer head_act_;
    std::vector<ResidualBlock> blocks_;
    BatchNormLayer post_bn_;
    std::vector<UpsampleBlock> ups_;
    ParamSet params_, buffers_;
};

// ---------------------------------------------------------------------------
// Discriminator (eight 3x3 convs, stride 2 on every second conv, LeakyReLU,
// two dense layers, sigmoid head)
// ---------------------------------------------------------------------------

class Discriminator {
  public:
    explicit Discriminator(const ModelConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        int64_t prev = cfg.image_channels;
        int64_t extent = cfg.hr_size;
        for (size_t i = 0; i < cfg.disc_channel_schedule.size(); ++i) {
            const int64_t ch = cfg.disc_channel_schedule[i];
            convs_.emplace_back(prev, ch, 3, 1, 1);
            convs_.emplace_back(ch, ch, 3, 2, 1);
            prev = ch;
            extent = conv_out_extent(extent, 3, 2, 1);
        }
        flat_size_ = prev * extent * extent;
        dense1_ = DenseLayer(flat_size_, cfg.disc_dense_width);
        dense2_ = DenseLayer(cfg.disc_dense_width, 1);

        for (size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].collect(params_, "d.conv" + std::to_string(i));
        }
        dense1_.collect(params_, "d.dense1");
        dense2_.collect(params_, "d.dense2");
    }

    // Image at HR geometry -> probability of being a real HR image, (N,1).
    Tensor forward(const Tensor& x) {
        if (x.rank() != 4 || x.dim(2) != cfg_.hr_size || x.dim(3) != cfg_.hr_size) {
            throw std::invalid_argument("discriminator: expected (N," +
                                        std::to_string(cfg_.image_channels) + "," +
                                        std::to_string(cfg_.hr_size) + "," +
                                        std::to_string(cfg_.hr_size) + "), got " +
                                        shape_to_string(x.shape()));
        }
        Tensor h = x;
        for (auto& conv : convs_) h = leaky_relu(conv.forward(h), 0.2);
        h = leaky_relu(dense1_.forward(flatten(h)), 0.2);
        return sigmoid(dense2_.forward(h));
    }

    static std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
        std::vector<LayerSpec> specs;
        int64_t prev = cfg.image_channels;
        int64_t extent = cfg.hr_size;
        for (int64_t ch : cfg.disc_channel_schedule) {
            specs.push_back(LayerSpec::conv(prev, ch, 3, 1, 1));
            specs.push_back(LayerSpec::leakyrelu());
            specs.push_back(LayerSpec::conv(ch, ch, 3, 2, 1));
            specs.push_back(LayerSpec::leakyrelu());
            prev = ch;
            extent = conv_out_extent(extent, 3, 2, 1);
        }
        specs.push_back(LayerSpec::dense(prev * extent * extent, cfg.disc_dense_width));
        specs.push_back(LayerSpec::leakyrelu());
        specs.push_back(LayerSpec::dense(cfg.disc_dense_width, 1));
        return specs;
    }

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    int64_t flat_size() const { return flat_size_; }

  private:
    ModelConfig cfg_;
    std::vector<Conv2dLayer> convs_;
    DenseLayer dense1_, dense2_;
    int64_t flat_size_ = 0;
    ParamSet params_;
};

// ---------------------------------------------------------------------------
// Classifier (three 3x3 convs, two dense layers, softmax head); the same
// topology serves as the held-out recognizer C0.
// ---------------------------------------------------------------------------

class Classifier {
  public:
    explicit Classifier(const ModelConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        const auto& sched = cfg.classifier_channel_schedule;
        convs_.emplace_back(cfg.image_channels, sched[0], 3, 1, 1);
        convs_.emplace_back(sched[0], sched[1], 3, 2, 1);
        convs_.emplace_back(sched[1], sched[2], 3, 2, 1);
        int64_t extent = cfg.hr_size;
        extent = conv_out_extent(extent, 3, 2, 1);
        extent = conv_out_extent(extent, 3, 2, 1);
        flat_size_ = sched[2] * extent * extent;
        dense1_ = DenseLayer(flat_size_, cfg.classifier_dense_width);
        dense2_ = DenseLayer(cfg.classifier_dense_width, cfg.n_classes);

        for (size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].collect(params_, "c.conv" + std::to_string(i));
        }
        dense1_.collect(params_, "c.dense1");
        dense2_.collect(params_, "c.dense2");
    }

    // Image at HR geometry -> class logits (N, n_classes).
    Tensor forward_logits(const Tensor& x) {
        if (x.rank() != 4 || x.dim(2) != cfg_.hr_size || x.dim(3) != cfg_.hr_size) {
            throw std::invalid_argument("classifier: expected HR geometry " +
                                        std::to_string(cfg_.hr_size) + ", got " +
                                        shape_to_string(x.shape()));
        }
        Tensor h = x;
        for (auto& conv : convs_) h = leaky_relu(conv.forward(h), 0.2);
        h = leaky_relu(dense1_.forward(flatten(h)), 0.2);
        return dense2_.forward(h);
    }

    Tensor forward(const Tensor& x) { return softmax(forward_logits(x)); }

    static std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
        std::vector<LayerSpec> specs;
        const auto& sched = cfg.classifier_channel_schedule;
        specs.push_back(LayerSpec::conv(cfg.image_channels, sched[0], 3, 1, 1));
        specs.push_back(LayerSpec::conv(sched[0], sched[1], 3, 2, 1));
        specs.push_back(LayerSpec::conv(sched[1], sched[2], 3, 2, 1));
        int64_t extent = conv_out_extent(conv_out_extent(cfg.hr_size, 3, 2, 1), 3, 2, 1);
        specs.push_back(LayerSpec::dense(sched[2] * extent * extent, cfg.classifier_dense_width));
        specs.push_back(LayerSpec::dense(cfg.classifier_dense_width, cfg.n_classes));
        return specs;
    }

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }

  private:
    ModelConfig cfg_;
    std::vector<Conv2dLayer> convs_;
    DenseLayer dense1_, dense2_;
    int64_t flat_size_ = 0;
    ParamSet params_;
};

}  // namespace gac
