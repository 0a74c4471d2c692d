#include "gac/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gac/gradcheck.hpp"
#include "test_util.hpp"

using gac::backward;
using gac::Phase;
using gac::Shape;
using gac::Tensor;

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

TEST(BatchNorm, StandardizesPerChannel) {
    gac::BatchNormLayer bn(2);
    Tensor x = gactest::random_tensor({4, 2, 3, 3}, 17, -2.0, 2.0);
    Tensor y = bn.forward(x, Phase::frozen);
    for (int64_t c = 0; c < 2; ++c) {
        double s = 0.0, s2 = 0.0;
        int64_t m = 0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t i = 0; i < 9; ++i) {
                const double v = y.data()[(n * 2 + c) * 9 + i];
                s += v;
                s2 += v * v;
                ++m;
            }
        const double mean = s / m;
        const double var = s2 / m - mean * mean;
        EXPECT_LT(std::fabs(mean), 1e-5);
        EXPECT_NEAR(var, 1.0, 1e-4);
    }
}

TEST(BatchNorm, ConstantChannelMapsToZero) {
    gac::BatchNormLayer bn(1);
    Tensor x = Tensor::filled({2, 1, 2, 2}, 3.7);
    Tensor y = bn.forward(x, Phase::frozen);
    for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(BatchNorm, MatchesNaivePerChannelOracle) {
    gac::BatchNormLayer bn(2);
    bn.gamma.data() = {1.3, 0.7};
    bn.beta.data() = {0.2, -0.4};
    Tensor x = gactest::random_tensor({4, 2, 3, 3}, 18);
    Tensor y = bn.forward(x, Phase::frozen);

    for (int64_t c = 0; c < 2; ++c) {
        double s = 0.0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t i = 0; i < 9; ++i) s += x.data()[(n * 2 + c) * 9 + i];
        const double mu = s / 36.0;
        double sv = 0.0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t i = 0; i < 9; ++i) {
                const double d = x.data()[(n * 2 + c) * 9 + i] - mu;
                sv += d * d;
            }
        const double var = sv / 36.0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t i = 0; i < 9; ++i) {
                const double xhat =
                    (x.data()[(n * 2 + c) * 9 + i] - mu) / std::sqrt(var + bn.eps);
                const double expect = bn.gamma.data()[c] * xhat + bn.beta.data()[c];
                EXPECT_NEAR(y.data()[(n * 2 + c) * 9 + i], expect, 1e-10);
            }
    }
}

TEST(BatchNorm, RunningStatsUpdateWithMomentum) {
    gac::BatchNormLayer bn(1);
    Tensor x = Tensor::of({1, 1, 2, 2}, {1, 2, 3, 4});
    bn.forward(x, Phase::train);
    // batch mean 2.5, biased variance 1.25; running starts at (0, 1)
    EXPECT_NEAR(bn.run_mean.data()[0], 0.1 * 2.5, 1e-12);
    EXPECT_NEAR(bn.run_var.data()[0], 0.9 * 1.0 + 0.1 * 1.25, 1e-12);

    gac::BatchNormLayer frozen(1);
    Tensor before_mean = frozen.run_mean.detach();
    frozen.forward(x, Phase::frozen);
    EXPECT_EQ(frozen.run_mean.data(), before_mean.data());
}

TEST(BatchNorm, EvalUsesRunningStatsOnly) {
    gac::BatchNormLayer bn(1);
    bn.run_mean.data() = {2.0};
    bn.run_var.data() = {4.0};
    Tensor x = Tensor::of({1, 1, 1, 2}, {2.0, 4.0});
    Tensor y = bn.forward(x, Phase::eval);
    EXPECT_NEAR(y.data()[0], 0.0, 1e-9);
    EXPECT_NEAR(y.data()[1], 2.0 / std::sqrt(4.0 + bn.eps), 1e-9);
}

TEST(BatchNorm, TinyBatchRejectedInTrainingMode) {
    gac::BatchNormLayer bn(3);
    Tensor x = Tensor::zeros({1, 3, 1, 1});
    EXPECT_THROW(bn.forward(x, Phase::train), std::invalid_argument);
}

TEST(BatchNorm, GradientsThroughBatchStatistics) {
    gac::BatchNormLayer bn(2);
    bn.gamma.data() = {1.1, 0.9};
    bn.beta.data() = {0.1, -0.2};
    Tensor x = gactest::random_tensor({3, 2, 2, 2}, 19);
    auto f = [&](Tensor& t) { return gac::mean(gac::square(bn.forward(t, Phase::frozen))); };
    EXPECT_LT(gac::grad_check(f, x).max_rel_dev, 1e-3);

    Tensor x2 = gactest::random_tensor({3, 2, 2, 2}, 20);
    auto fg = [&](Tensor&) { return gac::mean(gac::square(bn.forward(x2, Phase::frozen))); };
    EXPECT_LT(gac::grad_check(fg, bn.gamma).max_rel_dev, 1e-3);
    auto fb = [&](Tensor&) { return gac::mean(gac::square(bn.forward(x2, Phase::frozen))); };
    EXPECT_LT(gac::grad_check(fb, bn.beta).max_rel_dev, 1e-3);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

TEST(PRelu, Definition) {
    Tensor x = Tensor::of({1, 1, 1, 2}, {2.0, -2.0});
    Tensor slope = Tensor::of({1}, {0.25});
    Tensor y = gac::prelu(x, slope);
    EXPECT_DOUBLE_EQ(y.data()[0], 2.0);
    EXPECT_DOUBLE_EQ(y.data()[1], -0.5);
}

TEST(PRelu, AllPositiveIsIdentity) {
    Tensor x = gactest::random_tensor({2, 3, 2, 2}, 30, 0.1, 2.0);
    Tensor slope = Tensor::filled({3}, 0.25);
    EXPECT_EQ(gac::prelu(x, slope).data(), x.data());
}

TEST(PRelu, SlopeGradIsNegativeSideInput) {
    Tensor x = Tensor::of({1, 1, 1, 1}, {-2.0});
    Tensor slope = Tensor::filled({1}, 0.25, true);
    backward(gac::sum(gac::prelu(x, slope)));
    EXPECT_DOUBLE_EQ(slope.grad()[0], -2.0);
}

TEST(PRelu, PerChannelGradCheck) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Tensor x = gactest::random_tensor({2, 3, 3, 3}, 40 + seed);
        Tensor slope = Tensor::of({3}, {0.1, 0.25, 0.5});
        auto f = [&](Tensor& t) { return gac::mean(gac::square(gac::prelu(t, slope))); };
        EXPECT_LT(gac::grad_check(f, x).max_rel_dev, 1e-3);
        auto fs = [&](Tensor& s) { return gac::mean(gac::square(gac::prelu(x, s))); };
        EXPECT_LT(gac::grad_check(fs, slope).max_rel_dev, 1e-3);
    }
}

TEST(LeakyRelu, PaperSlope) {
    Tensor x = Tensor::of({2}, {1.0, -1.0});
    Tensor y = gac::leaky_relu(x, 0.2);
    EXPECT_DOUBLE_EQ(y.data()[0], 1.0);
    EXPECT_DOUBLE_EQ(y.data()[1], -0.2);
}

TEST(LeakyRelu, ZeroBoundary) {
    Tensor x = Tensor::of({1}, {0.0});
    EXPECT_DOUBLE_EQ(gac::leaky_relu(x).data()[0], 0.0);
}

TEST(LeakyRelu, NegativeSideGrad) {
    Tensor x = Tensor::of({1}, {-3.0}, true);
    backward(gac::sum(gac::leaky_relu(x, 0.2)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.2);
}

TEST(Sigmoid, RangeAndGrad) {
    Tensor x = gactest::random_tensor({8}, 50, -5.0, 5.0);
    Tensor y = gac::sigmoid(x);
    for (double v : y.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    auto f = [](Tensor& t) { return gac::mean(gac::square(gac::sigmoid(t))); };
    Tensor x2 = gactest::random_tensor({8}, 51, -3.0, 3.0);
    EXPECT_LT(gac::grad_check(f, x2).max_rel_dev, 1e-3);
}

TEST(Tanh, BoundedAndGrad) {
    Tensor x = Tensor::of({3}, {-100.0, 0.0, 100.0});
    Tensor y = gac::tanh(x);
    EXPECT_DOUBLE_EQ(y.data()[0], -1.0);
    EXPECT_DOUBLE_EQ(y.data()[1], 0.0);
    EXPECT_DOUBLE_EQ(y.data()[2], 1.0);
    auto f = [](Tensor& t) { return gac::mean(gac::square(gac::tanh(t))); };
    Tensor x2 = gactest::random_tensor({8}, 52, -2.0, 2.0);
    EXPECT_LT(gac::grad_check(f, x2).max_rel_dev, 1e-3);
}

// ---------------------------------------------------------------------------
// pixel shuffle
// ---------------------------------------------------------------------------

TEST(PixelShuffle, FactorOneIsIdentity) {
    Tensor x = gactest::random_tensor({2, 3, 4, 4}, 60);
    Tensor y = gac::pixel_shuffle(x, 1);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(y.data(), x.data());
}

TEST(PixelShuffle, FourChannelCell) {
    Tensor x = Tensor::of({1, 4, 1, 1}, {1.0, 2.0, 3.0, 4.0});
    Tensor y = gac::pixel_shuffle(x, 2);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(y.data(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(PixelShuffle, MatchesIndexEnumerationOracle) {
    const int64_t n = 2, cin = 8, h = 3, w = 3, r = 2;
    Tensor x = gactest::random_tensor({n, cin, h, w}, 61);
    Tensor y = gac::pixel_shuffle(x, r);
    const int64_t cout = cin / (r * r), ho = h * r, wo = w * r;
    ASSERT_EQ(y.shape(), (Shape{n, cout, ho, wo}));
    for (int64_t b = 0; b < n; ++b)
        for (int64_t c = 0; c < cout; ++c)
            for (int64_t yy = 0; yy < h; ++yy)
                for (int64_t xx = 0; xx < w; ++xx)
                    for (int64_t dy = 0; dy < r; ++dy)
                        for (int64_t dx = 0; dx < r; ++dx) {
                            const double in_v =
                                x.data()[((b * cin + c * r * r + dy * r + dx) * h + yy) * w + xx];
                            const double out_v =
                                y.data()[((b * cout + c) * ho + r * yy + dy) * wo + r * xx + dx];
                            EXPECT_EQ(in_v, out_v);
                        }

    // permutation: the multiset of values is unchanged
    std::multiset<double> in_vals(x.data().begin(), x.data().end());
    std::multiset<double> out_vals(y.data().begin(), y.data().end());
    EXPECT_EQ(in_vals, out_vals);
}

TEST(PixelShuffle, BackwardIsInversePermutation) {
    Tensor x = gactest::random_tensor({1, 4, 2, 2}, 62);
    x.set_requires_grad(true);
    Tensor y = gac::pixel_shuffle(x, 2);
    backward(gac::sum(gac::mul(y, y.detach())));
    // d(sum(y * const))/dx places const back through the inverse map; with
    // const = y itself, grad must equal x bitwise.
    EXPECT_EQ(x.grad(), x.data());
}

TEST(PixelShuffle, IndivisibleChannelsRejected) {
    Tensor x = Tensor::zeros({1, 6, 2, 2});
    EXPECT_THROW(gac::pixel_shuffle(x, 2), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// residual / upsample blocks
// ---------------------------------------------------------------------------

TEST(ResidualBlock, ZeroedInnerPathIsIdentity) {
    gac::ResidualBlock block(3);
    // conv weights and biases start at zero; zero the batchnorm gains too
    block.bn1.gamma.data().assign(3, 0.0);
    block.bn2.gamma.data().assign(3, 0.0);
    Tensor x = gactest::random_tensor({2, 3, 4, 4}, 70);
    Tensor y = block.forward(x, Phase::frozen);
    EXPECT_EQ(y.data(), x.data());
}

TEST(ResidualBlock, ShapePreserved) {
    gac::ResidualBlock block(4);
    gactest::randomize_params(block, 71);
    Tensor x = gactest::random_tensor({2, 4, 5, 5}, 72);
    EXPECT_EQ(block.forward(x, Phase::frozen).shape(), x.shape());
}

TEST(ResidualBlock, SkipPathCarriesGradient) {
    gac::ResidualBlock block(2);
    gactest::randomize_params(block, 73);
    Tensor x = gactest::random_tensor({2, 2, 3, 3}, 74);
    auto f = [&](Tensor& t) { return gac::mean(gac::square(block.forward(t, Phase::frozen))); };
    EXPECT_LT(gac::grad_check(f, x).max_rel_dev, 1e-3);

    // saturate the inner path; the skip still propagates gradient
    for (auto& v : block.conv1.w.data()) v = 0.0;
    block.bn1.gamma.data().assign(2, 0.0);
    x.zero_grad();
    x.set_requires_grad(true);
    backward(gac::sum(block.forward(x, Phase::frozen)));
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(UpsampleBlock, ScaleTwoShape) {
    gac::UpsampleBlock up(64, 2);
    gactest::randomize_params(up, 80);
    Tensor x = gactest::random_tensor({1, 64, 8, 8}, 81);
    EXPECT_EQ(up.forward(x).shape(), (Shape{1, 64, 16, 16}));
}

TEST(UpsampleBlock, TwoFourComposesToEight) {
    gac::UpsampleBlock up2(8, 2), up4(8, 4);
    gactest::randomize_params(up2, 82);
    gactest::randomize_params(up4, 83);
    Tensor x = gactest::random_tensor({1, 8, 8, 8}, 84);
    Tensor y = up4.forward(up2.forward(x));
    EXPECT_EQ(y.shape(), (Shape{1, 8, 64, 64}));
}

TEST(UpsampleBlock, ScaleSevenShape) {
    gac::UpsampleBlock up(8, 7);
    gactest::randomize_params(up, 85);
    Tensor x = gactest::random_tensor({1, 8, 4, 4}, 86);
    EXPECT_EQ(up.forward(x).shape(), (Shape{1, 8, 28, 28}));
}

TEST(UpsampleBlock, UnsupportedScaleRejected) {
    EXPECT_THROW(gac::UpsampleBlock(8, 3), std::invalid_argument);
    EXPECT_THROW(gac::LayerSpec::upsample_block(8, 5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// softmax heads
// ---------------------------------------------------------------------------

TEST(Softmax, RowsSumToOneUnderLargeLogits) {
    Tensor logits = gactest::random_tensor({4, 10}, 90, -1e4, 1e4);
    Tensor p = gac::softmax(logits);
    for (int64_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 10; ++j) {
            const double v = p.data()[i * 10 + j];
            EXPECT_GT(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(SoftmaxCrossEntropy, CertainCorrectIsZero) {
    Tensor logits = Tensor::of({1, 3}, {100.0, 0.0, 0.0});
    auto ce = gac::softmax_cross_entropy(logits, {0});
    EXPECT_NEAR(ce.loss.item(), 0.0, 1e-6);
}

TEST(SoftmaxCrossEntropy, UniformIsLogK) {
    Tensor logits = Tensor::zeros({2, 10});
    auto ce = gac::softmax_cross_entropy(logits, {3, 7});
    EXPECT_NEAR(ce.loss.item(), 2.0 * std::log(10.0), 1e-9);
}

TEST(SoftmaxCrossEntropy, MatchesNaiveOracle) {
    Tensor logits = gactest::random_tensor({5, 7}, 91, -3.0, 3.0);
    std::vector<int> labels = {0, 6, 3, 2, 5};
    auto ce = gac::softmax_cross_entropy(logits, labels);

    double expect = 0.0;
    for (int64_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 7; ++j) s += std::exp(logits.data()[i * 7 + j]);
        const double p = std::exp(logits.data()[i * 7 + labels[i]]) / s;
        expect += -std::log(p);
        for (int64_t j = 0; j < 7; ++j) {
            const double pj = std::exp(logits.data()[i * 7 + j]) / s;
            EXPECT_NEAR(ce.probs.data()[i * 7 + j], pj, 1e-10);
        }
    }
    EXPECT_NEAR(ce.loss.item(), expect, 1e-10);
}

TEST(SoftmaxCrossEntropy, GradMatchesFiniteDifferences) {
    Tensor logits = gactest::random_tensor({4, 5}, 92, -2.0, 2.0);
    std::vector<int> labels = {1, 0, 4, 2};
    auto f = [&](Tensor& t) { return gac::softmax_cross_entropy(t, labels).loss; };
    EXPECT_LT(gac::grad_check(f, logits).max_rel_dev, 1e-3);
}

TEST(SoftmaxCrossEntropy, LabelOutOfRangeRejected) {
    Tensor logits = Tensor::zeros({2, 3});
    EXPECT_THROW(gac::softmax_cross_entropy(logits, {0, 3}), std::invalid_argument);
    EXPECT_THROW(gac::softmax_cross_entropy(logits, {-1, 0}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// dense + layer specs
// ---------------------------------------------------------------------------

TEST(Dense, ForwardAndGrad) {
    gac::DenseLayer layer(3, 2);
    gactest::randomize_params(layer, 95);
    Tensor x = gactest::random_tensor({4, 3}, 96);
    Tensor y = layer.forward(x);
    EXPECT_EQ(y.shape(), (Shape{4, 2}));
    auto f = [&](Tensor& t) { return gac::mean(gac::square(layer.forward(t))); };
    EXPECT_LT(gac::grad_check(f, x).max_rel_dev, 1e-3);
    auto fw = [&](Tensor&) { return gac::mean(gac::square(layer.forward(x))); };
    EXPECT_LT(gac::grad_check(fw, layer.w).max_rel_dev, 1e-3);
}

TEST(LayerSpec, ValidationAndCounts) {
    EXPECT_THROW(gac::LayerSpec::leakyrelu(0.0), std::invalid_argument);
    EXPECT_THROW(gac::LayerSpec::leakyrelu(1.0), std::invalid_argument);
    EXPECT_THROW(gac::LayerSpec::pixelshuffle(0), std::invalid_argument);

    EXPECT_EQ(gac::LayerSpec::conv(3, 8, 3).param_count(), 8 * 3 * 9 + 8);
    EXPECT_EQ(gac::LayerSpec::dense(10, 4).param_count(), 44);
    EXPECT_EQ(gac::LayerSpec::batchnorm(6).param_count(), 12);
    EXPECT_EQ(gac::LayerSpec::prelu(6).param_count(), 6);
    EXPECT_EQ(gac::LayerSpec::leakyrelu().param_count(), 0);

    // residual block: two 3x3 convs, two affine pairs, one slope vector
    gac::ParamSet params, buffers;
    gac::ResidualBlock block(5);
    block.collect(params, buffers, "res");
    EXPECT_EQ(params.scalar_count(), gac::LayerSpec::residual_block(5).param_count());

    gac::ParamSet up_params;
    gac::UpsampleBlock up(8, 2);
    up.collect(up_params, "up");
    EXPECT_EQ(up_params.scalar_count(), gac::LayerSpec::upsample_block(8, 2).param_count());
}
