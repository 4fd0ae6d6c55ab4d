#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "flowtrack/layers.hpp"
#include "flowtrack/network.hpp"
#include "flowtrack/rng.hpp"
#include "oracles.hpp"

using namespace flowtrack;

namespace {

ConvLayer make_conv(int k, int in_c, int out_c, int stride, int padding, Activation act,
                    std::uint64_t seed, bool depthwise = false) {
    ConvLayer l;
    l.kernel_h = l.kernel_w = k;
    l.in_channels = in_c;
    l.out_channels = out_c;
    l.stride = stride;
    l.padding = padding;
    l.activation = act;
    l.depthwise_separable = depthwise;
    Rng rng(seed);
    init_params(l, rng);
    return l;
}

}  // namespace

TEST(DenseForward, UnitWeightsSumInputs) {
    DenseLayer l;
    l.in_dim = 3;
    l.out_dim = 1;
    l.activation = Activation::Identity;
    l.weights = {1.0f, 1.0f, 1.0f};
    l.bias = {0.0f};
    auto y = dense_forward(l, {1.0f, 2.0f, 3.0f});
    ASSERT_EQ(y.size(), 1u);
    EXPECT_FLOAT_EQ(y[0], 6.0f);
}

TEST(DenseForward, ZeroWeightsForceBias) {
    DenseLayer l;
    l.in_dim = 3;
    l.out_dim = 1;
    l.activation = Activation::Relu;
    l.weights = {0.0f, 0.0f, 0.0f};
    l.bias = {5.0f};
    auto y = dense_forward(l, {-7.0f, 11.0f, 0.25f});
    EXPECT_FLOAT_EQ(y[0], 5.0f);
}

TEST(DenseForward, MatchesScalarLoopOracle) {
    DenseLayer l;
    l.in_dim = 4;
    l.out_dim = 3;
    l.activation = Activation::Sigmoid;
    Rng rng(42);
    init_params(l, rng);
    std::vector<float> x = {0.3f, -0.8f, 0.1f, 0.9f};
    auto got = dense_forward(l, x);
    auto want = oracle::dense_forward_ref(l, x);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(got[j], want[j], 1e-6);
}

TEST(DenseForward, DimensionMismatchThrows) {
    DenseLayer l;
    l.in_dim = 4;
    l.out_dim = 2;
    Rng rng(1);
    init_params(l, rng);
    EXPECT_THROW(dense_forward(l, {1.0f, 2.0f}), ShapeError);
}

TEST(ConvForward, OneByOneKernelAffine) {
    ConvLayer l;
    l.kernel_h = l.kernel_w = 1;
    l.in_channels = l.out_channels = 1;
    l.weights = {3.0f};
    l.bias = {1.0f};
    Tensor in(4, 5, 1, 2.0f);
    Tensor out = conv2d_forward(l, in);
    ASSERT_EQ(out.h, 4);
    ASSERT_EQ(out.w, 5);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 7.0f);
}

TEST(ConvForward, CenteredDeltaKernelIsIdentity) {
    ConvLayer l;
    l.kernel_h = l.kernel_w = 3;
    l.in_channels = l.out_channels = 1;
    l.padding = 1;
    l.weights.assign(9, 0.0f);
    l.weights[4] = 1.0f;  // center tap
    l.bias = {0.0f};
    Rng rng(7);
    Tensor in = oracle::random_tensor(6, 6, 1, rng);
    Tensor out = conv2d_forward(l, in);
    ASSERT_TRUE(out.same_shape(in));
    for (std::size_t i = 0; i < in.data.size(); ++i) EXPECT_FLOAT_EQ(out.data[i], in.data[i]);
}

TEST(ConvForward, MatchesSixLoopOracle) {
    ConvLayer l = make_conv(3, 2, 4, 1, 0, Activation::Identity, 11);
    Rng rng(13);
    Tensor in = oracle::random_tensor(5, 5, 2, rng);
    Tensor got = conv2d_forward(l, in);
    Tensor want = oracle::conv_forward_ref(l, in);
    ASSERT_TRUE(got.same_shape(want));
    for (std::size_t i = 0; i < got.data.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-5);
}

TEST(ConvForward, StridePaddingActivationVariantsMatchOracle) {
    Rng rng(17);
    for (auto act : {Activation::Relu, Activation::LeakyRelu, Activation::Sigmoid}) {
        for (int stride : {1, 2}) {
            for (int padding : {0, 1}) {
                ConvLayer l = make_conv(3, 3, 2, stride, padding, act, rng.next_u64());
                Tensor in = oracle::random_tensor(7, 6, 3, rng);
                Tensor got = conv2d_forward(l, in);
                Tensor want = oracle::conv_forward_ref(l, in);
                ASSERT_TRUE(got.same_shape(want));
                for (std::size_t i = 0; i < got.data.size(); ++i)
                    ASSERT_NEAR(got.data[i], want.data[i], 1e-5);
            }
        }
    }
}

TEST(ConvForward, OutputShapeFollowsFormula) {
    ConvLayer l = make_conv(3, 1, 2, 2, 1, Activation::Identity, 5);
    Tensor in(11, 8, 1, 0.5f);
    Tensor out = conv2d_forward(l, in);
    EXPECT_EQ(out.h, (11 + 2 - 3) / 2 + 1);
    EXPECT_EQ(out.w, (8 + 2 - 3) / 2 + 1);
    EXPECT_EQ(out.c, 2);
}

TEST(ConvForward, ChannelMismatchThrows) {
    ConvLayer l = make_conv(3, 2, 2, 1, 0, Activation::Identity, 5);
    Tensor in(5, 5, 3, 0.0f);
    EXPECT_THROW(conv2d_forward(l, in), ShapeError);
}

TEST(ConvForward, KernelLargerThanPaddedInputThrows) {
    ConvLayer l = make_conv(5, 1, 1, 1, 0, Activation::Identity, 5);
    Tensor in(4, 4, 1, 0.0f);
    EXPECT_THROW(conv2d_forward(l, in), ShapeError);
}

TEST(ConvForward, DepthwiseSeparableEquivalentFactoredForm) {
    // depthwise + pointwise applied by the layer == the same two stages by hand
    ConvLayer l = make_conv(3, 3, 5, 1, 1, Activation::LeakyRelu, 23, true);
    Rng rng(29);
    Tensor in = oracle::random_tensor(6, 7, 3, rng);
    Tensor got = conv2d_forward(l, in);

    ConvLayer depth;  // per-channel spatial stage as grouped single-channel convs
    depth.kernel_h = depth.kernel_w = 3;
    depth.in_channels = depth.out_channels = 1;
    depth.padding = 1;
    depth.bias = {0.0f};
    Tensor mid(6, 7, 3);
    for (int ch = 0; ch < 3; ++ch) {
        depth.weights.assign(9, 0.0f);
        for (int k = 0; k < 9; ++k) depth.weights[k] = l.weights[k * 3 + ch];
        Tensor chan(6, 7, 1);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 7; ++x) chan.at(y, x, 0) = in.at(y, x, ch);
        Tensor r = oracle::conv_forward_ref(depth, chan);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 7; ++x) mid.at(y, x, ch) = r.at(y, x, 0);
    }
    ConvLayer point;
    point.kernel_h = point.kernel_w = 1;
    point.in_channels = 3;
    point.out_channels = 5;
    point.activation = Activation::LeakyRelu;
    point.weights.assign(l.weights.begin() + 27, l.weights.end());
    point.bias = l.bias;
    Tensor want = oracle::conv_forward_ref(point, mid);
    ASSERT_TRUE(got.same_shape(want));
    for (std::size_t i = 0; i < got.data.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-5);
}

TEST(MaxPool, ConstantTensorStaysConstant) {
    Tensor in(6, 6, 2, 3.5f);
    Tensor out = max_pool(in, 2, 2);
    EXPECT_EQ(out.h, 3);
    EXPECT_EQ(out.w, 3);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 3.5f);
}

TEST(MaxPool, TwoByTwoPicksMaximum) {
    Tensor in(2, 2, 1);
    in.data = {1.0f, 2.0f, 3.0f, 4.0f};
    Tensor out = max_pool(in, 2, 2);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_FLOAT_EQ(out.data[0], 4.0f);
}

TEST(MaxPool, MatchesLoopOracle) {
    Rng rng(31);
    Tensor in = oracle::random_tensor(8, 8, 3, rng);
    Tensor got = max_pool(in, 2, 2);
    Tensor want = oracle::max_pool_ref(in, 2, 2);
    ASSERT_TRUE(got.same_shape(want));
    for (std::size_t i = 0; i < got.data.size(); ++i) EXPECT_FLOAT_EQ(got.data[i], want.data[i]);
}

TEST(MaxPool, WindowLargerThanInputThrows) {
    Tensor in(3, 3, 1, 0.0f);
    EXPECT_THROW(max_pool(in, 4, 1), ShapeError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    Network net({Layer(make_conv(3, 1, 2, 1, 1, Activation::Relu, 3))}, 3);
    Rng rng(5);
    Tensor in = oracle::random_tensor(5, 5, 1, rng);
    ForwardCache cache;
    Tensor out = net.forward(in, &cache);
    Tensor zero(out.h, out.w, out.c);
    Gradients g = net.backward(cache, zero);
    for (const auto& lg : g.layers) {
        for (float v : lg.dweights) EXPECT_FLOAT_EQ(v, 0.0f);
        for (float v : lg.dbias) EXPECT_FLOAT_EQ(v, 0.0f);
    }
    for (float v : g.dinput.data) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Backward, LinearDenseLayerClosedForm) {
    // identity activation: dL/dW_ij == x_i * upstream_j
    DenseLayer d;
    d.in_dim = 3;
    d.out_dim = 2;
    d.activation = Activation::Identity;
    Rng rng(9);
    init_params(d, rng);
    Network net({Layer(d)}, 9);
    Tensor x = Tensor::vec({0.5f, -1.5f, 2.0f});
    ForwardCache cache;
    net.forward(x, &cache);
    Tensor up = Tensor::vec({0.7f, -0.2f});
    Gradients g = net.backward(cache, up);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            EXPECT_NEAR(g.layers[0].dweights[i * 2 + j], x.data[i] * up.data[j], 1e-6);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(g.layers[0].dbias[j], up.data[j], 1e-6);
}

TEST(Backward, WithoutForwardCacheThrowsStateError) {
    Network net({Layer(make_conv(1, 1, 1, 1, 0, Activation::Identity, 2))}, 2);
    ForwardCache cache;  // never filled
    Tensor up(1, 1, 1, 1.0f);
    EXPECT_THROW(net.backward(cache, up), StateError);
}

TEST(Backward, TwoLayerConvNetPassesFiniteDifferences) {
    // conv(3x3, relu) -> conv(3x3 stride 2, identity); every parameter
    // checked against central differences at single-precision tolerances
    std::vector<Layer> layers;
    layers.emplace_back(make_conv(3, 1, 3, 1, 1, Activation::Relu, 101));
    layers.emplace_back(make_conv(3, 3, 2, 2, 0, Activation::Identity, 102));
    Network net(std::move(layers), 103);
    Rng rng(104);
    Tensor in = oracle::random_tensor(8, 8, 1, rng);
    Tensor probe = net.forward(in);
    Tensor wmap = oracle::random_tensor(probe.h, probe.w, probe.c, rng);
    oracle::FdStats stats = oracle::fd_check_network(net, in, wmap, 1e-3, 1e-2, 1e-4);
    EXPECT_GT(stats.checked, 50u);
    EXPECT_GE(static_cast<double>(stats.passed), 0.99 * static_cast<double>(stats.checked))
        << "worst rel err " << stats.worst_rel;
}

TEST(Backward, EveryLayerTypePassesFiniteDifferences) {
    std::vector<Layer> layers;
    layers.emplace_back(make_conv(3, 1, 4, 1, 1, Activation::LeakyRelu, 201));
    layers.emplace_back(MaxPoolLayer{2, 2});
    layers.emplace_back(make_conv(3, 4, 3, 1, 0, Activation::Sigmoid, 202, true));  // separable
    DenseLayer d;
    d.in_dim = 2 * 2 * 3;
    d.out_dim = 4;
    d.activation = Activation::Identity;
    Rng drng(203);
    init_params(d, drng);
    layers.emplace_back(d);
    Network net(std::move(layers), 204);
    Rng rng(205);
    Tensor in = oracle::random_tensor(8, 8, 1, rng);
    Tensor probe = net.forward(in);
    Tensor wmap = oracle::random_tensor(probe.h, probe.w, probe.c, rng);
    oracle::FdStats stats = oracle::fd_check_network(net, in, wmap, 1e-3, 1e-2, 1e-4);
    EXPECT_GE(static_cast<double>(stats.passed), 0.99 * static_cast<double>(stats.checked))
        << "worst rel err " << stats.worst_rel;
}

TEST(Backward, InputGradientMatchesFiniteDifferences) {
    Network net({Layer(make_conv(3, 1, 2, 1, 1, Activation::Relu, 301))}, 301);
    Rng rng(302);
    Tensor in = oracle::random_tensor(5, 5, 1, rng);
    Tensor probe = net.forward(in);
    Tensor wmap = oracle::random_tensor(probe.h, probe.w, probe.c, rng);
    ForwardCache cache;
    net.forward(in, &cache);
    Gradients g = net.backward(cache, wmap);
    int mismatches = 0;
    for (std::size_t k = 0; k < in.data.size(); ++k) {
        Tensor pert = in;
        const double step = 1e-3;
        pert.data[k] = in.data[k] + static_cast<float>(step);
        double up = oracle::weighted_output_sum(net, pert, wmap);
        pert.data[k] = in.data[k] - static_cast<float>(step);
        double dn = oracle::weighted_output_sum(net, pert, wmap);
        double num = (up - dn) / (2.0 * step);
        double ana = g.dinput.data[k];
        double denom = std::max(std::fabs(num), std::fabs(ana));
        if (std::fabs(num - ana) > 1e-4 && (denom == 0 || std::fabs(num - ana) / denom > 1e-2))
            ++mismatches;
    }
    EXPECT_EQ(mismatches, 0);
}

TEST(SgdStep, ZeroLearningRateLeavesParamsUnchanged) {
    Network net({Layer(make_conv(3, 1, 2, 1, 1, Activation::Relu, 41))}, 41);
    Rng rng(42);
    Tensor in = oracle::random_tensor(5, 5, 1, rng);
    ForwardCache cache;
    Tensor out = net.forward(in, &cache);
    Tensor up(out.h, out.w, out.c, 1.0f);
    Gradients g = net.backward(cache, up);
    Network stepped = sgd_step(net, g, 0.0f);
    const auto& a = std::get<ConvLayer>(net.layers()[0]);
    const auto& b = std::get<ConvLayer>(stepped.layers()[0]);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.bias, b.bias);
}

TEST(SgdStep, SingleWeightArithmetic) {
    DenseLayer d;
    d.in_dim = 1;
    d.out_dim = 1;
    d.weights = {1.0f};
    d.bias = {0.0f};
    Network net;  // default ctor keeps the hand-set weights
    net.layers().emplace_back(d);
    Gradients g;
    g.layers.resize(1);
    g.layers[0].dweights = {2.0f};
    g.layers[0].dbias = {0.0f};
    Network stepped = sgd_step(net, g, 0.1f);
    EXPECT_NEAR(std::get<DenseLayer>(stepped.layers()[0]).weights[0], 0.8f, 1e-7);
}

TEST(SgdStep, ConvergesOnQuadratic) {
    // minimize (w - 3)^2 from w = 0 with lr 0.1: gradient 2(w - 3)
    float w = 0.0f;
    DenseLayer d;
    d.in_dim = 1;
    d.out_dim = 1;
    d.weights = {w};
    d.bias = {0.0f};
    Network net;
    net.layers().emplace_back(d);
    for (int i = 0; i < 100; ++i) {
        float cur = std::get<DenseLayer>(net.layers()[0]).weights[0];
        Gradients g;
        g.layers.resize(1);
        g.layers[0].dweights = {2.0f * (cur - 3.0f)};
        g.layers[0].dbias = {0.0f};
        net.apply_sgd(g, 0.1f);
    }
    EXPECT_LT(std::fabs(std::get<DenseLayer>(net.layers()[0]).weights[0] - 3.0f), 1e-3);
}

TEST(SgdStep, NonFiniteGradientNamesLayer) {
    DenseLayer d;
    d.in_dim = 1;
    d.out_dim = 1;
    d.weights = {1.0f};
    d.bias = {0.0f};
    Network net;
    net.layers().emplace_back(d);
    Gradients g;
    g.layers.resize(1);
    g.layers[0].dweights = {std::numeric_limits<float>::quiet_NaN()};
    g.layers[0].dbias = {0.0f};
    try {
        net.apply_sgd(g, 0.1f);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
    }
}

TEST(Network, ForwardIsDeterministic) {
    Network a({Layer(make_conv(3, 1, 4, 2, 1, Activation::LeakyRelu, 77))}, 77);
    Network b({Layer(make_conv(3, 1, 4, 2, 1, Activation::LeakyRelu, 77))}, 77);
    Rng rng(78);
    Tensor in = oracle::random_tensor(9, 9, 1, rng);
    Tensor ya = a.forward(in);
    Tensor yb = b.forward(in);
    EXPECT_EQ(ya.data, yb.data);
}

TEST(Network, ForwardOutputsStayFinite) {
    std::vector<Layer> layers;
    layers.emplace_back(make_conv(3, 1, 8, 2, 1, Activation::LeakyRelu, 88));
    layers.emplace_back(make_conv(3, 8, 16, 2, 1, Activation::Sigmoid, 89));
    Network net(std::move(layers), 88);
    Rng rng(90);
    Tensor in = oracle::random_tensor(16, 16, 1, rng, 0.0f, 1.0f);
    ForwardCache cache;
    Tensor out = net.forward(in, &cache);
    EXPECT_TRUE(out.all_finite());
    Tensor up(out.h, out.w, out.c, 0.5f);
    Gradients g = net.backward(cache, up);
    EXPECT_TRUE(g.dinput.all_finite());
}

TEST(WeightFile, RoundTripIsBitExact) {
    std::vector<Layer> layers;
    layers.emplace_back(make_conv(3, 1, 4, 2, 1, Activation::LeakyRelu, 55));
    layers.emplace_back(MaxPoolLayer{2, 2});
    DenseLayer d;
    d.in_dim = 16;
    d.out_dim = 3;
    d.activation = Activation::Sigmoid;
    Rng rng(56);
    init_params(d, rng);
    layers.emplace_back(d);
    Network net(std::move(layers), 55);

    std::ostringstream os(std::ios::binary);
    save_networks(os, {&net});
    std::string blob = os.str();

    std::istringstream is(blob, std::ios::binary);
    std::vector<Layer> loaded = load_layers(is);
    ASSERT_EQ(loaded.size(), net.layers().size());

    Network reloaded;
    reloaded.layers() = loaded;
    std::ostringstream os2(std::ios::binary);
    save_networks(os2, {&reloaded});
    EXPECT_EQ(blob, os2.str());
}

TEST(WeightFile, BadMagicThrowsIntegrityError) {
    std::istringstream is(std::string("NOPE\x01\x00\x00\x00", 8), std::ios::binary);
    EXPECT_THROW(load_layers(is), DataIntegrityError);
}

TEST(WeightFile, TruncatedPayloadThrows) {
    DenseLayer d;
    d.in_dim = 4;
    d.out_dim = 4;
    Rng rng(3);
    init_params(d, rng);
    Network net({Layer(d)}, 3);
    std::ostringstream os(std::ios::binary);
    save_networks(os, {&net});
    std::string blob = os.str().substr(0, os.str().size() - 6);
    std::istringstream is(blob, std::ios::binary);
    EXPECT_THROW(load_layers(is), DataIntegrityError);
}
