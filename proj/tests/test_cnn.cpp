#include <gtest/gtest.h>

#include <cmath>

#include <inksig/cnn.hpp>
#include <inksig/model_io.hpp>

#include "test_support.hpp"

using namespace inksig;

namespace {

double loss_of(const Network<double>& net, std::span<const double> input, int label, std::uint64_t mask_seed) {
    Rng rng(mask_seed);
    const auto p = net.forward(input, true, &rng);
    return cross_entropy<double>(p, label);
}

/// Largest relative error between backward() and central differences over
/// every parameter. The dropout RNG is reseeded per evaluation so masks are
/// identical across the perturbed forwards.
double max_gradient_error(Network<double>& net, const std::vector<double>& input, int label) {
    constexpr std::uint64_t kMaskSeed = 77;
    Rng rng(kMaskSeed);
    ForwardCache<double> cache;
    net.forward(input, true, &rng, &cache);
    auto grads = net.zero_gradients();
    net.backward(cache, label, grads);

    double worst = 0.0;
    const double eps = 1e-6;
    for (std::size_t l = 0; l < net.params().size(); ++l) {
        for (auto* block : {&net.params()[l].weights, &net.params()[l].bias}) {
            const auto& g = block == &net.params()[l].weights ? grads[l].weights : grads[l].bias;
            for (std::size_t i = 0; i < block->size(); ++i) {
                const double saved = (*block)[i];
                (*block)[i] = saved + eps;
                const double up = loss_of(net, input, label, kMaskSeed);
                (*block)[i] = saved - eps;
                const double down = loss_of(net, input, label, kMaskSeed);
                (*block)[i] = saved;
                const double numeric = (up - down) / (2 * eps);
                const double err = std::abs(numeric - g[i]) / std::max({std::abs(numeric), std::abs(g[i]), 1e-7});
                worst = std::max(worst, err);
            }
        }
    }
    return worst;
}

std::vector<double> random_input(Rng& rng, const Network<double>& net, double zero_fraction = 0.0) {
    std::vector<double> in(net.shapes().front().size());
    for (auto& v : in) v = uniform(rng, 0.0, 1.0) < zero_fraction ? 0.0 : uniform(rng, -1.0, 1.0);
    return in;
}

void perturb_biases(Network<double>& net, Rng& rng) {
    for (auto& p : net.params())
        for (auto& b : p.bias) b = uniform(rng, -0.1, 0.1);
}

} // namespace

TEST(Architecture, DefaultStackShapes) {
    const auto spec = parse_architecture(kDefaultArchitecture, 15, 420);
    const auto shapes = infer_shapes(spec);
    const std::vector<int> spatial{96, 94, 47, 46, 23, 22, 11, 10, 5, 4, 2, 1};
    ASSERT_EQ(shapes.size(), 14u); // input + 11 hidden + FC + output
    for (std::size_t i = 0; i < spatial.size(); ++i) {
        EXPECT_EQ(shapes[i].h, spatial[i]) << i;
        EXPECT_EQ(shapes[i].w, spatial[i]) << i;
    }
    EXPECT_EQ(shapes[11], (Shape{480, 1, 1}));
    EXPECT_EQ(shapes[12], (Shape{512, 1, 1}));
    EXPECT_EQ(shapes[13], (Shape{420, 1, 1}));
    EXPECT_EQ(spec.layers[0].kernel, 3);
    for (std::size_t i = 1; i < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::conv) {
            EXPECT_EQ(spec.layers[i].kernel, 2);
        }
}

TEST(Architecture, ShortNetworksTakeTrailingDefaultRates) {
    const auto spec = parse_architecture("4C3-MP2-10FC", 1, 2, kDefaultDropout, 12);
    EXPECT_EQ(spec.layers[0].dropout, 0.1);
    EXPECT_EQ(spec.layers[1].dropout, 0.0);
    EXPECT_EQ(spec.layers[2].dropout, 0.5);
    EXPECT_EQ(spec.layers[3].dropout, 0.5);
}

TEST(Architecture, DropoutOnLastFourWeightingLayers) {
    const auto spec = parse_architecture(kDefaultArchitecture, 15, 10);
    // conv5 (index 8), conv6 (10), FC (11), output (12)
    EXPECT_DOUBLE_EQ(spec.layers[8].dropout, 0.1);
    EXPECT_DOUBLE_EQ(spec.layers[10].dropout, 0.1);
    EXPECT_DOUBLE_EQ(spec.layers[11].dropout, 0.5);
    EXPECT_DOUBLE_EQ(spec.layers[12].dropout, 0.5);
    for (int i : {0, 1, 2, 3, 4, 5, 6, 7, 9}) EXPECT_EQ(spec.layers[i].dropout, 0.0) << i;
}

TEST(Architecture, RejectsNonIntegralShapes) {
    EXPECT_THROW(parse_architecture("80C2-MP2-10FC", 1, 2), InvalidInput); // 95 is odd
    EXPECT_THROW(parse_architecture("80C3-MP2-MP2-MP2-MP2-MP2-MP2", 1, 2, {}), InvalidInput);
    EXPECT_THROW(parse_architecture("80X3", 1, 2), InvalidInput);
    EXPECT_THROW(parse_architecture("80C3--10FC", 1, 2), InvalidInput);
    EXPECT_NO_THROW(parse_architecture("Input-80C3-MP2-10FC-Output", 1, 2, {}, 12));
    EXPECT_THROW(parse_architecture("4C3-MP2-10FC", 1, 2, std::vector<double>{1.0}, 12), InvalidInput);
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
    auto spec = parse_architecture("4C3-MP2-8FC", 2, 5, {}, 8);
    Network<double> net(spec, 1);
    for (auto& p : net.params()) {
        std::fill(p.weights.begin(), p.weights.end(), 0.0);
        std::fill(p.bias.begin(), p.bias.end(), 0.0);
    }
    const std::vector<double> in(net.shapes().front().size(), 0.0);
    for (double p : net.forward(in)) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(Forward, DefaultStackOn96x96ReachesOneByOne) {
    Network<float> net(parse_architecture(kDefaultArchitecture, 15, 4), 3);
    Rng rng(1);
    std::vector<float> in(net.shapes().front().size(), 0.0f);
    for (std::size_t i = 0; i < in.size(); i += 97) in[i] = 1.0f;
    ForwardCache<float> cache;
    const auto p = net.forward(in, true, &rng, &cache);
    EXPECT_EQ(cache.outputs[10].size(), 480u);
    double sum = 0;
    for (float v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Forward, DropoutRateZeroTrainingEqualsInference) {
    auto spec = parse_architecture("4C3-MP2-6C2-8FC", 3, 4, std::vector<double>{0, 0, 0, 0}, 10);
    Network<float> net(spec, 5);
    Rng rng(9);
    std::vector<float> in(net.shapes().front().size());
    for (auto& v : in) v = static_cast<float>(uniform(rng, -1, 1));
    EXPECT_EQ(net.forward(in, true, &rng), net.forward(in, false));
}

TEST(Forward, ShapeMismatchThrows) {
    Network<float> net(parse_architecture("4C3-MP2-8FC", 2, 3, {}, 8), 1);
    EXPECT_THROW(net.forward(std::vector<float>(10, 0.0f)), InvalidInput);
}

TEST(Forward, SoftmaxIsDistribution) {
    Rng rng(10);
    for (int trial = 0; trial < 30; ++trial) {
        Network<double> net(parse_architecture("3C3-MP2-5FC", 2, 6, {}, 8), trial);
        perturb_biases(net, rng);
        auto in = random_input(rng, net);
        for (auto& v : in) v *= 20.0;
        double sum = 0;
        for (double p : net.forward(in)) {
            EXPECT_GE(p, 0.0);
            sum += p;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Forward, ConvLayerIsTranslationCovariant) {
    Network<double> net(parse_architecture("3C3-MP2-4FC", 2, 3, {}, 16), 4);
    Rng rng(2);
    perturb_biases(net, rng);
    const Shape in_shape = net.shapes()[0];
    std::vector<double> a(in_shape.size(), 0.0), b(in_shape.size(), 0.0);
    for (int y = 2; y < 10; ++y)
        for (int x = 2; x < 10; ++x)
            for (int c = 0; c < 2; ++c) {
                const double v = uniform(rng, -1, 1);
                a[(y * 16 + x) * 2 + c] = v;
                b[((y + 2) * 16 + x + 2) * 2 + c] = v;
            }
    ForwardCache<double> ca, cb;
    Rng r1(0), r2(0);
    net.forward(a, true, &r1, &ca);
    net.forward(b, true, &r2, &cb);
    const Shape os = net.shapes()[1];
    for (int y = 0; y + 2 < os.h; ++y)
        for (int x = 0; x + 2 < os.w; ++x)
            for (int o = 0; o < os.c; ++o)
                EXPECT_EQ(ca.outputs[0][(y * os.w + x) * os.c + o], cb.outputs[0][((y + 2) * os.w + x + 2) * os.c + o]);
}

TEST(Backward, MatchesCentralDifferencesConvPoolFc) {
    Rng rng(31);
    Network<double> net(parse_architecture("3C3-MP2-4C2-MP2-5FC", 2, 3, {}, 12), 8);
    perturb_biases(net, rng);
    EXPECT_LT(max_gradient_error(net, random_input(rng, net), 1), 1e-4);
}

TEST(Backward, MatchesCentralDifferencesWithDropoutAndSparseInput) {
    Rng rng(32);
    Network<double> net(parse_architecture("4C3-MP2-3C2-6FC", 2, 4, std::vector<double>{0.3, 0.5, 0.5}, 8), 9);
    perturb_biases(net, rng);
    EXPECT_LT(max_gradient_error(net, random_input(rng, net, 0.7), 2), 1e-4);
}

TEST(Backward, MatchesCentralDifferencesOnToy6x6) {
    Rng rng(33);
    Network<double> net(parse_architecture("2C3-MP2-3C2-4FC", 1, 2, {}, 6), 10);
    perturb_biases(net, rng);
    for (int label = 0; label < 2; ++label) EXPECT_LT(max_gradient_error(net, random_input(rng, net), label), 1e-4);
}

TEST(Backward, DuplicatedSampleEqualsSingleSample) {
    Rng rng(40);
    Network<double> net(parse_architecture("3C3-MP2-4FC", 2, 3, {}, 8), 1);
    const auto in = random_input(rng, net);
    ForwardCache<double> cache;
    net.forward(in, false, nullptr, &cache);
    cache.masks.assign(cache.outputs.size(), {});
    auto single = net.zero_gradients();
    net.backward(cache, 0, single, 1.0);
    auto pair = net.zero_gradients();
    net.backward(cache, 0, pair, 0.5);
    net.backward(cache, 0, pair, 0.5);
    for (std::size_t l = 0; l < single.size(); ++l)
        for (std::size_t i = 0; i < single[l].weights.size(); ++i)
            EXPECT_NEAR(pair[l].weights[i], single[l].weights[i], 1e-15);
}

TEST(Backward, SaturatedCorrectPredictionHasTinyGradient) {
    Rng rng(41);
    Network<double> net(parse_architecture("3C3-MP2-4FC", 1, 3, {}, 8), 2);
    net.params().back().bias = {60.0, 0.0, 0.0};
    ForwardCache<double> cache;
    net.forward(random_input(rng, net), false, nullptr, &cache);
    cache.masks.assign(cache.outputs.size(), {});
    auto g = net.zero_gradients();
    net.backward(cache, 0, g);
    double norm = 0;
    for (const auto& p : g) {
        for (double v : p.weights) norm += v * v;
        for (double v : p.bias) norm += v * v;
    }
    EXPECT_LT(std::sqrt(norm), 1e-6);
}

TEST(Backward, RequiresCache) {
    Network<double> net(parse_architecture("3C3-MP2-4FC", 1, 3, {}, 8), 2);
    auto g = net.zero_gradients();
    EXPECT_THROW(net.backward(ForwardCache<double>{}, 0, g), InvalidInput);
}

TEST(Dropout, InvertedDropoutPreservesExpectedPreactivation) {
    // Linear hidden layer with dropout on its input, so outputs[0] is the
    // pre-activation. Positive weights and inputs keep the mean well away
    // from zero.
    NetworkSpec spec{1, 4, 2, {}};
    spec.layers.push_back({LayerKind::fully_connected, 0, 1, 6, Activation::none, 0.5});
    spec.layers.push_back({LayerKind::softmax_output, 0, 1, 2, Activation::none, 0.0});
    Network<double> net(spec, 3);
    Rng rng(5);
    for (auto& w : net.params()[0].weights) w = uniform(rng, 0.5, 1.5);
    std::vector<double> in(16);
    for (auto& v : in) v = uniform(rng, 0.5, 1.5);
    ForwardCache<double> ref;
    net.forward(in, false, nullptr, &ref);

    std::vector<double> mean(6, 0.0);
    ForwardCache<double> c;
    constexpr int kMasks = 10000;
    for (int i = 0; i < kMasks; ++i) {
        net.forward(in, true, &rng, &c);
        for (int u = 0; u < 6; ++u) mean[u] += c.outputs[0][u] / kMasks;
    }
    for (int u = 0; u < 6; ++u) EXPECT_NEAR(mean[u], ref.outputs[0][u], 0.01 * ref.outputs[0][u]) << u;
}

TEST(Sgd, ZeroLearningRateLeavesWeights) {
    Network<float> net(parse_architecture("3C3-MP2-4FC", 1, 3, {}, 8), 2);
    const auto before = net.params();
    auto g = net.zero_gradients();
    for (auto& p : g) std::fill(p.weights.begin(), p.weights.end(), 1.0f);
    net.sgd_step(g, 0.0f);
    EXPECT_EQ(net.params(), before);
    net.sgd_step(g, 0.5f);
    EXPECT_FLOAT_EQ(net.params()[0].weights[0], before[0].weights[0] - 0.5f);
}

TEST(ModelIo, RoundTripIsBitExact) {
    Rng rng(50);
    Network<float> net(parse_architecture("4C3-MP2-6C2-8FC", 3, 5, kDefaultDropout, 10), 6);
    const auto bytes = serialize_model(net);
    ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "INKSIG01");
    const auto back = deserialize_model<float>(bytes);
    EXPECT_EQ(back.params(), net.params());
    EXPECT_EQ(serialize_model(back), bytes);
    std::vector<float> in(net.shapes().front().size());
    for (auto& v : in) v = static_cast<float>(uniform(rng, -1, 1));
    EXPECT_EQ(back.forward(in), net.forward(in));
}

TEST(ModelIo, RejectsCorruptFiles) {
    Network<float> net(parse_architecture("4C3-MP2-8FC", 1, 2, {}, 8), 6);
    auto bytes = serialize_model(net);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_model<float>(bad_magic), ParseError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(deserialize_model<float>(truncated), ParseError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize_model<float>(trailing), ParseError);
    auto bad_kind = bytes;
    bad_kind[20] = 9;
    EXPECT_THROW(deserialize_model<float>(bad_kind), ParseError);
}
