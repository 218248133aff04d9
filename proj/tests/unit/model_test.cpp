#include <gtest/gtest.h>

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ape/model.hpp"
#include "ape/numerics.hpp"
#include "ape/toydata.hpp"
#include "test_support.hpp"

using ape::Field2D;
namespace model = ape::model;

namespace {

// Random weights scaled up so both classes see non-trivial probabilities.
model::ConvNet random_net(int side, std::uint64_t seed) {
    return model::ConvNet(model::ClassifierParams::random(side, seed));
}

} // namespace

TEST(ConvNet, ProbabilitiesAreNormalized) {
    const auto net = random_net(16, 1);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto p = net.predict(ape::testing::random_field(16, 16, s)).probs;
        EXPECT_GE(p[0], 0.0);
        EXPECT_GE(p[1], 0.0);
        EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
    }
}

TEST(ConvNet, ZeroParamsGiveHalf) {
    const model::ConvNet net(model::ClassifierParams::zeros(16));
    const auto p = net.predict(ape::testing::random_field(16, 16, 3)).probs;
    EXPECT_EQ(p[0], 0.5);
    EXPECT_EQ(p[1], 0.5);
}

TEST(ConvNet, Deterministic) {
    const auto net = random_net(16, 2);
    const Field2D img = ape::testing::random_field(16, 16, 4);
    EXPECT_EQ(net.predict(img).probs, net.predict(img).probs);
    EXPECT_EQ(net.input_gradient(img, 1), net.input_gradient(img, 1));
}

TEST(ConvNet, RejectsWrongShapes) {
    const auto net = random_net(16, 2);
    EXPECT_THROW(net.predict(Field2D(8, 16)), std::invalid_argument);
    EXPECT_THROW(net.input_gradient(Field2D(16, 16), 2), std::invalid_argument);
    auto p = model::ClassifierParams::zeros(16);
    p.dense_w.pop_back();
    EXPECT_THROW(model::ConvNet{p}, std::invalid_argument);
}

TEST(ConvNet, InputGradientMatchesFiniteDifferences) {
    int checked = 0;
    for (std::uint64_t draw = 0; draw < 24; ++draw) {
        const auto net = random_net(8, 100 + draw);
        const Field2D img = ape::testing::random_field(8, 8, 200 + draw);
        const int cls = static_cast<int>(draw % 2);
        const Field2D analytic = net.input_gradient(img, cls);
        const Field2D numeric = ape::finite_diff_gradient(
            [&](const Field2D& x) { return net.predict(x).probs[cls]; }, img, 1e-6);
        if (ape::max_abs(numeric) < 1e-9) continue;
        EXPECT_LT(ape::max_relative_error(analytic, numeric), 1e-5) << "draw " << draw;
        ++checked;
    }
    EXPECT_GE(checked, 20);
}

TEST(ConvNet, ClassGradientsAreOpposite) {
    const auto net = random_net(16, 5);
    const Field2D img = ape::testing::random_field(16, 16, 6);
    const Field2D g0 = net.input_gradient(img, 0);
    const Field2D g1 = net.input_gradient(img, 1);
    for (std::size_t i = 0; i < g0.size(); ++i) EXPECT_NEAR(g0[i], -g1[i], 1e-15);
}

TEST(ConvNet, ZeroImageZeroParamsGiveZeroGradient) {
    const model::ConvNet net(model::ClassifierParams::zeros(8));
    EXPECT_EQ(net.input_gradient(Field2D(8, 8, 0.0), 1), Field2D(8, 8, 0.0));
}

TEST(ConvNet, ParameterGradientMatchesFiniteDifferences) {
    auto params = model::ClassifierParams::random(8, 7);
    const Field2D img = ape::testing::random_field(8, 8, 8);
    auto grad = model::ClassifierParams::zeros(8);
    model::ConvNet(params).loss_and_accumulate(img, 1, grad);
    auto pt = params.tensors();
    auto gt = grad.tensors();
    for (std::size_t t = 0; t < pt.size(); ++t) {
        auto& data = *pt[t].data;
        for (std::size_t i = 0; i < data.size(); i += 7) {
            const double keep = data[i];
            auto loss_at = [&](double v) {
                data[i] = v;
                auto scratch = model::ClassifierParams::zeros(8);
                return model::ConvNet(params).loss_and_accumulate(img, 1, scratch);
            };
            const double h = 1e-6;
            const double numeric = (loss_at(keep + h) - loss_at(keep - h)) / (2 * h);
            data[i] = keep;
            EXPECT_NEAR((*gt[t].data)[i], numeric, 1e-6 + 1e-5 * std::abs(numeric))
                << pt[t].name << "[" << i << "]";
        }
    }
}

TEST(RocAuc, Examples) {
    EXPECT_DOUBLE_EQ(model::roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9},
                                    std::vector<int>{0, 0, 1, 1}),
                     1.0);
    EXPECT_DOUBLE_EQ(model::roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5},
                                    std::vector<int>{0, 1, 0, 1}),
                     0.5);
    EXPECT_DOUBLE_EQ(model::roc_auc(std::vector<double>{0.9, 0.8, 0.3, 0.4},
                                    std::vector<int>{1, 1, 0, 0}),
                     1.0);
    // One of four pos/neg pairs is inverted, one tied.
    EXPECT_DOUBLE_EQ(model::roc_auc(std::vector<double>{0.9, 0.4, 0.4, 0.6},
                                    std::vector<int>{1, 1, 0, 0}),
                     (2.0 + 0.5) / 4.0);
    EXPECT_THROW(model::roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}),
                 std::invalid_argument);
}

TEST(Train, ReducesLossAndIsDeterministic) {
    ape::toydata::ToyConfig cfg;
    cfg.count = 64;
    cfg.side = 32;
    cfg.lesion_radius_min = 3;
    cfg.lesion_radius_max = 5;
    const auto samples = ape::toydata::generate(cfg);
    std::vector<Field2D> images;
    std::vector<int> labels;
    for (const auto& s : samples) {
        images.push_back(s.image);
        labels.push_back(s.label);
    }
    model::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 16;
    const auto a = model::train(images, labels, tc);
    const auto b = model::train(images, labels, tc);
    ASSERT_EQ(a.epoch_losses.size(), 2u);
    EXPECT_LT(a.epoch_losses[0], a.initial_loss);
    EXPECT_EQ(a.params, b.params);
    tc.epochs = 0;
    EXPECT_THROW(model::train(images, labels, tc), std::invalid_argument);
}

TEST(Checkpoint, RoundTripsExactly) {
    model::Checkpoint c{model::ClassifierParams::random(16, 9), 1234567890123ULL, 20};
    c.params.dense_b = {0.1 + 0.2, -1e-300};
    const auto dir = std::filesystem::temp_directory_path() / "ape_model_test";
    std::filesystem::create_directories(dir);
    model::save_checkpoint(dir / "c.json", c);
    const auto back = model::load_checkpoint(dir / "c.json");
    EXPECT_EQ(back.params, c.params);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.epochs, c.epochs);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsWrongShape) {
    auto j = model::to_json(model::Checkpoint{model::ClassifierParams::random(16, 9), 1, 1});
    j["tensors"]["conv1.weight"]["data"].erase(0);
    EXPECT_ANY_THROW(model::checkpoint_from_json(j));
}
