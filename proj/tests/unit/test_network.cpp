#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "temp_dir.hpp"
#include "voidseg/network.hpp"
#include "voidseg/random.hpp"

using namespace voidseg;
using network::HeadKind;
using network::NetworkSpec;

namespace {

NetworkSpec small(HeadKind head, int depth = 2) {
    NetworkSpec s;
    s.depth = depth;
    s.base_features = 8;
    s.head = head;
    return s;
}

RawImage noise_image(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    RawImage im(shape);
    for (auto& v : im) v = g(rng);
    return im;
}

}  // namespace

class NetworkTest : public ::testing::Test {
protected:
    void SetUp() override { network::configure_threads(1); }
};

TEST_F(NetworkTest, OutputChannelsPerHead) {
    EXPECT_EQ(small(HeadKind::Joint).out_channels(), 4);
    EXPECT_EQ(small(HeadKind::Star).out_channels(), 33);
    EXPECT_EQ(small(HeadKind::Denoise).out_channels(), 1);
    EXPECT_EQ(small(HeadKind::Joint).regression_channel(), 3);
    EXPECT_EQ(small(HeadKind::Denoise).regression_channel(), 0);
    EXPECT_EQ(small(HeadKind::Star).regression_channel(), -1);
    NetworkSpec full;
    auto joint = network::build_unet(full, 1);
    torch::NoGradGuard no_grad;
    EXPECT_EQ(joint->forward(torch::zeros({1, 1, 128, 128})).sizes(), (std::vector<int64_t>{1, 4, 128, 128}));
    full.head = HeadKind::Star;
    EXPECT_EQ(network::build_unet(full, 1)->forward(torch::zeros({1, 1, 128, 128})).sizes(),
              (std::vector<int64_t>{1, 33, 128, 128}));
    full.head = HeadKind::Denoise;
    EXPECT_EQ(network::build_unet(full, 1)->forward(torch::zeros({1, 1, 128, 128})).sizes(),
              (std::vector<int64_t>{1, 1, 128, 128}));
}

TEST_F(NetworkTest, RejectsTooSmallInput) {
    auto m = network::build_unet(small(HeadKind::Joint), 1);
    EXPECT_THROW(m->forward(torch::zeros({1, 1, 3, 16})), std::invalid_argument);
    EXPECT_THROW(m->forward(torch::zeros({1, 2, 16, 16})), std::invalid_argument);
}

TEST_F(NetworkTest, PredictionPadsAndCrops) {
    auto m = network::build_unet(small(HeadKind::Joint), 3);
    const auto preds = network::predict_batch(m, {noise_image({30, 31}, 1)});
    ASSERT_EQ(preds.size(), 1u);
    const auto& p = preds[0];
    ASSERT_EQ(p.class_prob.size(), 3u);
    EXPECT_EQ(p.class_prob[0].shape(), (Shape{30, 31}));
    EXPECT_EQ(p.regression.shape(), (Shape{30, 31}));
    for (std::size_t i = 0; i < p.class_prob[0].size(); ++i) {
        const float s = p.class_prob[0].pixels()[i] + p.class_prob[1].pixels()[i] + p.class_prob[2].pixels()[i];
        ASSERT_NEAR(s, 1.0f, 1e-5f);
    }
    auto star = network::build_unet(small(HeadKind::Star), 3);
    const auto sp = network::predict_batch(star, {noise_image({17, 20}, 2)}).front();
    EXPECT_EQ(sp.distances.size(), 32u);
    for (auto v : sp.object_prob) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    for (auto v : sp.distances[5]) EXPECT_GE(v, 0.0f);
}

TEST_F(NetworkTest, PredictionRestoresTrainingMode) {
    auto m = network::build_unet(small(HeadKind::Joint), 3);
    m->train();
    (void)network::predict_batch(m, {noise_image({16, 16}, 1)});
    EXPECT_TRUE(m->is_training());
}

TEST_F(NetworkTest, SeededInitIsDeterministic) {
    const auto a = network::snapshot(network::build_unet(small(HeadKind::Joint), 9));
    const auto b = network::snapshot(network::build_unet(small(HeadKind::Joint), 9));
    const auto c = network::snapshot(network::build_unet(small(HeadKind::Joint), 10));
    EXPECT_TRUE(network::bitwise_equal(a, b));
    EXPECT_FALSE(network::bitwise_equal(a, c));
    for (const auto& [name, t] : a.tensors) {
        EXPECT_TRUE(network::WeightSnapshot::is_body(name) || network::WeightSnapshot::is_head(name)) << name;
    }
}

TEST_F(NetworkTest, SnapshotRoundTrip) {
    auto m = network::build_unet(small(HeadKind::Star), 4);
    const auto snap = network::snapshot(m, "BaselineStarDist", 7);
    EXPECT_EQ(snap.meta.provenance, "BaselineStarDist");
    EXPECT_EQ(snap.meta.epoch, 7);
    auto r = network::restore(snap);
    EXPECT_TRUE(network::bitwise_equal(snap, network::snapshot(r)));
    // the snapshot is a copy, not a view
    {
        torch::NoGradGuard no_grad;
        for (auto& p : m->parameters()) p.add_(1.0);
    }
    EXPECT_TRUE(network::bitwise_equal(snap, network::snapshot(r)));
    EXPECT_FALSE(network::bitwise_equal(snap, network::snapshot(m)));
}

TEST_F(NetworkTest, TransferBodyOnly) {
    const auto src = network::snapshot(network::build_unet(small(HeadKind::Denoise), 1));
    const auto fresh = network::build_unet(small(HeadKind::Joint), 2);
    const auto fresh_snap = network::snapshot(fresh);
    auto dst = network::transfer_weights(src, network::build_unet(small(HeadKind::Joint), 2),
                                         network::TransferPolicy::BodyOnly);
    const auto out = network::snapshot(dst);
    EXPECT_TRUE(network::bitwise_equal(src, out, network::TensorGroup::Body));
    EXPECT_TRUE(network::bitwise_equal(fresh_snap, out, network::TensorGroup::Head));
}

TEST_F(NetworkTest, TransferIdentityAndRegressionChannel) {
    const auto src = network::snapshot(network::build_unet(small(HeadKind::Denoise), 1));
    auto same = network::transfer_weights(src, network::build_unet(small(HeadKind::Denoise), 5),
                                          network::TransferPolicy::BodyAndCompatibleHead);
    EXPECT_TRUE(network::bitwise_equal(src, network::snapshot(same)));

    auto joint = network::transfer_weights(src, network::build_unet(small(HeadKind::Joint), 5),
                                           network::TransferPolicy::BodyAndCompatibleHead);
    const auto js = network::snapshot(joint);
    const auto& w_src = src.tensors.at("head.weight");
    const auto& w_dst = js.tensors.at("head.weight");
    EXPECT_TRUE(torch::equal(w_src[0], w_dst[3]));
    EXPECT_TRUE(torch::equal(src.tensors.at("head.bias")[0], js.tensors.at("head.bias")[3]));
}

TEST_F(NetworkTest, TransferRejectsDifferentBody) {
    const auto src = network::snapshot(network::build_unet(small(HeadKind::Denoise, 2), 1));
    try {
        network::transfer_weights(src, network::build_unet(small(HeadKind::Joint, 3), 1),
                                  network::TransferPolicy::BodyOnly);
        FAIL() << "expected body mismatch";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("body"), std::string::npos);
    }
}

TEST_F(NetworkTest, CheckpointRoundTripAndCorruption) {
    testkit::TempDir tmp;
    auto m = network::build_unet(small(HeadKind::Joint), 6);
    const auto snap = network::snapshot(m, "n2v/n40", 3);
    const auto path = tmp.path() / "m.ckpt";
    network::save_checkpoint(path, snap);
    const auto back = network::load_checkpoint(path);
    EXPECT_TRUE(network::bitwise_equal(snap, back));
    EXPECT_EQ(back.meta.provenance, "n2v/n40");
    EXPECT_EQ(back.meta.epoch, 3);
    EXPECT_EQ(back.meta.spec, snap.meta.spec);

    // flip one payload byte
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(-10, std::ios::end);
        char c;
        f.read(&c, 1);
        c = static_cast<char>(c ^ 0x5a);
        f.seekp(-10, std::ios::end);
        f.write(&c, 1);
    }
    try {
        network::load_checkpoint(path);
        FAIL() << "expected corruption error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
    }
    // truncated file
    std::filesystem::resize_file(path, 40);
    EXPECT_THROW(network::load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
    EXPECT_THROW(network::load_checkpoint(path), std::runtime_error);
}

TEST_F(NetworkTest, SpecJsonRoundTrip) {
    auto s = small(HeadKind::Star, 3);
    s.batch_norm = false;
    EXPECT_EQ(network::spec_from_json(network::spec_to_json(s)), s);
    EXPECT_EQ(network::parse_head(network::to_string(HeadKind::Joint)), HeadKind::Joint);
    EXPECT_THROW(network::parse_head("nope"), std::invalid_argument);
}
