#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <numbers>

using namespace wavemlp;

namespace {

SynthTask small_task(std::size_t n = 64) {
    SynthTask t;
    t.train_size = n;
    t.val_size = 32;
    return t;
}

TrainConfig short_run(std::size_t epochs = 1) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 16;
    tc.lr = 2e-3;
    return tc;
}

std::vector<Tensor<double>> snapshot(const ModelParams<double>& m) {
    std::vector<Tensor<double>> out;
    m.for_each_param([&](const std::string&, const Tensor<double>& t) { out.push_back(t); });
    return out;
}

} // namespace

TEST(AdamW, ZeroGradientOnlyDecays) {
    Tensor<double> p({3}, {1.0, -2.0, 0.5});
    AdamState<double> st;
    AdamWConfig cfg;
    cfg.lr = 1e-3;
    adamw_step(p, Tensor<double>({3}), st, 1, cfg);
    const double k = 1.0 - 1e-3 * 0.05;
    EXPECT_DOUBLE_EQ(p[0], 1.0 * k);
    EXPECT_DOUBLE_EQ(p[1], -2.0 * k);
    EXPECT_DOUBLE_EQ(k, 1.0 - 5e-5);
}

TEST(AdamW, FirstStepByHand) {
    Tensor<double> p({2}, {0.3, -0.7});
    const Tensor<double> g({2}, {0.2, -4.0});
    AdamState<double> st;
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    adamw_step(p, g, st, 1, cfg);
    // Step 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
    EXPECT_NEAR(p[0], 0.3 * (1 - 0.001) - 0.01 * 0.2 / (0.2 + 1e-8), 1e-15);
    EXPECT_NEAR(p[1], -0.7 * (1 - 0.001) + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_NEAR(st.m[0], 0.1 * 0.2, 1e-15);
    EXPECT_NEAR(st.v[1], 0.001 * 16.0, 1e-15);

    // Second step with the same gradient, bias corrections by hand.
    const double m = 0.9 * 0.02 + 0.1 * 0.2, v = 0.999 * 0.001 * 0.04 + 0.001 * 0.04;
    const double expect = p[0] * (1 - 0.001) - 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.998001)) + 1e-8);
    adamw_step(p, g, st, 2, cfg);
    EXPECT_NEAR(p[0], expect, 1e-15);
}

TEST(AdamW, Errors) {
    Tensor<double> p({2});
    AdamState<double> st;
    EXPECT_THROW(adamw_step(p, Tensor<double>({3}), st, 1, {}), DimensionError);
    EXPECT_THROW(adamw_step(p, Tensor<double>({2}), st, 0, {}), ContractError);
    EXPECT_THROW(adamw_step(p, Tensor<double>({2}, {0.0, std::nan("")}), st, 1, {}), NumericError);
}

TEST(CosineSchedule, Examples) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
    EXPECT_NEAR(cosine_lr(50, 100, 1e-3), 5e-4, 1e-18);
    EXPECT_NEAR(cosine_lr(100, 100, 1e-3), 0.0, 1e-18);
    EXPECT_NEAR(cosine_lr(25, 100, 2.0), 1.0 + std::cos(std::numbers::pi / 4), 1e-15);
    EXPECT_THROW(cosine_lr(0, 0, 1e-3), ConfigError);
    EXPECT_THROW(cosine_lr(101, 100, 1e-3), ConfigError);
}

TEST(Training, ZeroLearningRateFreezesEverything) {
    TrainConfig tc = short_run(2);
    tc.lr = 0.0;
    const ArchConfig arch = preset("tiny");
    const auto r = train<double>(arch, small_task(), tc);
    EXPECT_EQ(snapshot(r.model), snapshot(build<double>(arch, tc.seed)));
    // Same batches appear in both epochs in a different order, so compare epochs as multisets.
    std::vector<double> e0(r.history.loss.begin(), r.history.loss.begin() + 4),
        e1(r.history.loss.begin() + 4, r.history.loss.end());
    std::sort(e0.begin(), e0.end());
    std::sort(e1.begin(), e1.end());
    ASSERT_EQ(e1.size(), 4u);
    double total0 = 0, total1 = 0;
    for (int i = 0; i < 4; ++i) total0 += e0[i], total1 += e1[i];
    EXPECT_NEAR(total0 / 4, total1 / 4, 0.5);
    EXPECT_EQ(r.history.train_acc[0], r.history.train_acc[1]);
}

TEST(Training, ZeroLearningRateGivesConstantLossOnFullBatch) {
    TrainConfig tc = short_run(3);
    tc.lr = 0.0;
    tc.batch_size = 64;
    const auto r = train<double>(preset("tiny"), small_task(), tc);
    ASSERT_EQ(r.history.loss.size(), 3u);
    for (double l : r.history.loss) EXPECT_NEAR(l, r.history.loss[0], 1e-12);
}

TEST(Training, SameSeedSameRun) {
    const auto a = train<float>(preset("tiny"), small_task(), short_run(2));
    const auto b = train<float>(preset("tiny"), small_task(), short_run(2));
    EXPECT_EQ(a.history.loss, b.history.loss);
    EXPECT_EQ(a.history.train_acc, b.history.train_acc);
    TrainConfig other = short_run(2);
    other.seed = 9;
    EXPECT_NE(train<float>(preset("tiny"), small_task(), other).history.loss, a.history.loss);
}

TEST(Training, FirstStepLossNearChance) {
    const auto r = train<double>(preset("tiny"), small_task(), short_run(1));
    EXPECT_TRUE(std::isfinite(r.history.loss[0]));
    EXPECT_NEAR(r.history.loss[0], std::log(4.0), 0.5);
    EXPECT_EQ(r.history.steps(), 4u);
    EXPECT_EQ(r.history.epoch_end_step, (std::vector<std::size_t>{4}));
    EXPECT_NEAR(r.history.lr[0], 2e-3, 1e-18);
    for (double a : r.history.val_acc) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(Training, MismatchedTaskRejected) {
    ArchConfig arch = preset("tiny");
    arch.num_classes = 5;
    EXPECT_THROW(train<double>(arch, small_task(), short_run()), ConfigError);
    TrainConfig tc = short_run();
    tc.schedule = "step";
    EXPECT_THROW(train<double>(preset("tiny"), small_task(), tc), ConfigError);
}

TEST(Training, NonFiniteInputsSurfaceAsNumericError) {
    const auto m = build<double>(preset("tiny"), 0);
    Tensor<double> x({1, 16, 16, 3});
    x[5] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(predict(m, x), NumericError);
}

TEST(Synth, DeterministicAndBalanced) {
    SynthTask t = small_task(200);
    const auto [a, av] = generate_task<double>(t);
    const auto [b, bv] = generate_task<double>(t);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(av.labels, bv.labels);
    std::array<int, 4> counts{};
    for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) EXPECT_EQ(c, 50);
    t.seed = 1;
    EXPECT_NE(generate_task<double>(t).first.images, a.images);
    t.generator = "noise";
    EXPECT_THROW(generate_task<double>(t), ConfigError);
}

TEST(Synth, InterferenceLabelFollowsBarGeometry) {
    SynthTask t = small_task(40);
    t.noise = 0.0;
    const auto ds = generate_task<double>(t).first;
    const std::size_t H = 16, W = 16, C = 3;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        double ya = 0, xa = 0, yb = 0, xb = 0;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t base = ((n * H + y) * W + x) * C;
                ya += ds.images[base] * y / 4;
                xa += ds.images[base] * x / 4;
                yb += ds.images[base + 1] * y / 4;
                xb += ds.images[base + 1] * x / 4;
            }
        const int label = (xb > xa ? 1 : 0) + (yb > ya ? 2 : 0);
        EXPECT_EQ(label, ds.labels[n]);
    }
}

TEST(History, CsvLayout) {
    History h;
    h.loss = {1.5, 1.25, 1.0};
    h.lr = {0.1, 0.05, 0.0};
    h.epoch_end_step = {2, 3};
    h.train_acc = {0.5, 0.75};
    h.val_acc = {0.25, 0.5};
    EXPECT_EQ(history_steps_csv(h), "step,epoch,lr,loss\n0,0,0.10000000000000001,1.5\n1,0,0.050000000000000003,1.25\n2,1,0,1\n");
    EXPECT_EQ(history_epochs_csv(h), "epoch,step,train_acc,val_acc\n0,2,0.5,0.25\n1,3,0.75,0.5\n");
}

TEST(RunConfigJson, FixtureMatchesBuiltInDefaults) {
    const RunConfig rc = load_run_config(std::string(WAVEMLP_FIXTURE_DIR) + "/pilot_interference.json");
    EXPECT_EQ(run_config_to_json(rc), run_config_to_json(pilot_run_config()));
    EXPECT_EQ(rc.expect.max_steps, 2000u);
    EXPECT_EQ(rc.train.precision, Precision::F32);
}

TEST(RunConfigJson, RoundTripAndErrors) {
    RunConfig rc = pilot_run_config();
    rc.train.lr = 0.0123;
    rc.task.generator = "blob";
    EXPECT_EQ(run_config_to_json(run_config_from_json(run_config_to_json(rc))), run_config_to_json(rc));
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"optim":{}})")), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train":{"momentum":0.9}})")), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train":{"epochs":"many"}})")), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train":{"precision":"f16"}})")), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"task":{"num_classes":3}})")), ConfigError);
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"expect":{"min_val_acc":1}})")), ConfigError);
    const RunConfig partial = run_config_from_json(nlohmann::json::parse(R"({"train":{"epochs":3}})"), pilot_run_config());
    EXPECT_EQ(partial.train.epochs, 3u);
    EXPECT_EQ(partial.train.lr, 2e-3);
}

TEST(Checkpoint, RoundTrip) {
    ArchConfig c = preset("tiny");
    c.phase_mode = PhaseMode::DepthWise;
    const auto m = build<float>(c, 5);
    const std::string bytes = encode_checkpoint(m);
    const auto back = decode_checkpoint<float>(bytes);
    EXPECT_EQ(back.config, m.config);
    std::vector<Tensor<float>> a, b;
    m.for_each_param([&](const std::string&, const Tensor<float>& t) { a.push_back(t); });
    back.for_each_param([&](const std::string&, const Tensor<float>& t) { b.push_back(t); });
    EXPECT_EQ(a, b);

    EXPECT_THROW(decode_checkpoint<double>(bytes), Error);
    EXPECT_THROW(decode_checkpoint<float>(bytes + "x"), Error);
    EXPECT_THROW(decode_checkpoint<float>(bytes.substr(0, bytes.size() - 3)), Error);
    EXPECT_THROW(decode_checkpoint<float>("NOTMODEL" + bytes.substr(8)), Error);

    const auto path = std::filesystem::temp_directory_path() / "wavemlp_ckpt_test.bin";
    save_checkpoint(m, path.string());
    const auto disk = load_checkpoint<float>(path.string());
    EXPECT_EQ(encode_checkpoint(disk), bytes);
    std::filesystem::remove(path);
}
