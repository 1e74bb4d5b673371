#include "oracles.hpp"

#include "treegae/errors.hpp"
#include "treegae/io.hpp"
#include "treegae/synth.hpp"
#include "treegae/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace treegae;
using treegae::oracle::finite_difference;
using treegae::oracle::random_instance;
using treegae::oracle::random_matrix;
using treegae::oracle::relative_error;

namespace {

Matrix random_binary_target(std::size_t n, std::mt19937_64& rng) {
    return random_instance(n, 1, rng).target_adjacency;
}

Matrix random_alpha(std::size_t n, std::mt19937_64& rng) {
    Matrix a = random_matrix(n, n, rng, 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            a(i, j) = a(j, i);
        }
        a(i, i) = 1.0;
    }
    return a;
}

std::vector<RefinementInstance> small_dataset(std::size_t count, std::uint64_t seed) {
    GeneratorConfig g;
    g.max_depth = 2;
    g.min_nodes = 10;
    g.max_nodes = 20;
    g.knn_k = 3;
    return make_dataset(g, count, 0, 0, seed).instances;
}

} // namespace

TEST(DiceLoss, PerfectPredictionIsZero) {
    const Matrix a = adjacency_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
    Matrix alpha = a;
    for (std::size_t i = 0; i < 4; ++i) {
        alpha(i, i) = 1.0; // decoder diagonal is ignored
    }
    EXPECT_LE(dice_loss(a, alpha), 1e-6);
}

TEST(DiceLoss, NoOverlapIsOne) {
    const Matrix a = adjacency_from_edges(3, {{0, 1}});
    EXPECT_NEAR(dice_loss(a, Matrix::identity(3)), 1.0, 1e-12);
}

TEST(DiceLoss, TwoNodeHalfConfidence) {
    const Matrix a{{0, 1}, {1, 0}};
    const Matrix alpha{{1, 0.5}, {0.5, 1}};
    const double expected = oracle::reference_dice(a, alpha); // 1 - 2 / (2.5 + eps)
    EXPECT_NEAR(expected, 0.2, 1e-8);
    EXPECT_NEAR(dice_loss(a, alpha), expected, 1e-15);
}

TEST(DiceLoss, EmptyTargetWithNearZeroPredictionIsNearZero) {
    const Matrix a(3, 3);
    Matrix alpha = Matrix::identity(3);
    EXPECT_NEAR(dice_loss(a, alpha), 1.0, 1e-12); // 0/eps
    alpha(0, 1) = alpha(1, 0) = 1e-3;
    EXPECT_NEAR(dice_loss(a, alpha), 1.0, 1e-12);
}

TEST(DiceLoss, ShapeMismatch) {
    EXPECT_THROW(dice_loss(Matrix(2, 2), Matrix(3, 3)), DimensionError);
}

TEST(DiceLoss, RangeAndExtremesProperty) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> size(2, 16);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = size(rng);
        const Matrix a = random_binary_target(n, rng);
        const double l = dice_loss(a, random_alpha(n, rng));
        EXPECT_GE(l, 0.0);
        EXPECT_LE(l, 1.0);
        EXPECT_LE(dice_loss(a, a), 1e-6);
        EXPECT_GE(dice_loss(a, Matrix(n, n)), 1.0 - 1e-6);
    }
}

TEST(DiceLoss, PermutationInvariant) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 10;
        const Matrix a = random_binary_target(n, rng);
        const Matrix alpha = random_alpha(n, rng);
        const auto p = oracle::random_permutation(n, rng);
        EXPECT_NEAR(dice_loss(a, alpha), dice_loss(permute_square(a, p), permute_square(alpha, p)), 1e-12);
    }
}

TEST(DiceLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 6;
        const Matrix a = random_binary_target(n, rng);
        const Matrix alpha = random_alpha(n, rng);
        Tape t;
        const Var av = t.leaf(alpha);
        t.backward(dice_loss(a, av));
        const Matrix numeric =
            finite_difference([&](const Matrix& x) { return oracle::reference_dice(a, x); }, alpha);
        EXPECT_LT(relative_error(av.grad(), numeric), 1e-5);
    }
}

TEST(Adam, ZeroGradientLeavesEverythingUnchanged) {
    ModelConfig c;
    c.hidden_dim = 4;
    auto params = init_params(c, 1);
    const auto before = params;
    AdamState state = AdamState::zeros_like(params);
    const AdamState zero = state;
    adam_step(params, AdamState::zeros_like(params).first_moment, state, TrainConfig{});
    EXPECT_EQ(params, before);
    EXPECT_EQ(state.first_moment, zero.first_moment);
    EXPECT_EQ(state.second_moment, zero.second_moment);
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepOnUnitGradient) {
    ModelParams w{{Matrix{{0.0}}, Matrix{{0.0}}}};
    const ModelParams g{{Matrix{{1.0}}, Matrix{{1.0}}}};
    AdamState s = AdamState::zeros_like(w);
    adam_step(w, g, s, TrainConfig{});
    // -lr / (1 + eps / sqrt(1 - beta2)), evaluated independently.
    EXPECT_NEAR(w[0].w0(0, 0), -0.0049999984188616705, 1e-18);
    EXPECT_EQ(w[0].w0, w[0].w1);
}

TEST(Adam, ShapeMismatchIsDimensionError) {
    ModelParams w{{Matrix(2, 2), Matrix(2, 2)}};
    const ModelParams g{{Matrix(2, 3), Matrix(2, 2)}};
    AdamState s = AdamState::zeros_like(w);
    EXPECT_THROW(adam_step(w, g, s, TrainConfig{}), DimensionError);
}

TEST(Adam, IdenticalRunsGiveIdenticalTrajectories) {
    const auto data = small_dataset(3, 4);
    ModelConfig c;
    c.hidden_dim = 6;
    TrainConfig tc;
    tc.batch_size = 2;
    tc.seed = 5;
    auto run = [&] {
        TrainState s{init_params(c, 5), {}, 0};
        std::vector<ModelParams> traj;
        for (int e = 0; e < 4; ++e) {
            train_epoch(data, s, c, tc);
            traj.push_back(s.params);
        }
        return traj;
    };
    EXPECT_EQ(run(), run());
}

TEST(TrainEpoch, OneStepWhenBatchCoversDataset) {
    const auto data = small_dataset(3, 1);
    ModelConfig c;
    c.hidden_dim = 4;
    TrainConfig tc;
    tc.batch_size = 8;
    TrainState s{init_params(c, 0), {}, 0};
    EXPECT_EQ(train_epoch(data, s, c, tc).optimizer_steps, 1u);
    EXPECT_EQ(s.adam.step, 1u);
    tc.batch_size = 2;
    EXPECT_EQ(train_epoch(data, s, c, tc).optimizer_steps, 2u); // last batch smaller
    EXPECT_EQ(s.epoch, 2u);
}

TEST(TrainEpoch, ShuffleIsReproducibleAndVariesByEpoch) {
    EXPECT_EQ(epoch_order(24, 3, 1), epoch_order(24, 3, 1));
    EXPECT_NE(epoch_order(24, 3, 1), epoch_order(24, 3, 2));
    auto order = epoch_order(24, 3, 1);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); ++i) {
        EXPECT_EQ(order[i], i);
    }
}

TEST(TrainEpoch, EmptyDatasetRejected) {
    ModelConfig c;
    TrainState s{init_params(c, 0), {}, 0};
    EXPECT_THROW(train_epoch({}, s, c, TrainConfig{}), ContractError);
}

TEST(TrainEpoch, OverfitsSingleTenNodeInstance) {
    GeneratorConfig g;
    g.max_depth = 2;
    g.min_nodes = 10;
    g.max_nodes = 10;
    g.knn_k = 3;
    for (std::uint64_t instance_seed = 17; instance_seed < 27; ++instance_seed) {
        const std::vector<RefinementInstance> one{generate_instance(g, instance_seed, "ten")};
        ASSERT_EQ(one[0].n(), 10u);
        for (std::uint64_t init_seed = 0; init_seed < 5; ++init_seed) {
            ModelConfig c;
            TrainConfig tc;
            TrainState s{init_params(c, init_seed), {}, 0};
            const double untrained = mean_dice_loss(one, s.params, c);
            for (int epoch = 0; epoch < 50; ++epoch) {
                train_epoch(one, s, c, tc);
            }
            EXPECT_LT(mean_dice_loss(one, s.params, c), 0.5 * untrained)
                << "instance " << instance_seed << " init " << init_seed;
        }
    }
}

TEST(Train, ZeroEpochsReturnsInitialParams) {
    const auto data = small_dataset(4, 2);
    ModelConfig c;
    c.hidden_dim = 4;
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 11;
    const auto r = train(std::span(data).first(3), std::span(data).last(1), c, tc);
    EXPECT_EQ(r.best_params, init_params(c, 11));
    EXPECT_TRUE(r.history.records.empty());
}

TEST(Train, OverlappingIdsRejected) {
    const auto data = small_dataset(2, 2);
    TrainConfig tc;
    tc.epochs = 1;
    EXPECT_THROW(train(data, std::span(data).first(1), ModelConfig{}, tc), ContractError);
}

TEST(Train, HistoryEpochsStrictlyIncreaseAndBestIsPersisted) {
    const auto data = small_dataset(5, 3);
    ModelConfig c;
    c.hidden_dim = 6;
    TrainConfig tc;
    tc.epochs = 7;
    tc.eval_every = 3;
    const auto path = std::filesystem::temp_directory_path() / "treegae_best_checkpoint.json";
    std::filesystem::remove(path);
    const auto r = train(std::span(data).first(4), std::span(data).last(1), c, tc, std::nullopt, path);
    ASSERT_EQ(r.history.records.size(), 7u);
    for (std::size_t i = 0; i < r.history.records.size(); ++i) {
        EXPECT_EQ(r.history.records[i].epoch, i + 1);
        // Evaluated on multiples of eval_every and on the last epoch.
        const bool evaluated = (i + 1) % 3 == 0 || i + 1 == 7;
        EXPECT_EQ(r.history.records[i].validation_dice.has_value(), evaluated);
    }
    ASSERT_TRUE(r.history.best_epoch.has_value());
    const Checkpoint saved = load_checkpoint(path);
    EXPECT_EQ(saved.params, r.best_params);
    EXPECT_EQ(saved.epoch, *r.history.best_epoch);
    std::filesystem::remove(path);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
    const auto data = small_dataset(6, 5);
    const auto tr = std::span(data).first(5);
    const auto va = std::span(data).last(1);
    ModelConfig c;
    c.hidden_dim = 6;
    TrainConfig tc;
    tc.seed = 13;
    tc.batch_size = 2;

    tc.epochs = 6;
    const auto full = train(tr, va, c, tc);

    tc.epochs = 3;
    const auto first_half = train(tr, va, c, tc);
    // Through the on-disk format, as a resumed CLI run would.
    const Checkpoint ck = checkpoint_from_string(checkpoint_to_string(
        Checkpoint{c, first_half.final_state.params, first_half.final_state.adam, tc.seed, first_half.final_state.epoch}));
    tc.epochs = 6;
    const auto resumed = train(tr, va, c, tc, TrainState{ck.params, *ck.optimizer, ck.epoch});

    ASSERT_EQ(resumed.history.records.size(), 3u);
    EXPECT_EQ(resumed.history.records[0].epoch, 4u);
    EXPECT_EQ(resumed.history.records[0].mean_train_loss, full.history.records[3].mean_train_loss);
    EXPECT_EQ(resumed.final_state, full.final_state);
}

TEST(Train, HistoryCsvHeader) {
    TrainHistory h;
    h.records.push_back({1, 0.5, std::nullopt, 0.1});
    h.records.push_back({2, 0.25, 0.75, 0.1});
    const std::string csv = history_csv(h);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,mean_train_loss,val_dice,seconds");
    EXPECT_NE(csv.find("\n1,0.5,,"), std::string::npos);
    EXPECT_NE(csv.find("\n2,0.25,0.75,"), std::string::npos);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    ModelConfig c;
    c.hidden_dim = 5;
    const auto p = init_params(c, 77);
    AdamState s = AdamState::zeros_like(p);
    s.step = 9;
    s.first_moment[1].w0(0, 0) = 1.0 / 3.0;
    s.second_moment[2].w1(4, 4) = 1e-300;
    const Checkpoint ck{c, p, s, 77, 12};
    const std::string text = checkpoint_to_string(ck);
    EXPECT_EQ(checkpoint_from_string(text), ck);
    EXPECT_EQ(checkpoint_to_string(checkpoint_from_string(text)), text);
}

TEST(Checkpoint, ShapeMismatchIsParseError) {
    ModelConfig c;
    c.hidden_dim = 5;
    Checkpoint ck{c, init_params(c, 1), std::nullopt, 1, 0};
    ck.config.hidden_dim = 6;
    EXPECT_THROW(checkpoint_from_string(checkpoint_to_string(ck)), ParseError);
    EXPECT_THROW(checkpoint_from_string("{\"config\": {}, \"layers\": [ }"), ParseError);
}
