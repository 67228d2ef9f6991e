#include "finite_difference.hpp"
#include "instances.hpp"
#include "oracle.hpp"

#include "simnl/caches.hpp"
#include "simnl/errors.hpp"
#include "simnl/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace simnl;
using testing_support::random_instance;

namespace {

MatrixD logits(std::initializer_list<std::initializer_list<double>> values) {
    MatrixD m(static_cast<Index>(values.size()), static_cast<Index>(values.begin()->size()));
    Index r = 0;
    for (const auto& row : values) {
        Index c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

struct Prepared {
    SupportQuerySplit split;
    CacheSet cache;
    WeightedLabels weighted;
    HyperParams hp;
};

Prepared prepare(double spread, std::uint64_t seed = 3) {
    SyntheticParams p;
    p.num_classes = 5;
    p.dim = 16;
    p.shots = 8;
    p.queries_per_class = 10;
    p.spread = spread;
    p.seed = seed;
    const auto data = synth_generate(p);
    Prepared out;
    out.split = data.split;
    out.cache = build_caches(data.split, data.text_pos, data.text_neg, seed + 101);
    out.weighted = reweight_caches(out.cache, 1.0, true);
    const auto d = calibrate_deltas<float>(data.split.support.rows, out.cache, out.weighted, out.hp);
    out.hp.delta_t = d.delta_t;
    out.hp.delta_v = d.delta_v;
    return out;
}

}  // namespace

TEST(CeLoss, KnownValues) {
    const std::vector<int> y{0};
    EXPECT_NEAR(ce_loss<double>(logits({{0, 0}}), y), std::numbers::ln2, 1e-15);
    const long double want = std::log1p(std::exp(-20.0L));
    EXPECT_NEAR(static_cast<double>(want), 2.061e-9, 0.001e-9);
    EXPECT_NEAR(ce_loss<double>(logits({{10, -10}}), y), static_cast<double>(want), 1e-24);
}

TEST(CeLoss, ShiftInvariant) {
    const auto inst = random_instance<double>(5);
    const auto b = forward_final(inst.features, inst.cache, inst.res, inst.weighted, inst.hp);
    const MatrixD shifted = b.s_final.array() + 123.0;
    EXPECT_NEAR(ce_loss<double>(shifted, inst.labels), ce_loss<double>(b.s_final, inst.labels), 1e-9);
}

TEST(CeLoss, MatchesOracleOnRandomLogits) {
    const auto inst = random_instance<double>(6);
    const auto b = forward_final(inst.features, inst.cache, inst.res, inst.weighted, inst.hp);
    EXPECT_NEAR(ce_loss<double>(b.s_final, inst.labels),
                static_cast<double>(oracle::cross_entropy(oracle::from(b.s_final), inst.labels)), 1e-12);
}

TEST(NegativeCeLoss, KnownValues) {
    EXPECT_NEAR(negative_ce_loss<double>(logits({{0, 0}}), std::vector<int>{1}), std::numbers::ln2, 1e-15);
    EXPECT_NEAR(negative_ce_loss<double>(logits({{0, 0, 0}}), std::vector<int>{2}), -std::log(2.0 / 3.0), 1e-15);
    EXPECT_NEAR(-std::log(2.0 / 3.0), 0.405465, 1e-6);
    EXPECT_LT(negative_ce_loss<double>(logits({{-40, 0}}), std::vector<int>{0}), 1e-15);
}

TEST(NegativeCeLoss, ClampsCertainNegative) {
    const double loss = negative_ce_loss<double>(logits({{1000, 0}}), std::vector<int>{0});
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_NEAR(loss, -std::log(1.0 - kNegativeProbabilityClamp), 1e-3);
}

TEST(Gradients, MatchFiniteDifferences) {
    for (std::uint64_t seed = 200; seed < 206; ++seed) {
        for (auto mode : {LossMode::ensemble_ce, LossMode::negative_ce}) {
            auto inst = random_instance<double>(seed);
            if (mode == LossMode::negative_ce) inst.res.enabled = mask_for(Variant::negative);
            const auto check = testing_support::check_gradients(inst, mode);
            EXPECT_LT(check.max_relative_error, 1e-4) << "seed " << seed << " mode " << to_string(mode);
            EXPECT_GT(check.entries, 0u);
        }
    }
}

TEST(Gradients, DisabledBlocksAreExactlyZero) {
    auto inst = random_instance<double>(7);
    inst.res.enabled = mask_for(Variant::textual);
    const auto g = loss_and_gradients<double>(inst.features, inst.labels, inst.cache, inst.res, inst.weighted,
                                              inst.hp, LossMode::ensemble_ce);
    EXPECT_EQ(g.grads.v_pos.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.grads.v_neg.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT(g.grads.t_pos.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradients, NegativeModeLeavesPositiveBlocksAtZero) {
    const auto inst = random_instance<double>(8);
    const auto g = loss_and_gradients<double>(inst.features, inst.labels, inst.cache, inst.res, inst.weighted,
                                              inst.hp, LossMode::negative_ce);
    EXPECT_EQ(g.grads.t_pos.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.grads.v_pos.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradients, SymmetricInstancePermutesAcrossClasses) {
    // Two classes mirrored by swapping coordinates 0 and 1; queries are
    // mirror pairs with mirrored labels, so the class-1 gradient is the
    // mirror of the class-0 gradient.
    const double s = std::sqrt(0.5);
    BasicCacheSet<double> cache;
    cache.t_pos = logits({{1, 0, 0}, {0, 1, 0}});
    cache.t_neg = logits({{0, 1, 0}, {1, 0, 0}});
    cache.v_pos = logits({{s, 0, s}, {0, s, s}});
    cache.v_neg = logits({{0, 0.8, 0}, {0.8, 0, 0}});
    cache.onehot = logits({{1, 0}, {0, 1}});
    cache.shots = 1;
    cache.num_classes = 2;
    const MatrixD f = logits({{0.8, 0.6, 0}, {0.6, 0.8, 0}});
    const std::vector<int> y{0, 1};
    auto res = BasicResidualSet<double>::zeros(2, 3);
    HyperParams hp;
    hp.delta_t = 0.7;
    hp.delta_v = 0.4;
    const auto g = loss_and_gradients<double>(f, y, cache, res, {cache.onehot, cache.onehot}, hp,
                                              LossMode::ensemble_ce);
    for (auto block : {&BasicResidualSet<double>::t_pos, &BasicResidualSet<double>::t_neg,
                       &BasicResidualSet<double>::v_pos, &BasicResidualSet<double>::v_neg}) {
        const MatrixD& m = g.grads.*block;
        EXPECT_NEAR(m(0, 0), m(1, 1), 1e-12);
        EXPECT_NEAR(m(0, 1), m(1, 0), 1e-12);
        EXPECT_NEAR(m(0, 2), m(1, 2), 1e-12);
    }
}

TEST(AdamW, ZeroGradientZeroDecayIsNoOp) {
    auto inst = random_instance<double>(9);
    auto params = inst.res;
    auto state = BasicOptimizerState<double>::for_params(params, 0.0);
    const auto zero = BasicResidualSet<double>::zeros(params.t_pos.rows(), params.t_pos.cols());
    adamw_step(state, params, zero, {1e-3, 1e-3});
    EXPECT_EQ(params.t_pos, inst.res.t_pos);
    EXPECT_EQ(params.v_neg, inst.res.v_neg);
    EXPECT_EQ(state.step, 1);
}

TEST(AdamW, FirstStepIsSignedLearningRate) {
    auto params = BasicResidualSet<double>::zeros(2, 3);
    auto grads = BasicResidualSet<double>::zeros(2, 3);
    grads.t_pos << 0.5, -2.0, 1e-3, 3.0, -1e-6, 0.0;
    grads.v_neg.setConstant(0.25);
    auto state = BasicOptimizerState<double>::for_params(params, 0.0);
    adamw_step(state, params, grads, {1e-2, 5e-2});
    for (Index i = 0; i < 6; ++i) {
        const double g = grads.t_pos(i / 3, i % 3);
        EXPECT_NEAR(params.t_pos(i / 3, i % 3), -1e-2 * g / (std::abs(g) + 1e-8), 1e-15);
    }
    EXPECT_NEAR(params.v_neg(0, 0), -5e-2 * 0.25 / (0.25 + 1e-8), 1e-15);
}

TEST(AdamW, DecoupledDecayShrinks) {
    auto inst = random_instance<double>(10);
    auto params = inst.res;
    auto state = BasicOptimizerState<double>::for_params(params, 0.1);
    adamw_step(state, params, BasicResidualSet<double>::zeros(params.t_pos.rows(), params.t_pos.cols()),
               {0.5, 0.2});
    EXPECT_LT((params.t_pos - inst.res.t_pos * (1 - 0.5 * 0.1)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((params.v_neg - inst.res.v_neg * (1 - 0.2 * 0.1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AdamW, DisabledBlocksUntouched) {
    auto inst = random_instance<double>(11);
    auto params = inst.res;
    params.enabled = mask_for(Variant::positive);
    auto state = BasicOptimizerState<double>::for_params(params, 0.1);
    adamw_step(state, params, inst.res, {0.5, 0.5});
    EXPECT_EQ(params.t_neg, inst.res.t_neg);
    EXPECT_EQ(params.v_neg, inst.res.v_neg);
    EXPECT_NE(params.t_pos, inst.res.t_pos);
}

TEST(CosineLr, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 10, 0.3), 0.3);
    EXPECT_DOUBLE_EQ(cosine_lr(10, 10, 0.3), 0.0);
    EXPECT_NEAR(cosine_lr(5, 10, 0.3), 0.15, 1e-15);
    EXPECT_THROW(cosine_lr(0, 0, 0.3), ArgumentError);
    EXPECT_THROW(cosine_lr(11, 10, 0.3), ArgumentError);
}

TEST(Train, ZeroSpreadReachesPerfectAccuracyForEveryVariant) {
    const auto prep = prepare(0.0);
    for (auto v : {Variant::full, Variant::textual, Variant::visual, Variant::positive, Variant::negative}) {
        const auto result = train(prep.split, prep.cache, prep.weighted, prep.hp, v);
        EXPECT_EQ(evaluate(prep.split.query, prep.cache, result.residuals, prep.weighted, prep.hp).top1, 1.0)
            << to_string(v);
    }
}

TEST(Train, SameSeedIsBitIdentical) {
    const auto prep = prepare(0.4);
    const auto a = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::full);
    const auto b = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::full);
    EXPECT_EQ(a.trace.epoch_loss, b.trace.epoch_loss);
    EXPECT_EQ(a.residuals.t_pos, b.residuals.t_pos);
    EXPECT_EQ(a.residuals.v_neg, b.residuals.v_neg);
}

TEST(Train, ZeroEpochsLeavesResidualsZero) {
    auto prep = prepare(0.4);
    prep.hp.epochs = 0;
    const auto result = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::full);
    EXPECT_EQ(result.residuals.t_pos.cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_EQ(result.residuals.v_neg.cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_TRUE(result.trace.epoch_loss.empty());
    const auto zero = ResidualSet::zeros(prep.cache.num_classes, prep.cache.dim());
    EXPECT_EQ(evaluate(prep.split.query, prep.cache, result.residuals, prep.weighted, prep.hp).top1,
              evaluate(prep.split.query, prep.cache, zero, prep.weighted, prep.hp).top1);
}

TEST(Train, FullBatchLossDecreasesOnSeparableData) {
    auto prep = prepare(0.05);
    prep.hp.epochs = 21;
    prep.hp.lr_pos = 1e-3;
    prep.hp.lr_neg = 5e-3;
    const auto result = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::full);
    ASSERT_EQ(result.trace.epoch_loss.size(), 21u);
    EXPECT_LT(result.trace.epoch_loss[20], result.trace.epoch_loss[0]);
}

TEST(Train, TraceHasOneEntryPerEpoch) {
    auto prep = prepare(0.4);
    prep.hp.epochs = 7;
    prep.hp.batch_size = 16;
    const auto result = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::full);
    EXPECT_EQ(result.trace.epoch_loss.size(), 7u);
    EXPECT_EQ(result.trace.epoch_lr_pos.size(), 7u);
    EXPECT_DOUBLE_EQ(result.trace.epoch_lr_pos[0], prep.hp.lr_pos);
    for (double l : result.trace.epoch_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, VariantGating) {
    const auto prep = prepare(0.4);
    const auto t = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::textual);
    EXPECT_EQ(t.residuals.v_pos.cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_EQ(t.residuals.v_neg.cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_GT(t.residuals.t_pos.cwiseAbs().maxCoeff(), 0.0f);
    const auto p = train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::positive);
    EXPECT_EQ(p.residuals.t_neg.cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_EQ(p.residuals.v_neg.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Train, UncalibratedDeltasAreRejected) {
    auto prep = prepare(0.4);
    prep.hp.delta_t.reset();
    EXPECT_THROW(train(prep.split, prep.cache, prep.weighted, prep.hp, Variant::full), StateError);
}

TEST(Evaluate, CountingCases) {
    const auto prep = prepare(0.4);
    const auto& q = prep.split.query;
    std::vector<int> truth(q.labels->begin(), q.labels->end());
    EXPECT_EQ(score_predictions(q, truth).top1, 1.0);
    const auto fixed = score_predictions(q, std::vector<int>(truth.size(), 2));
    EXPECT_DOUBLE_EQ(fixed.top1, 1.0 / 5.0);

    const auto zero = ResidualSet::zeros(prep.cache.num_classes, prep.cache.dim());
    const auto m = evaluate(q, prep.cache, zero, prep.weighted, prep.hp);
    double weighted_sum = 0;
    for (std::size_t c = 0; c < m.per_class_accuracy.size(); ++c) {
        weighted_sum += m.per_class_accuracy[c] * static_cast<double>(m.per_class_count[c]);
    }
    EXPECT_NEAR(weighted_sum / static_cast<double>(m.total), m.top1, 1e-12);

    auto unlabeled = q;
    unlabeled.labels.reset();
    EXPECT_THROW(evaluate(unlabeled, prep.cache, zero, prep.weighted, prep.hp), ArgumentError);
}

TEST(LossModeNames, RoundTrip) {
    EXPECT_EQ(parse_loss_mode("negative_ce"), LossMode::negative_ce);
    EXPECT_EQ(parse_loss_mode(to_string(LossMode::ensemble_ce)), LossMode::ensemble_ce);
    EXPECT_THROW(parse_loss_mode("mse"), ArgumentError);
}
