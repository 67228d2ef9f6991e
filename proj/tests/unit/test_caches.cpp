#include "simnl/caches.hpp"
#include "simnl/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace simnl;

namespace {

RowVector<float> vec(std::initializer_list<float> values) {
    RowVector<float> v(static_cast<Index>(values.size()));
    Index i = 0;
    for (float x : values) v(i++) = x;
    return v;
}

EmbeddingSet labeled(const MatrixF& rows, std::vector<std::uint32_t> labels, int classes) {
    EmbeddingSet set;
    set.rows = rows;
    set.labels = std::move(labels);
    set.num_classes = classes;
    return set;
}

SupportQuerySplit split_of(const MatrixF& rows, std::vector<std::uint32_t> labels, int classes, int shots) {
    SupportQuerySplit split;
    split.support = labeled(rows, std::move(labels), classes);
    split.query = labeled(rows.topRows(1), {0}, classes);
    split.shots = shots;
    return split;
}

MatrixF random_unit(Index rows, Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal;
    MatrixF m(rows, dim);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < dim; ++c) m(r, c) = normal(rng);
        m.row(r).normalize();
    }
    return m;
}

// Interleaved labels: row r belongs to class r % classes.
SupportQuerySplit interleaved(int classes, int shots, Index dim, std::uint64_t seed) {
    std::vector<std::uint32_t> labels;
    for (int r = 0; r < classes * shots; ++r) labels.push_back(static_cast<std::uint32_t>(r % classes));
    return split_of(random_unit(classes * shots, dim, seed), labels, classes, shots);
}

}  // namespace

TEST(TextCache, SinglePromptPassesThrough) {
    const ClassFeatures prompts{{vec({0.6f, 0.8f})}, {vec({1, 0})}};
    const auto t = build_positive_text_cache(prompts);
    EXPECT_EQ(t.row(0), vec({0.6f, 0.8f}));
    EXPECT_EQ(t.row(1), vec({1, 0}));
    EXPECT_EQ(build_negative_text_cache(prompts), t);
}

TEST(TextCache, TwoPromptsAverageThenNormalize) {
    const auto t = build_positive_text_cache({{vec({1, 0}), vec({0, 1})}});
    EXPECT_NEAR(t(0, 0), std::sqrt(2.0) / 2, 1e-7);
    EXPECT_NEAR(t(0, 1), std::sqrt(2.0) / 2, 1e-7);
    EXPECT_EQ(build_negative_text_cache({{vec({1, 0}), vec({0, 1})}}), t);
}

TEST(TextCache, PromptOrderDoesNotMatter) {
    const auto a = build_positive_text_cache({{vec({1, 0, 0}), vec({0, 0.6f, 0.8f}), vec({0, 1, 0})}});
    const auto b = build_positive_text_cache({{vec({0, 1, 0}), vec({1, 0, 0}), vec({0, 0.6f, 0.8f})}});
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-7f);
}

TEST(TextCache, DegenerateInputs) {
    EXPECT_THROW(build_positive_text_cache({{vec({1, 0}), vec({-1, 0})}}), DataError);
    EXPECT_THROW(build_positive_text_cache({{vec({1, 0})}, {}}), ArgumentError);
    EXPECT_THROW(build_negative_text_cache({{vec({1, 0}), vec({0, 0, 1})}}), ArgumentError);
}

TEST(TextCache, GroupingLabeledPrompts) {
    MatrixF rows(3, 2);
    rows << 1, 0, 0, 1, 0.6f, 0.8f;
    auto set = labeled(rows, {1, 0, 1}, 2);
    set.kind = FeatureKind::text;
    const auto groups = group_text_features(set);
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups[0].size(), 1u);
    EXPECT_EQ(groups[1].size(), 2u);
}

TEST(PositiveVisualCache, TwoClassesOneShotOrdering) {
    MatrixF rows(2, 3);
    rows << 0, 1, 0, 1, 0, 0;
    const auto v = build_positive_visual_cache(split_of(rows, {1, 0}, 2, 1));
    EXPECT_EQ(v.row(0), rows.row(1));
    EXPECT_EQ(v.row(1), rows.row(0));
}

TEST(PositiveVisualCache, InterleavingAcrossClassesIsNormalized) {
    const auto split = interleaved(3, 4, 5, 1);
    // Same rows, class-major input order.
    MatrixF grouped(12, 5);
    std::vector<std::uint32_t> labels;
    Index out = 0;
    for (int c = 0; c < 3; ++c) {
        for (Index r = 0; r < 12; ++r) {
            if ((*split.support.labels)[static_cast<std::size_t>(r)] == static_cast<std::uint32_t>(c)) {
                grouped.row(out++) = split.support.rows.row(r);
                labels.push_back(static_cast<std::uint32_t>(c));
            }
        }
    }
    EXPECT_EQ(build_positive_visual_cache(split), build_positive_visual_cache(split_of(grouped, labels, 3, 4)));
}

TEST(PositiveVisualCache, RowsArePermutationOfSupport) {
    const auto split = interleaved(4, 3, 6, 2);
    const auto v = build_positive_visual_cache(split);
    const auto order = cache_row_order(split);
    std::vector<Index> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < static_cast<Index>(sorted.size()); ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    for (Index r = 0; r < v.rows(); ++r) EXPECT_EQ(v.row(r), split.support.rows.row(order[static_cast<std::size_t>(r)]));
}

TEST(PositiveVisualCache, ShotMismatchIsArgumentError) {
    auto split = interleaved(2, 2, 3, 3);
    (*split.support.labels)[0] = 1;
    EXPECT_THROW(build_positive_visual_cache(split), ArgumentError);
}

TEST(NegativeVisualCache, TwoClassesCopyOtherClassRows) {
    const auto split = interleaved(2, 5, 4, 4);
    const auto neg = build_negative_visual_cache(split, 9);
    const auto pos = build_positive_visual_cache(split);
    for (Index r = 0; r < neg.rows(); ++r) {
        const Index other = r < 5 ? 1 : 0;
        bool found = false;
        for (Index k = 0; k < 5; ++k) found |= neg.row(r) == pos.row(other * 5 + k);
        EXPECT_TRUE(found) << "row " << r;
    }
}

TEST(NegativeVisualCache, ThreeClassMeanOfTwoBasisVectors) {
    MatrixF rows(3, 4);
    rows << 0.6f, 0, 0.8f, 0,  // class 0
        1, 0, 0, 0,           // class 1: e1
        0, 1, 0, 0;           // class 2: e2
    const auto neg = build_negative_visual_cache(split_of(rows, {0, 1, 2}, 3, 1), 1);
    EXPECT_NEAR(neg(0, 0), 0.5f, 1e-7f);
    EXPECT_NEAR(neg(0, 1), 0.5f, 1e-7f);
    EXPECT_EQ(neg(0, 2), 0.0f);
    EXPECT_EQ(neg(0, 3), 0.0f);
    EXPECT_NEAR(neg.row(0).norm(), std::sqrt(0.5f), 1e-7f);
}

TEST(NegativeVisualCache, SeededAndNormBounded) {
    const auto split = interleaved(5, 4, 8, 5);
    const auto a = build_negative_visual_cache(split, 17);
    EXPECT_EQ(a, build_negative_visual_cache(split, 17));
    EXPECT_NE(a, build_negative_visual_cache(split, 18));
    for (Index r = 0; r < a.rows(); ++r) {
        EXPECT_GT(a.row(r).norm(), 0.0f);
        EXPECT_LE(a.row(r).norm(), 1.0f + 1e-6f);
    }
}

TEST(NegativeVisualCache, NeedsTwoClasses) {
    MatrixF rows(2, 2);
    rows << 1, 0, 0, 1;
    EXPECT_THROW(build_negative_visual_cache(split_of(rows, {0, 0}, 1, 2), 1), ArgumentError);
}

TEST(OnehotLabels, Shape) {
    const auto two = build_onehot_labels(2, 1);
    EXPECT_EQ(two, MatrixF::Identity(2, 2));
    const auto l = build_onehot_labels(4, 3);
    EXPECT_EQ(l.rows(), 12);
    for (Index c = 0; c < 4; ++c) EXPECT_EQ(l.col(c).sum(), 3.0f);
    for (Index r = 0; r < 12; ++r) {
        EXPECT_EQ(l.row(r).sum(), 1.0f);
        EXPECT_EQ(l(r, r / 3), 1.0f);
    }
}

TEST(BuildCaches, AssemblesAllParts) {
    const auto data = synth_generate({4, 8, 3, 2, 0.3, 5});
    const auto cache = build_caches(data.split, data.text_pos, data.text_neg, 11);
    EXPECT_EQ(cache.t_pos, data.text_pos.rows);
    EXPECT_EQ(cache.v_pos, build_positive_visual_cache(data.split));
    EXPECT_EQ(cache.v_neg, build_negative_visual_cache(data.split, 11));
    EXPECT_EQ(cache.onehot, build_onehot_labels(4, 3));
    EXPECT_EQ(cache.shots, 3);
    EXPECT_EQ(cache.num_classes, 4);
}
