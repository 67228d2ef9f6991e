#pragma once

#include "simnl/embedding_store.hpp"
#include "simnl/matrix.hpp"

#include <cstdint>
#include <vector>

namespace simnl {

/// The four caches plus the one-hot label matrix.
///
/// Visual caches are class-major: row c*K + i holds shot i of class c, and
/// row c*K + i of `onehot` is the unit vector for class c.
template <typename Scalar>
struct BasicCacheSet {
    Matrix<Scalar> t_pos;   // C x d, unit rows
    Matrix<Scalar> t_neg;   // C x d, unit rows
    Matrix<Scalar> v_pos;   // CK x d, unit rows
    Matrix<Scalar> v_neg;   // CK x d, raw means (norm in (0, 1])
    Matrix<Scalar> onehot;  // CK x C
    int shots = 0;
    int num_classes = 0;

    [[nodiscard]] Index dim() const noexcept { return t_pos.cols(); }

    template <typename Other>
    [[nodiscard]] BasicCacheSet<Other> cast() const {
        return {t_pos.template cast<Other>(), t_neg.template cast<Other>(),
                v_pos.template cast<Other>(), v_neg.template cast<Other>(),
                onehot.template cast<Other>(), shots, num_classes};
    }
};

using CacheSet = BasicCacheSet<float>;

using ClassFeatures = std::vector<std::vector<RowVector<float>>>;

/// Prompt ensembling: per class, mean of the prompt features then L2-normalize.
MatrixF build_positive_text_cache(const ClassFeatures& text_features);

/// Same contract as build_positive_text_cache, over negative-prompt features.
MatrixF build_negative_text_cache(const ClassFeatures& neg_text_features);

/// Groups a text store into per-class prompt lists. A labeled store may hold
/// several prompts per class; an unlabeled store must hold exactly one row per class.
ClassFeatures group_text_features(const EmbeddingSet& text);

/// Support row indices in cache order (class-major, original order within a class).
std::vector<Index> cache_row_order(const SupportQuerySplit& split);

MatrixF build_positive_visual_cache(const SupportQuerySplit& split);

/// For every (class c, slot k): one support feature drawn from each other
/// class, averaged, not re-normalized. Slots draw independently (with
/// replacement across slots).
MatrixF build_negative_visual_cache(const SupportQuerySplit& split, std::uint64_t seed);

MatrixF build_onehot_labels(int num_classes, int shots);

/// Builds all four caches from a split and the two text stores.
CacheSet build_caches(const SupportQuerySplit& split, const EmbeddingSet& text_pos,
                      const EmbeddingSet& text_neg, std::uint64_t negative_seed);

}  // namespace simnl
