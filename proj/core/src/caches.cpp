#include "simnl/caches.hpp"

#include "simnl/errors.hpp"

#include <random>

namespace simnl {

namespace {

MatrixF ensemble_prompts(const ClassFeatures& features, const char* what) {
    if (features.empty()) throw ArgumentError(std::string(what) + ": no classes");
    Index dim = -1;
    for (std::size_t c = 0; c < features.size(); ++c) {
        if (features[c].empty()) {
            throw ArgumentError(std::string(what) + ": class " + std::to_string(c) +
                                " has no prompt features");
        }
        for (const auto& f : features[c]) {
            if (dim < 0) dim = f.size();
            if (f.size() != dim || dim == 0) {
                throw ArgumentError(std::string(what) + ": class " + std::to_string(c) +
                                    " has a feature of dimension " + std::to_string(f.size()) +
                                    ", expected " + std::to_string(dim));
            }
        }
    }

    MatrixF out(static_cast<Index>(features.size()), dim);
    for (std::size_t c = 0; c < features.size(); ++c) {
        RowVector<double> mean = RowVector<double>::Zero(dim);
        for (const auto& f : features[c]) mean += f.cast<double>();
        mean /= static_cast<double>(features[c].size());
        const double norm = mean.norm();
        if (norm == 0.0) {
            throw DataError(std::string(what) + ": class " + std::to_string(c) +
                            " prompt features average to zero");
        }
        out.row(static_cast<Index>(c)) = (mean / norm).cast<float>();
    }
    return out;
}

}  // namespace

MatrixF build_positive_text_cache(const ClassFeatures& text_features) {
    return ensemble_prompts(text_features, "positive text cache");
}

MatrixF build_negative_text_cache(const ClassFeatures& neg_text_features) {
    return ensemble_prompts(neg_text_features, "negative text cache");
}

ClassFeatures group_text_features(const EmbeddingSet& text) {
    ClassFeatures grouped(text.num_classes > 0 ? text.num_classes : 0);
    if (text.labels) {
        for (Index r = 0; r < text.size(); ++r) {
            const auto label = (*text.labels)[static_cast<std::size_t>(r)];
            if (label >= grouped.size()) {
                throw ArgumentError("text label " + std::to_string(label) + " out of range");
            }
            grouped[label].push_back(text.rows.row(r));
        }
        return grouped;
    }
    if (text.size() != text.num_classes) {
        throw ArgumentError("unlabeled text store must hold one row per class (" +
                            std::to_string(text.num_classes) + "), found " +
                            std::to_string(text.size()));
    }
    for (Index r = 0; r < text.size(); ++r) grouped[static_cast<std::size_t>(r)].push_back(text.rows.row(r));
    return grouped;
}

std::vector<Index> cache_row_order(const SupportQuerySplit& split) {
    check_split(split);
    const auto& labels = *split.support.labels;
    std::vector<Index> order;
    order.reserve(labels.size());
    for (int c = 0; c < split.support.num_classes; ++c) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == static_cast<std::uint32_t>(c)) order.push_back(static_cast<Index>(i));
        }
    }
    return order;
}

MatrixF build_positive_visual_cache(const SupportQuerySplit& split) {
    const auto order = cache_row_order(split);
    MatrixF cache(static_cast<Index>(order.size()), split.support.dim());
    for (std::size_t r = 0; r < order.size(); ++r) {
        cache.row(static_cast<Index>(r)) = split.support.rows.row(order[r]);
    }
    return cache;
}

MatrixF build_negative_visual_cache(const SupportQuerySplit& split, std::uint64_t seed) {
    if (split.support.num_classes < 2) {
        throw ArgumentError("negative visual cache needs at least 2 classes");
    }
    const auto order = cache_row_order(split);
    const int C = split.support.num_classes;
    const int K = split.shots;
    const Index d = split.support.dim();

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, K - 1);
    MatrixF cache(static_cast<Index>(C) * K, d);
    for (int c = 0; c < C; ++c) {
        for (int k = 0; k < K; ++k) {
            RowVector<double> mean = RowVector<double>::Zero(d);
            for (int other = 0; other < C; ++other) {
                if (other == c) continue;
                const Index src = order[static_cast<std::size_t>(other) * K + pick(rng)];
                mean += split.support.rows.row(src).cast<double>();
            }
            mean /= static_cast<double>(C - 1);
            cache.row(static_cast<Index>(c) * K + k) = mean.cast<float>();
        }
    }
    return cache;
}

MatrixF build_onehot_labels(int num_classes, int shots) {
    if (num_classes < 2) throw ArgumentError("one-hot labels need at least 2 classes");
    if (shots < 1) throw ArgumentError("one-hot labels need shots >= 1");
    MatrixF onehot = MatrixF::Zero(static_cast<Index>(num_classes) * shots, num_classes);
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < shots; ++i) onehot(static_cast<Index>(c) * shots + i, c) = 1.0f;
    }
    return onehot;
}

CacheSet build_caches(const SupportQuerySplit& split, const EmbeddingSet& text_pos,
                      const EmbeddingSet& text_neg, std::uint64_t negative_seed) {
    check_split(split);
    const int C = split.support.num_classes;
    if (text_pos.num_classes != C || text_neg.num_classes != C) {
        throw ArgumentError("text stores and support disagree on the class count");
    }
    CacheSet cache;
    cache.t_pos = build_positive_text_cache(group_text_features(text_pos));
    cache.t_neg = build_negative_text_cache(group_text_features(text_neg));
    if (cache.t_pos.cols() != split.support.dim() || cache.t_neg.cols() != split.support.dim()) {
        throw ArgumentError("text and image features have different dimensions");
    }
    cache.v_pos = build_positive_visual_cache(split);
    cache.v_neg = build_negative_visual_cache(split, negative_seed);
    cache.onehot = build_onehot_labels(C, split.shots);
    cache.shots = split.shots;
    cache.num_classes = C;
    return cache;
}

}  // namespace simnl
