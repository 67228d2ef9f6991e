#include "simnl/reweighting.hpp"

#include "simnl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace simnl {

std::vector<double> pairwise_mean_similarity(const MatrixD& class_features) {
    const Index K = class_features.rows();
    if (K < 2) throw ArgumentError("pairwise mean similarity needs at least 2 shots");
    const MatrixD gram = class_features * class_features.transpose();
    std::vector<double> mean_sims(static_cast<std::size_t>(K));
    for (Index i = 0; i < K; ++i) {
        double sum = 0.0;
        for (Index j = 0; j < K; ++j) {
            if (j != i) sum += gram(i, j);
        }
        mean_sims[static_cast<std::size_t>(i)] = sum / static_cast<double>(K - 1);
    }
    return mean_sims;
}

ConfidenceWeights confidence_weights(const std::vector<double>& mean_sims, double tau) {
    if (!(tau > 0.0)) throw ArgumentError("reweighting temperature tau must be > 0");
    if (mean_sims.empty()) return {};
    const double top = *std::max_element(mean_sims.begin(), mean_sims.end());
    ConfidenceWeights out;
    out.weights.resize(mean_sims.size());
    double total = 0.0;
    for (std::size_t i = 0; i < mean_sims.size(); ++i) {
        out.weights[i] = std::exp((mean_sims[i] - top) / tau);
        total += out.weights[i];
    }
    const double K = static_cast<double>(mean_sims.size());
    out.confidences.resize(mean_sims.size());
    for (std::size_t i = 0; i < mean_sims.size(); ++i) {
        out.weights[i] /= total;
        out.confidences[i] = K * out.weights[i];
    }
    return out;
}

ReweightResult reweight_rows(const MatrixF& features, int num_classes, int shots, double tau) {
    if (!(tau > 0.0)) throw ArgumentError("reweighting temperature tau must be > 0");
    if (features.rows() != static_cast<Index>(num_classes) * shots) {
        throw ArgumentError("reweighting: feature rows do not match classes * shots");
    }
    ReweightResult result;
    result.mean_sims.resize(num_classes);
    result.weights.resize(num_classes);
    result.confidences.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        if (shots < 2) {
            result.mean_sims[c].assign(shots, 1.0);
            result.weights[c].assign(shots, 1.0 / shots);
            result.confidences[c].assign(shots, 1.0);
            continue;
        }
        MatrixD block = features.middleRows(static_cast<Index>(c) * shots, shots).cast<double>();
        for (Index r = 0; r < block.rows(); ++r) {
            const double norm = block.row(r).norm();
            if (norm == 0.0) {
                throw NumericDomainError("reweighting: cache row " +
                                         std::to_string(c * shots + r) + " has zero norm");
            }
            block.row(r) /= norm;
        }
        result.mean_sims[c] = pairwise_mean_similarity(block);
        auto cw = confidence_weights(result.mean_sims[c], tau);
        result.weights[c] = std::move(cw.weights);
        result.confidences[c] = std::move(cw.confidences);
    }
    return result;
}

MatrixF reweight_labels(const MatrixF& onehot, const ReweightResult& result) {
    const auto C = static_cast<Index>(result.confidences.size());
    if (C == 0 || onehot.cols() != C) throw ArgumentError("reweight_labels: class count mismatch");
    const auto K = static_cast<Index>(result.confidences.front().size());
    if (onehot.rows() != C * K) throw ArgumentError("reweight_labels: row count mismatch");
    MatrixF out = onehot;
    for (Index c = 0; c < C; ++c) {
        if (static_cast<Index>(result.confidences[c].size()) != K) {
            throw ArgumentError("reweight_labels: ragged confidences");
        }
        for (Index i = 0; i < K; ++i) {
            out.row(c * K + i) *= static_cast<float>(result.confidences[c][i]);
        }
    }
    return out;
}

WeightedLabels reweight_caches(const CacheSet& cache, double tau, bool enable) {
    if (cache.onehot.rows() != static_cast<Index>(cache.num_classes) * cache.shots ||
        cache.v_pos.rows() != cache.onehot.rows() || cache.v_neg.rows() != cache.onehot.rows()) {
        throw ArgumentError("reweight_caches: inconsistent cache shapes");
    }
    if (!enable || cache.shots < 2) return {cache.onehot, cache.onehot};
    const auto pos = reweight_rows(cache.v_pos, cache.num_classes, cache.shots, tau);
    const auto neg = reweight_rows(cache.v_neg, cache.num_classes, cache.shots, tau);
    return {reweight_labels(cache.onehot, pos), reweight_labels(cache.onehot, neg)};
}

}  // namespace simnl
