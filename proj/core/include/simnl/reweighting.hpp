#pragma once

#include "simnl/caches.hpp"
#include "simnl/matrix.hpp"

#include <utility>
#include <vector>

namespace simnl {

/// Per-class reweighting output: mean_sims[c][i] is the average cosine of
/// shot i to its classmates, weights[c] = softmax(mean_sims[c] / tau) and
/// confidences[c][i] = K * weights[c][i].
struct ReweightResult {
    std::vector<std::vector<double>> mean_sims;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> confidences;
};

/// d_i = (1 / (K - 1)) * sum_{j != i} <f_i, f_j>. Needs K >= 2.
std::vector<double> pairwise_mean_similarity(const MatrixD& class_features);

struct ConfidenceWeights {
    std::vector<double> weights;
    std::vector<double> confidences;
};

ConfidenceWeights confidence_weights(const std::vector<double>& mean_sims, double tau);

/// Reweighting over a class-major CK x d matrix. Rows are normalized before
/// the similarity computation. K < 2 falls back to uniform confidence 1.
ReweightResult reweight_rows(const MatrixF& features, int num_classes, int shots, double tau);

/// Row c*K + i scaled by confidences[c][i].
MatrixF reweight_labels(const MatrixF& onehot, const ReweightResult& result);

/// Label matrices consumed by the positive and negative visual branches.
template <typename Scalar>
struct BasicWeightedLabels {
    Matrix<Scalar> pos;
    Matrix<Scalar> neg;

    template <typename Other>
    [[nodiscard]] BasicWeightedLabels<Other> cast() const {
        return {pos.template cast<Other>(), neg.template cast<Other>()};
    }
};

using WeightedLabels = BasicWeightedLabels<float>;

/// Weighted label matrices for the positive and negative visual branches.
/// With `enable` off both are the plain one-hot matrix.
WeightedLabels reweight_caches(const CacheSet& cache, double tau, bool enable);

}  // namespace simnl
