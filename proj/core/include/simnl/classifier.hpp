#pragma once

#include "simnl/caches.hpp"
#include "simnl/matrix.hpp"
#include "simnl/reweighting.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace simnl {

/// Which residual blocks are trainable.
struct ResidualMask {
    bool t_pos = true;
    bool t_neg = true;
    bool v_pos = true;
    bool v_neg = true;

    friend bool operator==(const ResidualMask&, const ResidualMask&) = default;
};

/// Ablation variants: T trains both textual residuals, V both visual, P both
/// positive, N both negative, full all four.
enum class Variant { full, textual, visual, positive, negative };

ResidualMask mask_for(Variant variant);
std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

/// The four learnable C x d residuals. Visual residual row c is broadcast over
/// the K cache rows of class c.
template <typename Scalar>
struct BasicResidualSet {
    Matrix<Scalar> t_pos;
    Matrix<Scalar> t_neg;
    Matrix<Scalar> v_pos;
    Matrix<Scalar> v_neg;
    ResidualMask enabled;

    static BasicResidualSet zeros(Index num_classes, Index dim, ResidualMask mask = {}) {
        return {Matrix<Scalar>::Zero(num_classes, dim), Matrix<Scalar>::Zero(num_classes, dim),
                Matrix<Scalar>::Zero(num_classes, dim), Matrix<Scalar>::Zero(num_classes, dim),
                mask};
    }

    template <typename Other>
    [[nodiscard]] BasicResidualSet<Other> cast() const {
        return {t_pos.template cast<Other>(), t_neg.template cast<Other>(),
                v_pos.template cast<Other>(), v_neg.template cast<Other>(), enabled};
    }
};

using ResidualSet = BasicResidualSet<float>;

struct HyperParams {
    double lambda = 0.75;
    double tau = 1.0;
    double alpha = 1.2;
    double beta = 2.0;
    // Unset until calibrate_deltas runs; frozen afterwards.
    std::optional<double> delta_t;
    std::optional<double> delta_v;
    double logit_scale = 100.0;
    double lr_pos = 1e-4;
    double lr_neg = 5e-4;
    double weight_decay = 0.01;
    int epochs = 20;
    int batch_size = 256;
    std::uint64_t seed = 1;
    bool reweighting = true;
};

template <typename Scalar>
struct BasicLogitBundle {
    Matrix<Scalar> s_t_pos;
    Matrix<Scalar> s_v_pos;
    Matrix<Scalar> s_t_neg;
    Matrix<Scalar> s_v_neg;
    Matrix<Scalar> s_final;

    /// Row-wise softmax of s_final.
    [[nodiscard]] Matrix<Scalar> probabilities() const;
};

using LogitBundle = BasicLogitBundle<float>;

/// Divides each row by its L2 norm; a zero row throws NumericDomainError.
template <typename Scalar>
Matrix<Scalar> normalize_rows(const Matrix<Scalar>& m);

/// Elementwise alpha * exp(-beta * (1 - z)).
template <typename Scalar>
Matrix<Scalar> affinity(const Matrix<Scalar>& z, double alpha, double beta);

/// Row c*K + i of the result is row c of `residual`.
template <typename Scalar>
Matrix<Scalar> broadcast_residual(const Matrix<Scalar>& residual, int shots);

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits);

/// S_T+ = f_v * normalize(T+ + R_T+)^T
template <typename Scalar>
Matrix<Scalar> forward_positive_text(const Matrix<Scalar>& features,
                                     const BasicCacheSet<Scalar>& cache,
                                     const BasicResidualSet<Scalar>& res);

/// S_V+ = A(f_v * normalize(V+ + broadcast(R_V+))^T) * L+
template <typename Scalar>
Matrix<Scalar> forward_positive_visual(const Matrix<Scalar>& features,
                                       const BasicCacheSet<Scalar>& cache,
                                       const BasicResidualSet<Scalar>& res,
                                       const Matrix<Scalar>& labels_pos, const HyperParams& hp);

/// S_T- = delta_T * (1 - f_v * normalize(T- + R_T-)^T). Needs delta_t > 0.
template <typename Scalar>
Matrix<Scalar> forward_negative_text(const Matrix<Scalar>& features,
                                     const BasicCacheSet<Scalar>& cache,
                                     const BasicResidualSet<Scalar>& res, const HyperParams& hp);

/// S_V- = delta_V * A(1 - f_v * normalize(V- + broadcast(R_V-))^T) * L-. Needs delta_v >= 0.
template <typename Scalar>
Matrix<Scalar> forward_negative_visual(const Matrix<Scalar>& features,
                                       const BasicCacheSet<Scalar>& cache,
                                       const BasicResidualSet<Scalar>& res,
                                       const Matrix<Scalar>& labels_neg, const HyperParams& hp);

struct Deltas {
    double delta_t = 0.0;
    double delta_v = 0.0;
};

/// delta_T = mean(S_T+) / mean(raw S_T-) and delta_V = mean(S_V+) / mean(raw S_V-),
/// means over every entry, evaluated on `features` with zero residuals.
template <typename Scalar>
Deltas calibrate_deltas(const Matrix<Scalar>& features, const BasicCacheSet<Scalar>& cache,
                        const BasicWeightedLabels<Scalar>& labels, const HyperParams& hp);

/// All four branches and the lambda mix.
template <typename Scalar>
BasicLogitBundle<Scalar> forward_final(const Matrix<Scalar>& features,
                                       const BasicCacheSet<Scalar>& cache,
                                       const BasicResidualSet<Scalar>& res,
                                       const BasicWeightedLabels<Scalar>& labels,
                                       const HyperParams& hp);

/// Row-wise argmax; ties go to the lowest class index.
template <typename Scalar>
std::vector<int> argmax_rows(const Matrix<Scalar>& scores);

inline std::vector<int> predict(const LogitBundle& bundle) { return argmax_rows(bundle.s_final); }

struct ZeroShotResult {
    MatrixF probabilities;
    std::vector<int> predictions;
};

/// softmax(logit_scale * f_v * T+^T) and its argmax.
ZeroShotResult zero_shot_predict(const MatrixF& features, const MatrixF& t_pos, double logit_scale);

}  // namespace simnl
