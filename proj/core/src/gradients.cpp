#include "simnl/errors.hpp"
#include "simnl/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace simnl {

namespace {

template <typename Scalar>
void check_batch_labels(Index rows, Index classes, std::span<const int> labels) {
    if (static_cast<Index>(labels.size()) != rows) {
        throw ArgumentError("label count " + std::to_string(labels.size()) +
                            " does not match logit rows " + std::to_string(rows));
    }
    for (int y : labels) {
        if (y < 0 || y >= classes) throw ArgumentError("label " + std::to_string(y) + " out of range");
    }
}

// Row-normalized matrix plus the pre-normalization norms, for backprop.
template <typename Scalar>
struct Normalized {
    Matrix<Scalar> unit;
    std::vector<Scalar> norms;
};

template <typename Scalar>
Normalized<Scalar> normalize_with_norms(const Matrix<Scalar>& raw) {
    Normalized<Scalar> out{normalize_rows<Scalar>(raw), {}};
    out.norms.resize(static_cast<std::size_t>(raw.rows()));
    for (Index r = 0; r < raw.rows(); ++r) out.norms[static_cast<std::size_t>(r)] = raw.row(r).norm();
    return out;
}

// d/dx of x/|x| applied to an upstream gradient, row by row.
template <typename Scalar>
Matrix<Scalar> normalize_backward(const Normalized<Scalar>& n, const Matrix<Scalar>& grad_unit) {
    Matrix<Scalar> out(grad_unit.rows(), grad_unit.cols());
    for (Index r = 0; r < grad_unit.rows(); ++r) {
        const Scalar along = grad_unit.row(r).dot(n.unit.row(r));
        out.row(r) = (grad_unit.row(r) - along * n.unit.row(r)) / n.norms[static_cast<std::size_t>(r)];
    }
    return out;
}

// Sums the K rows of each class back onto its residual row.
template <typename Scalar>
Matrix<Scalar> reduce_broadcast(const Matrix<Scalar>& grad, Index classes, int shots) {
    Matrix<Scalar> out = Matrix<Scalar>::Zero(classes, grad.cols());
    for (Index c = 0; c < classes; ++c) {
        for (int k = 0; k < shots; ++k) out.row(c) += grad.row(c * shots + k);
    }
    return out;
}

// d loss / d logits for mean cross-entropy.
template <typename Scalar>
Matrix<Scalar> ce_backward(const Matrix<Scalar>& logits, std::span<const int> labels) {
    Matrix<Scalar> grad = softmax_rows<Scalar>(logits);
    for (Index r = 0; r < grad.rows(); ++r) grad(r, labels[static_cast<std::size_t>(r)]) -= Scalar(1);
    return grad / static_cast<Scalar>(logits.rows());
}

// d loss / d neg_logits for mean negative cross-entropy.
template <typename Scalar>
Matrix<Scalar> negative_ce_backward(const Matrix<Scalar>& neg_logits, std::span<const int> labels) {
    const Matrix<Scalar> p = softmax_rows<Scalar>(neg_logits);
    Matrix<Scalar> grad = Matrix<Scalar>::Zero(p.rows(), p.cols());
    const auto clamp = static_cast<Scalar>(kNegativeProbabilityClamp);
    for (Index r = 0; r < p.rows(); ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        const Scalar py = p(r, y);
        if (py >= clamp) continue;  // loss is constant on the clamped region
        const Scalar scale = py / (Scalar(1) - py);
        grad.row(r) = -scale * p.row(r);
        grad(r, y) += scale;
    }
    return grad / static_cast<Scalar>(p.rows());
}

}  // namespace

std::string_view to_string(LossMode mode) {
    return mode == LossMode::ensemble_ce ? "ensemble_ce" : "negative_ce";
}

LossMode parse_loss_mode(std::string_view text) {
    if (text == "ensemble_ce") return LossMode::ensemble_ce;
    if (text == "negative_ce") return LossMode::negative_ce;
    throw ArgumentError("unknown loss mode \"" + std::string(text) + "\"");
}

template <typename Scalar>
Scalar ce_loss(const Matrix<Scalar>& logits, std::span<const int> labels) {
    check_batch_labels<Scalar>(logits.rows(), logits.cols(), labels);
    if (logits.rows() == 0) return Scalar(0);
    Scalar total(0);
    for (Index r = 0; r < logits.rows(); ++r) {
        Index arg = 0;
        const Scalar top = logits.row(r).maxCoeff(&arg);
        // The max term contributes exp(0) = 1; log1p of the rest keeps small tails exact.
        Scalar tail(0);
        for (Index c = 0; c < logits.cols(); ++c) {
            if (c != arg) tail += std::exp(logits(r, c) - top);
        }
        total += (top - logits(r, labels[static_cast<std::size_t>(r)])) + std::log1p(tail);
    }
    return total / static_cast<Scalar>(logits.rows());
}

template <typename Scalar>
Scalar negative_ce_loss(const Matrix<Scalar>& neg_logits, std::span<const int> labels) {
    check_batch_labels<Scalar>(neg_logits.rows(), neg_logits.cols(), labels);
    if (neg_logits.rows() == 0) return Scalar(0);
    const Matrix<Scalar> p = softmax_rows<Scalar>(neg_logits);
    const auto clamp = static_cast<Scalar>(kNegativeProbabilityClamp);
    Scalar total(0);
    for (Index r = 0; r < p.rows(); ++r) {
        const Scalar py = std::min(p(r, labels[static_cast<std::size_t>(r)]), clamp);
        total -= std::log1p(-py);
    }
    return total / static_cast<Scalar>(p.rows());
}

template <typename Scalar>
Scalar batch_loss(const Matrix<Scalar>& features, std::span<const int> labels,
                  const BasicCacheSet<Scalar>& cache, const BasicResidualSet<Scalar>& res,
                  const BasicWeightedLabels<Scalar>& weighted, const HyperParams& hp,
                  LossMode mode) {
    const auto bundle = forward_final(features, cache, res, weighted, hp);
    if (mode == LossMode::ensemble_ce) return ce_loss<Scalar>(bundle.s_final, labels);
    const Matrix<Scalar> neg_logits = -(bundle.s_t_neg + bundle.s_v_neg);
    return negative_ce_loss<Scalar>(neg_logits, labels);
}

template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(const Matrix<Scalar>& features,
                                            std::span<const int> labels,
                                            const BasicCacheSet<Scalar>& cache,
                                            const BasicResidualSet<Scalar>& res,
                                            const BasicWeightedLabels<Scalar>& weighted,
                                            const HyperParams& hp, LossMode mode) {
    const Index C = cache.num_classes;
    const Index d = cache.dim();
    const int K = cache.shots;
    check_batch_labels<Scalar>(features.rows(), C, labels);

    LossAndGradients<Scalar> out;
    out.grads = BasicResidualSet<Scalar>::zeros(C, d, res.enabled);
    if (features.rows() == 0) return out;

    // Forward pass through forward_final also runs every shape and delta check.
    const auto bundle = forward_final(features, cache, res, weighted, hp);
    const auto lambda = static_cast<Scalar>(hp.lambda);
    const auto beta = static_cast<Scalar>(hp.beta);
    const auto delta_t = static_cast<Scalar>(*hp.delta_t);
    const auto delta_v = static_cast<Scalar>(*hp.delta_v);

    Matrix<Scalar> grad_pos;  // d loss / d S_T+ (= d loss / d S_V+)
    Matrix<Scalar> grad_neg;  // d loss / d S_T- (= d loss / d S_V-)
    if (mode == LossMode::ensemble_ce) {
        out.loss = ce_loss<Scalar>(bundle.s_final, labels);
        const Matrix<Scalar> g = ce_backward<Scalar>(bundle.s_final, labels);
        grad_pos = lambda * g;
        grad_neg = (Scalar(1) - lambda) * g;
    } else {
        const Matrix<Scalar> neg_logits = -(bundle.s_t_neg + bundle.s_v_neg);
        out.loss = negative_ce_loss<Scalar>(neg_logits, labels);
        grad_neg = -negative_ce_backward<Scalar>(neg_logits, labels);
    }

    if (mode == LossMode::ensemble_ce && res.enabled.t_pos) {
        const auto t = normalize_with_norms<Scalar>(cache.t_pos + res.t_pos);
        const Matrix<Scalar> grad_unit = grad_pos.transpose() * features;
        out.grads.t_pos = normalize_backward(t, grad_unit);
    }
    if (mode == LossMode::ensemble_ce && res.enabled.v_pos) {
        const auto v = normalize_with_norms<Scalar>(
            cache.v_pos + broadcast_residual<Scalar>(res.v_pos, K));
        const Matrix<Scalar> aff = affinity<Scalar>(features * v.unit.transpose(), hp.alpha, hp.beta);
        const Matrix<Scalar> grad_z =
            ((grad_pos * weighted.pos.transpose()).array() * aff.array() * beta).matrix();
        const Matrix<Scalar> grad_unit = grad_z.transpose() * features;
        out.grads.v_pos = reduce_broadcast<Scalar>(normalize_backward(v, grad_unit), C, K);
    }
    if (res.enabled.t_neg) {
        const auto t = normalize_with_norms<Scalar>(cache.t_neg + res.t_neg);
        const Matrix<Scalar> grad_unit = -delta_t * (grad_neg.transpose() * features);
        out.grads.t_neg = normalize_backward(t, grad_unit);
    }
    if (res.enabled.v_neg) {
        const auto v = normalize_with_norms<Scalar>(
            cache.v_neg + broadcast_residual<Scalar>(res.v_neg, K));
        const Matrix<Scalar> dissim =
            Matrix<Scalar>::Ones(features.rows(), v.unit.rows()) - features * v.unit.transpose();
        const Matrix<Scalar> aff = affinity<Scalar>(dissim, hp.alpha, hp.beta);
        const Matrix<Scalar> grad_dissim =
            ((delta_v * (grad_neg * weighted.neg.transpose())).array() * aff.array() * beta).matrix();
        const Matrix<Scalar> grad_unit = -(grad_dissim.transpose() * features);
        out.grads.v_neg = reduce_broadcast<Scalar>(normalize_backward(v, grad_unit), C, K);
    }
    return out;
}

#define SIMNL_INSTANTIATE_LOSSES(T)                                                            \
    template T ce_loss<T>(const Matrix<T>&, std::span<const int>);                             \
    template T negative_ce_loss<T>(const Matrix<T>&, std::span<const int>);                    \
    template T batch_loss<T>(const Matrix<T>&, std::span<const int>, const BasicCacheSet<T>&,  \
                             const BasicResidualSet<T>&, const BasicWeightedLabels<T>&,        \
                             const HyperParams&, LossMode);                                    \
    template LossAndGradients<T> loss_and_gradients<T>(                                        \
        const Matrix<T>&, std::span<const int>, const BasicCacheSet<T>&,                       \
        const BasicResidualSet<T>&, const BasicWeightedLabels<T>&, const HyperParams&, LossMode);

SIMNL_INSTANTIATE_LOSSES(float)
SIMNL_INSTANTIATE_LOSSES(double)

#undef SIMNL_INSTANTIATE_LOSSES

}  // namespace simnl
