#include "simnl/classifier.hpp"

#include "simnl/errors.hpp"

#include <cmath>
#include <string>

namespace simnl {

namespace {

// Affinity inputs are cosines (positive branch) or one-minus-cosines (negative
// branch), so anything outside this band means corrupted features.
constexpr double kAffinityDomain = 3.0;

template <typename Scalar>
void check_shapes(const Matrix<Scalar>& features, const BasicCacheSet<Scalar>& cache,
                  const BasicResidualSet<Scalar>& res) {
    const Index C = cache.num_classes;
    const Index d = cache.dim();
    if (features.cols() != d) {
        throw ArgumentError("query features have dim " + std::to_string(features.cols()) +
                            ", cache expects " + std::to_string(d));
    }
    const auto ok = [&](const Matrix<Scalar>& m) { return m.rows() == C && m.cols() == d; };
    if (!ok(res.t_pos) || !ok(res.t_neg) || !ok(res.v_pos) || !ok(res.v_neg)) {
        throw ArgumentError("residual shapes do not match the cache (C x d)");
    }
}

template <typename Scalar>
void check_labels(const Matrix<Scalar>& labels, const BasicCacheSet<Scalar>& cache) {
    if (labels.rows() != cache.v_pos.rows() || labels.cols() != cache.num_classes) {
        throw ArgumentError("label matrix must be CK x C");
    }
}

double require_delta(const std::optional<double>& delta, const char* name, bool allow_zero) {
    if (!delta) throw StateError(std::string(name) + " is not calibrated");
    const double value = *delta;
    if (!std::isfinite(value) || value < 0.0 || (!allow_zero && value == 0.0)) {
        throw StateError(std::string(name) + " must be " + (allow_zero ? ">= 0" : "> 0") +
                         ", got " + std::to_string(value));
    }
    return value;
}

template <typename Scalar>
Matrix<Scalar> raw_negative_text(const Matrix<Scalar>& features, const BasicCacheSet<Scalar>& cache,
                                 const BasicResidualSet<Scalar>& res) {
    const Matrix<Scalar> t = normalize_rows<Scalar>(cache.t_neg + res.t_neg);
    return (Matrix<Scalar>::Ones(features.rows(), t.rows()) - features * t.transpose()).eval();
}

template <typename Scalar>
Matrix<Scalar> raw_negative_visual(const Matrix<Scalar>& features,
                                   const BasicCacheSet<Scalar>& cache,
                                   const BasicResidualSet<Scalar>& res,
                                   const Matrix<Scalar>& labels_neg, const HyperParams& hp) {
    const Matrix<Scalar> v =
        normalize_rows<Scalar>(cache.v_neg + broadcast_residual<Scalar>(res.v_neg, cache.shots));
    const Matrix<Scalar> dissim =
        Matrix<Scalar>::Ones(features.rows(), v.rows()) - features * v.transpose();
    return affinity<Scalar>(dissim, hp.alpha, hp.beta) * labels_neg;
}

}  // namespace

ResidualMask mask_for(Variant variant) {
    switch (variant) {
        case Variant::full: return {true, true, true, true};
        case Variant::textual: return {true, true, false, false};
        case Variant::visual: return {false, false, true, true};
        case Variant::positive: return {true, false, true, false};
        case Variant::negative: return {false, true, false, true};
    }
    throw ArgumentError("unknown variant");
}

std::string_view to_string(Variant variant) {
    switch (variant) {
        case Variant::full: return "full";
        case Variant::textual: return "T";
        case Variant::visual: return "V";
        case Variant::positive: return "P";
        case Variant::negative: return "N";
    }
    return "?";
}

Variant parse_variant(std::string_view text) {
    if (text == "full") return Variant::full;
    if (text == "T" || text == "t" || text == "textual") return Variant::textual;
    if (text == "V" || text == "v" || text == "visual") return Variant::visual;
    if (text == "P" || text == "p" || text == "positive") return Variant::positive;
    if (text == "N" || text == "n" || text == "negative") return Variant::negative;
    throw ArgumentError("unknown variant \"" + std::string(text) + "\" (expected full|T|V|P|N)");
}

template <typename Scalar>
Matrix<Scalar> normalize_rows(const Matrix<Scalar>& m) {
    Matrix<Scalar> out(m.rows(), m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
        const Scalar norm = m.row(r).norm();
        if (!(norm > Scalar(0)) || !std::isfinite(static_cast<double>(norm))) {
            throw NumericDomainError("cannot normalize row " + std::to_string(r) +
                                     " (norm " + std::to_string(static_cast<double>(norm)) + ")");
        }
        out.row(r) = m.row(r) / norm;
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> affinity(const Matrix<Scalar>& z, double alpha, double beta) {
    Matrix<Scalar> out(z.rows(), z.cols());
    const auto a = static_cast<Scalar>(alpha);
    const auto b = static_cast<Scalar>(beta);
    for (Index i = 0; i < z.rows(); ++i) {
        for (Index j = 0; j < z.cols(); ++j) {
            const Scalar v = z(i, j);
            if (!(std::abs(static_cast<double>(v)) <= kAffinityDomain)) {
                throw NumericDomainError("affinity input " + std::to_string(static_cast<double>(v)) +
                                         " outside [-3, 3]");
            }
            out(i, j) = a * std::exp(-b * (Scalar(1) - v));
        }
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> broadcast_residual(const Matrix<Scalar>& residual, int shots) {
    Matrix<Scalar> out(residual.rows() * shots, residual.cols());
    for (Index c = 0; c < residual.rows(); ++c) {
        for (int k = 0; k < shots; ++k) out.row(c * shots + k) = residual.row(c);
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
        const Scalar top = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - top).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> BasicLogitBundle<Scalar>::probabilities() const {
    return softmax_rows<Scalar>(s_final);
}

template <typename Scalar>
Matrix<Scalar> forward_positive_text(const Matrix<Scalar>& features,
                                     const BasicCacheSet<Scalar>& cache,
                                     const BasicResidualSet<Scalar>& res) {
    check_shapes(features, cache, res);
    const Matrix<Scalar> t = normalize_rows<Scalar>(cache.t_pos + res.t_pos);
    return features * t.transpose();
}

template <typename Scalar>
Matrix<Scalar> forward_positive_visual(const Matrix<Scalar>& features,
                                       const BasicCacheSet<Scalar>& cache,
                                       const BasicResidualSet<Scalar>& res,
                                       const Matrix<Scalar>& labels_pos, const HyperParams& hp) {
    check_shapes(features, cache, res);
    check_labels(labels_pos, cache);
    const Matrix<Scalar> v =
        normalize_rows<Scalar>(cache.v_pos + broadcast_residual<Scalar>(res.v_pos, cache.shots));
    return affinity<Scalar>(features * v.transpose(), hp.alpha, hp.beta) * labels_pos;
}

template <typename Scalar>
Matrix<Scalar> forward_negative_text(const Matrix<Scalar>& features,
                                     const BasicCacheSet<Scalar>& cache,
                                     const BasicResidualSet<Scalar>& res, const HyperParams& hp) {
    const double delta = require_delta(hp.delta_t, "delta_t", false);
    check_shapes(features, cache, res);
    return static_cast<Scalar>(delta) * raw_negative_text(features, cache, res);
}

template <typename Scalar>
Matrix<Scalar> forward_negative_visual(const Matrix<Scalar>& features,
                                       const BasicCacheSet<Scalar>& cache,
                                       const BasicResidualSet<Scalar>& res,
                                       const Matrix<Scalar>& labels_neg, const HyperParams& hp) {
    const double delta = require_delta(hp.delta_v, "delta_v", true);
    check_shapes(features, cache, res);
    check_labels(labels_neg, cache);
    return static_cast<Scalar>(delta) * raw_negative_visual(features, cache, res, labels_neg, hp);
}

template <typename Scalar>
Deltas calibrate_deltas(const Matrix<Scalar>& features, const BasicCacheSet<Scalar>& cache,
                        const BasicWeightedLabels<Scalar>& labels, const HyperParams& hp) {
    const auto zero = BasicResidualSet<Scalar>::zeros(cache.num_classes, cache.dim());
    check_shapes(features, cache, zero);
    check_labels(labels.pos, cache);
    check_labels(labels.neg, cache);

    const auto mean = [](const Matrix<Scalar>& m) {
        return m.template cast<double>().mean();
    };
    const double t_pos = mean(forward_positive_text(features, cache, zero));
    const double t_neg = mean(raw_negative_text(features, cache, zero));
    const double v_pos = mean(forward_positive_visual(features, cache, zero, labels.pos, hp));
    const double v_neg = mean(raw_negative_visual(features, cache, zero, labels.neg, hp));
    if (t_neg == 0.0 || v_neg == 0.0) {
        throw CalibrationError("negative branch has zero mean logit; cannot calibrate");
    }
    Deltas deltas{t_pos / t_neg, v_pos / v_neg};
    if (!(deltas.delta_t > 0.0) || !std::isfinite(deltas.delta_t) || !(deltas.delta_v > 0.0) ||
        !std::isfinite(deltas.delta_v)) {
        throw CalibrationError("calibration produced non-positive deltas (" +
                               std::to_string(deltas.delta_t) + ", " +
                               std::to_string(deltas.delta_v) + ")");
    }
    return deltas;
}

template <typename Scalar>
BasicLogitBundle<Scalar> forward_final(const Matrix<Scalar>& features,
                                       const BasicCacheSet<Scalar>& cache,
                                       const BasicResidualSet<Scalar>& res,
                                       const BasicWeightedLabels<Scalar>& labels,
                                       const HyperParams& hp) {
    BasicLogitBundle<Scalar> out;
    out.s_t_pos = forward_positive_text(features, cache, res);
    out.s_v_pos = forward_positive_visual(features, cache, res, labels.pos, hp);
    out.s_t_neg = forward_negative_text(features, cache, res, hp);
    out.s_v_neg = forward_negative_visual(features, cache, res, labels.neg, hp);
    const auto lambda = static_cast<Scalar>(hp.lambda);
    out.s_final = lambda * (out.s_t_pos + out.s_v_pos) +
                  (Scalar(1) - lambda) * (out.s_t_neg + out.s_v_neg);
    return out;
}

template <typename Scalar>
std::vector<int> argmax_rows(const Matrix<Scalar>& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.rows()), 0);
    for (Index r = 0; r < scores.rows(); ++r) {
        Index best = 0;
        for (Index c = 1; c < scores.cols(); ++c) {
            if (scores(r, c) > scores(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

ZeroShotResult zero_shot_predict(const MatrixF& features, const MatrixF& t_pos,
                                 double logit_scale) {
    if (features.cols() != t_pos.cols()) {
        throw ArgumentError("zero-shot: feature and text dimensions differ");
    }
    const MatrixD logits =
        logit_scale * (features.cast<double>() * t_pos.cast<double>().transpose());
    ZeroShotResult out;
    out.probabilities = softmax_rows<double>(logits).cast<float>();
    out.predictions = argmax_rows<double>(logits);
    return out;
}

#define SIMNL_INSTANTIATE_CLASSIFIER(T)                                                        \
    template struct BasicLogitBundle<T>;                                                       \
    template Matrix<T> normalize_rows<T>(const Matrix<T>&);                                    \
    template Matrix<T> affinity<T>(const Matrix<T>&, double, double);                          \
    template Matrix<T> broadcast_residual<T>(const Matrix<T>&, int);                           \
    template Matrix<T> softmax_rows<T>(const Matrix<T>&);                                      \
    template Matrix<T> forward_positive_text<T>(const Matrix<T>&, const BasicCacheSet<T>&,     \
                                                const BasicResidualSet<T>&);                   \
    template Matrix<T> forward_positive_visual<T>(const Matrix<T>&, const BasicCacheSet<T>&,   \
                                                  const BasicResidualSet<T>&,                  \
                                                  const Matrix<T>&, const HyperParams&);       \
    template Matrix<T> forward_negative_text<T>(const Matrix<T>&, const BasicCacheSet<T>&,     \
                                                const BasicResidualSet<T>&, const HyperParams&); \
    template Matrix<T> forward_negative_visual<T>(const Matrix<T>&, const BasicCacheSet<T>&,   \
                                                  const BasicResidualSet<T>&,                  \
                                                  const Matrix<T>&, const HyperParams&);       \
    template Deltas calibrate_deltas<T>(const Matrix<T>&, const BasicCacheSet<T>&,             \
                                        const BasicWeightedLabels<T>&, const HyperParams&);    \
    template BasicLogitBundle<T> forward_final<T>(const Matrix<T>&, const BasicCacheSet<T>&,   \
                                                  const BasicResidualSet<T>&,                  \
                                                  const BasicWeightedLabels<T>&,               \
                                                  const HyperParams&);                         \
    template std::vector<int> argmax_rows<T>(const Matrix<T>&);

SIMNL_INSTANTIATE_CLASSIFIER(float)
SIMNL_INSTANTIATE_CLASSIFIER(double)

#undef SIMNL_INSTANTIATE_CLASSIFIER

}  // namespace simnl
