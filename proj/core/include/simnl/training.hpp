#pragma once

#include "simnl/caches.hpp"
#include "simnl/classifier.hpp"
#include "simnl/embedding_store.hpp"
#include "simnl/matrix.hpp"
#include "simnl/reweighting.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace simnl {

/// ensemble_ce: cross-entropy on s_final.
/// negative_ce: -log(1 - softmax(-(S_T- + S_V-))[y]), the negative
/// classifier's risk; only the negative residuals receive gradient.
enum class LossMode { ensemble_ce, negative_ce };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

/// Mean over rows of -log softmax(logits)[y], via max-shifted log-sum-exp.
template <typename Scalar>
Scalar ce_loss(const Matrix<Scalar>& logits, std::span<const int> labels);

inline constexpr double kNegativeProbabilityClamp = 1.0 - 1e-12;

/// Mean over rows of -log(1 - softmax(neg_logits)[y]). The probability at y is
/// clamped to kNegativeProbabilityClamp before the log.
template <typename Scalar>
Scalar negative_ce_loss(const Matrix<Scalar>& neg_logits, std::span<const int> labels);

template <typename Scalar>
struct LossAndGradients {
    Scalar loss{};
    BasicResidualSet<Scalar> grads;  // same shapes as the residuals; disabled blocks are zero
};

/// Loss of the selected objective on a batch and its exact gradient with
/// respect to every enabled residual. Deltas are treated as constants.
template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(const Matrix<Scalar>& features,
                                            std::span<const int> labels,
                                            const BasicCacheSet<Scalar>& cache,
                                            const BasicResidualSet<Scalar>& res,
                                            const BasicWeightedLabels<Scalar>& weighted,
                                            const HyperParams& hp, LossMode mode);

/// Loss only, evaluated through forward_final.
template <typename Scalar>
Scalar batch_loss(const Matrix<Scalar>& features, std::span<const int> labels,
                  const BasicCacheSet<Scalar>& cache, const BasicResidualSet<Scalar>& res,
                  const BasicWeightedLabels<Scalar>& weighted, const HyperParams& hp,
                  LossMode mode);

// --- optimizer --------------------------------------------------------------

/// AdamW state. The positive group is {R_T+, R_V+}, the negative group {R_T-, R_V-}.
template <typename Scalar>
struct BasicOptimizerState {
    BasicResidualSet<Scalar> first_moment;
    BasicResidualSet<Scalar> second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;

    static BasicOptimizerState for_params(const BasicResidualSet<Scalar>& params,
                                          double weight_decay) {
        BasicOptimizerState state;
        const Index rows = params.t_pos.rows();
        const Index cols = params.t_pos.cols();
        state.first_moment = BasicResidualSet<Scalar>::zeros(rows, cols, params.enabled);
        state.second_moment = BasicResidualSet<Scalar>::zeros(rows, cols, params.enabled);
        state.weight_decay = weight_decay;
        return state;
    }
};

using OptimizerState = BasicOptimizerState<float>;

struct GroupRates {
    double positive = 0.0;
    double negative = 0.0;
};

/// One decoupled-weight-decay Adam step on every enabled block:
/// p -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * p. Disabled blocks are untouched.
template <typename Scalar>
void adamw_step(BasicOptimizerState<Scalar>& state, BasicResidualSet<Scalar>& params,
                const BasicResidualSet<Scalar>& grads, GroupRates rates);

/// 0.5 * lr_max * (1 + cos(pi * step / total_steps)), floored at 0.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max);

// --- training loop ----------------------------------------------------------

struct TrainTrace {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_lr_pos;
    std::vector<double> epoch_lr_neg;
    std::uint64_t seed = 0;
    double wall_time_seconds = 0.0;
};

struct TrainResult {
    ResidualSet residuals;
    TrainTrace trace;
};

/// Trains the residuals enabled by `variant` on the (possibly noisy) support
/// labels. `hp` must carry calibrated deltas. Mini-batches of
/// min(batch_size, CK) rows over a per-epoch seeded shuffle; the cosine
/// schedule runs per optimizer step over epochs * batches_per_epoch steps.
TrainResult train(const SupportQuerySplit& split, const CacheSet& cache,
                  const WeightedLabels& weighted, const HyperParams& hp, Variant variant,
                  LossMode mode = LossMode::ensemble_ce);

struct EvalMetrics {
    double top1 = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::int64_t> per_class_count;
    double mean_ce_loss = 0.0;
    std::int64_t correct = 0;
    std::int64_t total = 0;
};

/// Top-1 accuracy (predict's tie rule), per-class accuracy and mean CE on s_final.
EvalMetrics evaluate(const EmbeddingSet& query, const CacheSet& cache, const ResidualSet& res,
                     const WeightedLabels& weighted, const HyperParams& hp);

/// Top-1 of an arbitrary prediction vector against labeled queries.
EvalMetrics score_predictions(const EmbeddingSet& query, std::span<const int> predictions);

}  // namespace simnl
