#include "simnl/training.hpp"

#include "simnl/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace simnl {

namespace {

template <typename Scalar>
void adamw_block(Matrix<Scalar>& param, const Matrix<Scalar>& grad, Matrix<Scalar>& m,
                 Matrix<Scalar>& v, double lr, const BasicOptimizerState<Scalar>& s,
                 double correction1, double correction2) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols() || m.rows() != param.rows() ||
        m.cols() != param.cols() || v.rows() != param.rows() || v.cols() != param.cols()) {
        throw ArgumentError("adamw: parameter, gradient and moment shapes differ");
    }
    for (Index i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        const double m_new = s.beta1 * m.data()[i] + (1.0 - s.beta1) * g;
        const double v_new = s.beta2 * v.data()[i] + (1.0 - s.beta2) * g * g;
        m.data()[i] = static_cast<Scalar>(m_new);
        v.data()[i] = static_cast<Scalar>(v_new);
        const double m_hat = m_new / correction1;
        const double v_hat = v_new / correction2;
        const double p = param.data()[i];
        param.data()[i] =
            static_cast<Scalar>(p - lr * (m_hat / (std::sqrt(v_hat) + s.epsilon)) -
                                lr * s.weight_decay * p);
    }
}

MatrixF gather_rows(const MatrixF& rows, std::span<const Index> index) {
    MatrixF out(static_cast<Index>(index.size()), rows.cols());
    for (std::size_t i = 0; i < index.size(); ++i) out.row(static_cast<Index>(i)) = rows.row(index[i]);
    return out;
}

}  // namespace

template <typename Scalar>
void adamw_step(BasicOptimizerState<Scalar>& state, BasicResidualSet<Scalar>& params,
                const BasicResidualSet<Scalar>& grads, GroupRates rates) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const auto& on = params.enabled;
    if (on.t_pos) {
        adamw_block(params.t_pos, grads.t_pos, state.first_moment.t_pos,
                    state.second_moment.t_pos, rates.positive, state, c1, c2);
    }
    if (on.v_pos) {
        adamw_block(params.v_pos, grads.v_pos, state.first_moment.v_pos,
                    state.second_moment.v_pos, rates.positive, state, c1, c2);
    }
    if (on.t_neg) {
        adamw_block(params.t_neg, grads.t_neg, state.first_moment.t_neg,
                    state.second_moment.t_neg, rates.negative, state, c1, c2);
    }
    if (on.v_neg) {
        adamw_block(params.v_neg, grads.v_neg, state.first_moment.v_neg,
                    state.second_moment.v_neg, rates.negative, state, c1, c2);
    }
}

template void adamw_step<float>(BasicOptimizerState<float>&, BasicResidualSet<float>&,
                                const BasicResidualSet<float>&, GroupRates);
template void adamw_step<double>(BasicOptimizerState<double>&, BasicResidualSet<double>&,
                                 const BasicResidualSet<double>&, GroupRates);

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_max) {
    if (total_steps <= 0) throw ArgumentError("cosine_lr: total_steps must be positive");
    if (step < 0 || step > total_steps) {
        throw ArgumentError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
    }
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
    return std::max(0.0, 0.5 * lr_max * (1.0 + std::cos(phase)));
}

TrainResult train(const SupportQuerySplit& split, const CacheSet& cache,
                  const WeightedLabels& weighted, const HyperParams& hp, Variant variant,
                  LossMode mode) {
    const auto start = std::chrono::steady_clock::now();
    check_split(split);
    if (hp.epochs < 0) throw ArgumentError("epochs must be >= 0");
    if (hp.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (!hp.delta_t || !hp.delta_v) throw StateError("train: deltas must be calibrated first");

    TrainResult result;
    result.residuals = ResidualSet::zeros(cache.num_classes, cache.dim(), mask_for(variant));
    result.trace.seed = hp.seed;

    const auto& support = split.support;
    std::vector<int> all_labels(support.labels->begin(), support.labels->end());
    const Index n = support.size();
    const Index batch = std::min<Index>(hp.batch_size, n);
    const Index batches_per_epoch = (n + batch - 1) / batch;
    const std::int64_t total_steps = static_cast<std::int64_t>(hp.epochs) * batches_per_epoch;

    auto state = OptimizerState::for_params(result.residuals, hp.weight_decay);
    std::mt19937_64 rng(hp.seed);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::int64_t step = 0;

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Index{0});
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (Index b = 0; b < batches_per_epoch; ++b) {
            const Index first = b * batch;
            const Index count = std::min(batch, n - first);
            const std::span<const Index> idx(order.data() + first, static_cast<std::size_t>(count));
            const MatrixF features = gather_rows(support.rows, idx);
            std::vector<int> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = all_labels[static_cast<std::size_t>(idx[i])];

            const auto lg = loss_and_gradients<float>(features, labels, cache, result.residuals,
                                                      weighted, hp, mode);
            if (!std::isfinite(lg.loss)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(step));
            }
            const GroupRates rates{cosine_lr(step, total_steps, hp.lr_pos),
                                   cosine_lr(step, total_steps, hp.lr_neg)};
            if (b == 0) {
                result.trace.epoch_lr_pos.push_back(rates.positive);
                result.trace.epoch_lr_neg.push_back(rates.negative);
            }
            adamw_step(state, result.residuals, lg.grads, rates);
            loss_sum += static_cast<double>(lg.loss) * static_cast<double>(count);
            ++step;
        }
        result.trace.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }
    result.trace.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

EvalMetrics score_predictions(const EmbeddingSet& query, std::span<const int> predictions) {
    if (!query.labels) throw ArgumentError("evaluation needs a labeled query set");
    if (static_cast<Index>(predictions.size()) != query.size()) {
        throw ArgumentError("prediction count does not match query rows");
    }
    EvalMetrics m;
    const int C = query.num_classes;
    std::vector<std::int64_t> hits(C, 0);
    m.per_class_count.assign(C, 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto y = static_cast<int>((*query.labels)[i]);
        ++m.per_class_count[y];
        if (predictions[i] == y) {
            ++hits[y];
            ++m.correct;
        }
    }
    m.total = static_cast<std::int64_t>(predictions.size());
    m.top1 = m.total > 0 ? static_cast<double>(m.correct) / static_cast<double>(m.total) : 0.0;
    m.per_class_accuracy.resize(C);
    for (int c = 0; c < C; ++c) {
        m.per_class_accuracy[c] = m.per_class_count[c] > 0
                                      ? static_cast<double>(hits[c]) / static_cast<double>(m.per_class_count[c])
                                      : 0.0;
    }
    return m;
}

EvalMetrics evaluate(const EmbeddingSet& query, const CacheSet& cache, const ResidualSet& res,
                     const WeightedLabels& weighted, const HyperParams& hp) {
    if (!query.labels) throw ArgumentError("evaluation needs a labeled query set");
    const auto bundle = forward_final(query.rows, cache, res, weighted, hp);
    const auto predictions = predict(bundle);
    EvalMetrics m = score_predictions(query, predictions);
    const std::vector<int> labels(query.labels->begin(), query.labels->end());
    m.mean_ce_loss = ce_loss<double>(bundle.s_final.cast<double>(), labels);
    return m;
}

}  // namespace simnl
