#pragma once

// Straight-loop long double reference for the forward pass, deltas,
// reweighting and losses. Shares no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Real = long double;
using Vec = std::vector<Real>;
using Mat = std::vector<Vec>;

template <typename M>
Mat from(const M& m) {
    Mat out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
    for (std::size_t r = 0; r < out.size(); ++r) {
        for (std::size_t c = 0; c < out[r].size(); ++c) out[r][c] = static_cast<Real>(m(r, c));
    }
    return out;
}

inline Real dot(const Vec& a, const Vec& b) {
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec unit(Vec v) {
    const Real n = std::sqrt(dot(v, v));
    for (auto& x : v) x /= n;
    return v;
}

inline Vec add(const Vec& a, const Vec& b) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

struct Params {
    Real lambda, alpha, beta, delta_t, delta_v;
};

struct Problem {
    Mat features;                  // Q x d
    Mat t_pos, t_neg;              // C x d
    Mat v_pos, v_neg;              // CK x d
    Mat r_t_pos, r_t_neg;          // C x d
    Mat r_v_pos, r_v_neg;          // C x d, broadcast over shots
    Mat labels_pos, labels_neg;    // CK x C
    int shots = 0;
};

struct Logits {
    Mat t_pos, v_pos, t_neg, v_neg, final;
};

inline Real affinity(Real z, Real alpha, Real beta) { return alpha * std::exp(-beta * (1 - z)); }

inline Logits forward(const Problem& p, const Params& hp) {
    const std::size_t q = p.features.size();
    const std::size_t classes = p.t_pos.size();
    const std::size_t rows = p.v_pos.size();
    Logits out;
    out.t_pos.assign(q, Vec(classes, 0));
    out.v_pos.assign(q, Vec(classes, 0));
    out.t_neg.assign(q, Vec(classes, 0));
    out.v_neg.assign(q, Vec(classes, 0));
    out.final.assign(q, Vec(classes, 0));

    Mat tp(classes), tn(classes), vp(rows), vn(rows);
    for (std::size_t c = 0; c < classes; ++c) {
        tp[c] = unit(add(p.t_pos[c], p.r_t_pos[c]));
        tn[c] = unit(add(p.t_neg[c], p.r_t_neg[c]));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t c = r / static_cast<std::size_t>(p.shots);
        vp[r] = unit(add(p.v_pos[r], p.r_v_pos[c]));
        vn[r] = unit(add(p.v_neg[r], p.r_v_neg[c]));
    }
    for (std::size_t i = 0; i < q; ++i) {
        const Vec& f = p.features[i];
        for (std::size_t c = 0; c < classes; ++c) {
            out.t_pos[i][c] = dot(f, tp[c]);
            out.t_neg[i][c] = hp.delta_t * (1 - dot(f, tn[c]));
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const Real ap = affinity(dot(f, vp[r]), hp.alpha, hp.beta);
            const Real an = affinity(1 - dot(f, vn[r]), hp.alpha, hp.beta);
            for (std::size_t c = 0; c < classes; ++c) {
                out.v_pos[i][c] += ap * p.labels_pos[r][c];
                out.v_neg[i][c] += hp.delta_v * an * p.labels_neg[r][c];
            }
        }
        for (std::size_t c = 0; c < classes; ++c) {
            out.final[i][c] = hp.lambda * (out.t_pos[i][c] + out.v_pos[i][c]) +
                              (1 - hp.lambda) * (out.t_neg[i][c] + out.v_neg[i][c]);
        }
    }
    return out;
}

inline Real mean(const Mat& m) {
    Real s = 0;
    std::size_t n = 0;
    for (const auto& row : m) {
        for (Real x : row) {
            s += x;
            ++n;
        }
    }
    return s / static_cast<Real>(n);
}

/// delta_T and delta_V computed from unit-delta negative logits.
inline std::pair<Real, Real> deltas(Problem p, Params hp) {
    hp.delta_t = 1;
    hp.delta_v = 1;
    const Logits l = forward(p, hp);
    return {mean(l.t_pos) / mean(l.t_neg), mean(l.v_pos) / mean(l.v_neg)};
}

/// Average cosine of each row to the other rows of its group.
inline Vec mean_similarity(const Mat& group) {
    const std::size_t k = group.size();
    Mat u(k);
    for (std::size_t i = 0; i < k; ++i) u[i] = unit(group[i]);
    Vec out(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (i != j) out[i] += dot(u[i], u[j]);
        }
        out[i] /= static_cast<Real>(k - 1);
    }
    return out;
}

/// K * softmax(d / tau), no max shift.
inline Vec confidences(const Vec& d, Real tau) {
    Vec e(d.size());
    Real z = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        e[i] = std::exp(d[i] / tau);
        z += e[i];
    }
    for (auto& x : e) x = static_cast<Real>(d.size()) * x / z;
    return e;
}

inline Real cross_entropy(const Mat& logits, const std::vector<int>& labels) {
    Real total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        Real z = 0;
        for (Real x : logits[i]) z += std::exp(x);
        total += std::log(z) - logits[i][static_cast<std::size_t>(labels[i])];
    }
    return total / static_cast<Real>(logits.size());
}

}  // namespace oracle
