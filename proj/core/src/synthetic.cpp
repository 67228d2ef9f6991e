#include "simnl/embedding_store.hpp"

#include "simnl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace simnl {

namespace {

RowVector<double> gaussian_vector(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    RowVector<double> v(dim);
    for (int j = 0; j < dim; ++j) v(j) = normal(rng);
    return v;
}

RowVector<double> unit(const RowVector<double>& v) {
    const double norm = v.norm();
    if (norm == 0.0) throw DataError("cannot normalize a zero vector");
    return v / norm;
}

std::vector<std::string> default_class_names(int num_classes) {
    std::vector<std::string> names;
    names.reserve(num_classes);
    for (int c = 0; c < num_classes; ++c) names.push_back("class_" + std::to_string(c));
    return names;
}

// Uniform random permutation of [0, n) without fixed points (rejection sampling).
std::vector<int> random_derangement(int n, std::mt19937_64& rng) {
    std::vector<int> perm(n);
    for (;;) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        bool fixed = false;
        for (int i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
        if (!fixed) return perm;
    }
}

}  // namespace

SyntheticDataset synth_generate(const SyntheticParams& params) {
    const int C = params.num_classes;
    const int d = params.dim;
    const int K = params.shots;
    const int Q = params.queries_per_class;
    if (C < 2) throw ArgumentError("synth_generate: need at least 2 classes");
    if (d < 2) throw ArgumentError("synth_generate: need dim >= 2");
    if (K < 1) throw ArgumentError("synth_generate: need shots >= 1");
    if (Q < 1) throw ArgumentError("synth_generate: need queries_per_class >= 1");
    if (!(params.spread >= 0.0) || !std::isfinite(params.spread)) {
        throw ArgumentError("synth_generate: spread must be a finite nonnegative number");
    }

    std::mt19937_64 rng(params.seed);
    std::vector<RowVector<double>> prototypes;
    prototypes.reserve(C);
    for (int c = 0; c < C; ++c) prototypes.push_back(unit(gaussian_vector(rng, d)));

    auto draw = [&](int count) {
        EmbeddingSet set;
        set.rows.resize(static_cast<Index>(C) * count, d);
        std::vector<std::uint32_t> labels;
        labels.reserve(static_cast<std::size_t>(C) * count);
        for (int c = 0; c < C; ++c) {
            for (int i = 0; i < count; ++i) {
                const Index row = static_cast<Index>(c) * count + i;
                const RowVector<double> noise = gaussian_vector(rng, d);
                if (params.spread == 0.0) {
                    set.rows.row(row) = prototypes[c].cast<float>();
                } else {
                    set.rows.row(row) = unit(prototypes[c] + params.spread * noise).cast<float>();
                }
                labels.push_back(static_cast<std::uint32_t>(c));
            }
        }
        set.labels = std::move(labels);
        set.num_classes = C;
        set.kind = FeatureKind::image;
        set.class_names = default_class_names(C);
        return set;
    };

    SyntheticDataset out;
    out.split.support = draw(K);
    out.split.query = draw(Q);
    out.split.shots = K;

    RowVector<double> total = RowVector<double>::Zero(d);
    for (const auto& p : prototypes) total += p;

    out.text_pos.rows.resize(C, d);
    out.text_neg.rows.resize(C, d);
    for (int c = 0; c < C; ++c) {
        out.text_pos.rows.row(c) = prototypes[c].cast<float>();
        out.text_neg.rows.row(c) = unit((total - prototypes[c]) / double(C - 1)).cast<float>();
    }
    for (EmbeddingSet* text : {&out.text_pos, &out.text_neg}) {
        text->num_classes = C;
        text->kind = FeatureKind::text;
        text->class_names = default_class_names(C);
    }
    return out;
}

int flip_count(double fraction, int shots) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ArgumentError("flip fraction must lie in [0, 1]");
    }
    return static_cast<int>(std::floor(fraction * shots + 0.5));
}

void check_split(const SupportQuerySplit& split) {
    const auto& s = split.support;
    const auto& q = split.query;
    if (!s.labels) throw ArgumentError("support set has no labels");
    if (split.shots < 1) throw ArgumentError("split shots must be >= 1");
    if (s.num_classes < 2) throw ArgumentError("support needs at least 2 classes");
    if (q.size() > 0 && (q.dim() != s.dim() || q.num_classes != s.num_classes)) {
        throw ArgumentError("support and query disagree on dim or class count");
    }
    std::vector<int> counts(s.num_classes, 0);
    for (std::uint32_t label : *s.labels) {
        if (label >= static_cast<std::uint32_t>(s.num_classes)) {
            throw ArgumentError("support label " + std::to_string(label) + " out of range");
        }
        ++counts[label];
    }
    for (int c = 0; c < s.num_classes; ++c) {
        if (counts[c] != split.shots) {
            throw ArgumentError("class " + std::to_string(c) + " has " +
                                std::to_string(counts[c]) + " support rows, expected " +
                                std::to_string(split.shots));
        }
    }
}

SupportQuerySplit flip_labels(const SupportQuerySplit& split, double fraction,
                              std::uint64_t seed) {
    const int n = flip_count(fraction, split.shots);
    check_split(split);
    SupportQuerySplit out = split;
    if (n == 0) return out;

    const int C = split.support.num_classes;
    const auto& labels = *split.support.labels;
    std::mt19937_64 rng(seed);

    // chosen[c] = support rows of class c picked for relabeling, in draw order.
    std::vector<std::vector<std::size_t>> chosen(C);
    for (int c = 0; c < C; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == static_cast<std::uint32_t>(c)) rows.push_back(i);
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(n);
        chosen[c] = std::move(rows);
    }

    auto& new_labels = *out.support.labels;
    for (int slot = 0; slot < n; ++slot) {
        const auto target = random_derangement(C, rng);
        for (int c = 0; c < C; ++c) {
            new_labels[chosen[c][slot]] = static_cast<std::uint32_t>(target[c]);
        }
    }
    return out;
}

}  // namespace simnl
