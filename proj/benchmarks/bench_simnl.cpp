#include "simnl/caches.hpp"
#include "simnl/classifier.hpp"
#include "simnl/reweighting.hpp"
#include "simnl/training.hpp"

#include <benchmark/benchmark.h>

namespace {

struct Setup {
    simnl::SyntheticDataset data;
    simnl::CacheSet cache;
    simnl::WeightedLabels weighted;
    simnl::HyperParams hp;
    simnl::ResidualSet res;
    std::vector<int> labels;

    explicit Setup(int classes, int dim = 64, int shots = 16) {
        data = simnl::synth_generate({classes, dim, shots, 50, 0.4, 1});
        cache = simnl::build_caches(data.split, data.text_pos, data.text_neg, 2);
        weighted = simnl::reweight_caches(cache, 1.0, true);
        const auto d = simnl::calibrate_deltas<float>(data.split.support.rows, cache, weighted, hp);
        hp.delta_t = d.delta_t;
        hp.delta_v = d.delta_v;
        res = simnl::ResidualSet::zeros(classes, dim);
        for (auto l : *data.split.support.labels) labels.push_back(static_cast<int>(l));
    }
};

void BM_ForwardFinal(benchmark::State& state) {
    const Setup s(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto b = simnl::forward_final(s.data.split.query.rows, s.cache, s.res, s.weighted, s.hp);
        benchmark::DoNotOptimize(b.s_final.data());
    }
    state.SetItemsProcessed(state.iterations() * s.data.split.query.size());
}
BENCHMARK(BM_ForwardFinal)->Arg(10)->Arg(50)->Arg(100);

void BM_LossAndGradients(benchmark::State& state) {
    const Setup s(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto g = simnl::loss_and_gradients<float>(s.data.split.support.rows, s.labels, s.cache, s.res,
                                                  s.weighted, s.hp, simnl::LossMode::ensemble_ce);
        benchmark::DoNotOptimize(g.loss);
    }
}
BENCHMARK(BM_LossAndGradients)->Arg(10)->Arg(50);

void BM_Reweighting(benchmark::State& state) {
    const Setup s(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto w = simnl::reweight_caches(s.cache, 1.0, true);
        benchmark::DoNotOptimize(w.pos.data());
    }
}
BENCHMARK(BM_Reweighting)->Arg(10)->Arg(100);

}  // namespace
BENCHMARK_MAIN();
