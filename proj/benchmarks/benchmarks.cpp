#include <benchmark/benchmark.h>

#include "cex/localiser.hpp"
#include "cex/model.hpp"
#include "cex/probe.hpp"
#include "cex/rng.hpp"

namespace {

cex::InputTensor input(std::uint64_t seed) {
    cex::Rng rng(seed);
    cex::InputTensor t;
    t.height = 32;
    t.width = 32;
    t.values.resize(3 * 32 * 32);
    for (auto& v : t.values) v = rng.uniform();
    return t;
}

cex::ConceptProbe probe(const cex::ClassifierModel& model, const std::string& layer) {
    cex::Rng rng(3);
    cex::ConceptProbe p;
    p.concept_name = "streaks";
    p.layer = layer;
    p.direction.resize(cex::shape_product(model.layer_shape(layer)));
    for (auto& v : p.direction) v = rng.normal();
    return p;
}

void BM_Forward(benchmark::State& state) {
    const cex::ReferenceNet net(cex::reference_net::init_weights(1));
    const auto x = input(2);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, "logits"));
}
BENCHMARK(BM_Forward);

void BM_GradientWrtEmbedding(benchmark::State& state) {
    const cex::ReferenceNet net(cex::reference_net::init_weights(1));
    const auto x = input(2);
    for (auto _ : state) benchmark::DoNotOptimize(net.grad_class_wrt_layer(x, cex::Label::melanoma, "embedding"));
}
BENCHMARK(BM_GradientWrtEmbedding);

void BM_Clm(benchmark::State& state) {
    const cex::ReferenceNet net(cex::reference_net::init_weights(1));
    const auto p = probe(net, "conv2");
    const auto x = input(4);
    cex::ClmConfig cfg;
    cfg.stride = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(cex::compute_clm(net, p, x, cfg));
}
BENCHMARK(BM_Clm)->Arg(4)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ProbeFit(benchmark::State& state) {
    cex::Rng rng(5);
    cex::ActivationMatrix m;
    m.rows = 300;
    m.cols = static_cast<std::size_t>(state.range(0));
    std::vector<int> y(m.rows), strata(m.rows, 0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        y[i] = static_cast<int>(i % 2);
        for (std::size_t k = 0; k < m.cols; ++k) m.values.push_back(rng.normal() + (k == 0 && y[i] ? 1.0 : 0.0));
    }
    cex::ProbeTrainingConfig cfg;
    cfg.runs = 10;
    for (auto _ : state) benchmark::DoNotOptimize(cex::fit_layer_probe(m, y, strata, cfg, 1));
}
BENCHMARK(BM_ProbeFit)->Arg(16)->Arg(2048)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
