#include <benchmark/benchmark.h>

#include "dcmab/auction_log.hpp"
#include "dcmab/simulator.hpp"

namespace {

const dcmab::ExperimentData& market() {
  static const dcmab::ExperimentData data = [] {
    dcmab::GeneratorConfig g;
    g.requests = 5000;
    return dcmab::prepare_experiment(dcmab::generate_synthetic_log(g, 1), dcmab::generate_synthetic_log(g, 2), 3, 3,
                                     {});
  }();
  return data;
}

void BM_ManualEpisode(benchmark::State& state) {
  const auto& d = market();
  dcmab::AgentConfig manual;
  manual.algorithm = dcmab::Algorithm::kManual;
  dcmab::AgentTeam team(d.model.layout, std::vector<dcmab::AgentConfig>(3, manual), 1);
  dcmab::EpisodeConfig c;
  c.worker_count = static_cast<std::size_t>(state.range(0));
  dcmab::EpisodeRunner runner(c.worker_count);
  for (auto _ : state) {
    auto r = runner.run(d.train, d.model, team, c, {});
    benchmark::DoNotOptimize(r.total_revenue);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.train.requests.size()));
}
BENCHMARK(BM_ManualEpisode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_TrainingEpisode(benchmark::State& state) {
  const auto& d = market();
  dcmab::AgentConfig agent;
  agent.minibatch_size = 8;
  dcmab::AgentTeam team(d.model.layout, std::vector<dcmab::AgentConfig>(3, agent), 1);
  dcmab::EpisodeConfig c;
  dcmab::EpisodeRunner runner(1);
  dcmab::EpisodeOptions opt;
  opt.explore = true;
  opt.learn = true;
  for (auto _ : state) {
    auto r = runner.run(d.train, d.model, team, c, opt);
    benchmark::DoNotOptimize(r.total_revenue);
  }
}
BENCHMARK(BM_TrainingEpisode)->Unit(benchmark::kMillisecond);

}  // namespace
