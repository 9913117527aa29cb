#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dcmab/market.hpp"

namespace {

dcmab::AuctionRequest random_request(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.01, 2.0);
  dcmab::AuctionRequest r;
  for (std::size_t k = 0; k < n; ++k) {
    dcmab::CandidateAd c;
    c.merchant_id = static_cast<dcmab::MerchantId>(k);
    c.base_bid = u(rng);
    c.final_bid = c.base_bid;
    c.pctr = u(rng) / 20.0;
    c.pcvr = u(rng) / 20.0;
    c.ppb = 30.0 * u(rng);
    r.candidates.push_back(c);
  }
  return r;
}

void BM_SettleAuction(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::vector<dcmab::AuctionRequest> requests;
  for (int k = 0; k < 256; ++k) requests.push_back(random_request(rng, n));
  auto ledger = dcmab::BudgetLedger::unlimited(n);
  std::size_t k = 0;
  for (auto _ : state) {
    auto outcome = dcmab::settle_auction(requests[k++ % requests.size()], ledger, {});
    benchmark::DoNotOptimize(outcome);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SettleAuction)->Arg(5)->Arg(20)->Arg(100);

void BM_RankByEcpm(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto request = random_request(rng, static_cast<std::size_t>(state.range(0)));
  std::vector<dcmab::CandidateAd> work;
  for (auto _ : state) {
    work = request.candidates;
    dcmab::rank_by_ecpm_in_place(work);
    benchmark::DoNotOptimize(work.data());
  }
}
BENCHMARK(BM_RankByEcpm)->Arg(20)->Arg(100);

}  // namespace
