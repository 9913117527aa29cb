#include "dcmab/market.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace dcmab {

BudgetLedger::BudgetLedger(std::vector<double> budgets)
    : budget_(std::move(budgets)),
      remaining_(budget_),
      spent_(budget_.size(), 0.0),
      overspend_(budget_.size(), 0.0) {
  for (double b : budget_) {
    if (!(b >= 0.0)) throw std::invalid_argument("budget must be non-negative");
  }
}

BudgetLedger BudgetLedger::unlimited(std::size_t merchant_count) {
  BudgetLedger ledger(std::vector<double>(merchant_count, std::numeric_limits<double>::infinity()));
  ledger.unlimited_ = true;
  return ledger;
}

bool BudgetLedger::is_active(MerchantId merchant) const {
  return merchant < remaining_.size() && remaining_[merchant] > 0.0;
}

double BudgetLedger::charge(MerchantId merchant, double cost) {
  if (cost < 0.0) throw std::invalid_argument("negative charge");
  double& rem = remaining_.at(merchant);
  const double deducted = std::min(rem, cost);
  rem -= deducted;
  if (rem < 0.0) rem = 0.0;
  spent_[merchant] += deducted;
  overspend_[merchant] += cost - deducted;
  return deducted;
}

namespace {

bool ranks_before(const CandidateAd& a, const CandidateAd& b) {
  const double ea = a.ecpm();
  const double eb = b.ecpm();
  if (ea != eb) return ea > eb;
  return a.merchant_id < b.merchant_id;
}

}  // namespace

void rank_by_ecpm_in_place(std::vector<CandidateAd>& candidates) {
  std::sort(candidates.begin(), candidates.end(), ranks_before);
}

std::vector<CandidateAd> rank_by_ecpm(std::span<const CandidateAd> candidates) {
  std::vector<CandidateAd> ranked(candidates.begin(), candidates.end());
  rank_by_ecpm_in_place(ranked);
  return ranked;
}

double gsp_price(std::span<const CandidateAd> ranked, std::size_t slot_index, double reserve_price) {
  if (slot_index >= ranked.size()) {
    throw std::out_of_range("gsp_price: slot " + std::to_string(slot_index) + " has no candidate");
  }
  const CandidateAd& winner = ranked[slot_index];
  if (!(winner.pctr > 0.0)) throw std::invalid_argument("gsp_price: winner pctr must be positive");
  if (slot_index + 1 == ranked.size()) return reserve_price;
  const CandidateAd& next = ranked[slot_index + 1];
  return next.pctr * next.final_bid / winner.pctr;
}

bool is_eligible(const CandidateAd& candidate, const BudgetLedger& ledger, const AuctionConfig& config) {
  return candidate.pctr > 0.0 && candidate.final_bid >= config.reserve_price &&
         ledger.is_active(candidate.merchant_id);
}

AuctionOutcome settle_ranked(std::span<const CandidateAd> ranked, BudgetLedger& ledger,
                             const AuctionConfig& config) {
  AuctionOutcome outcome;
  outcome.slots = config.slots;
  const std::size_t n_winners = std::min(config.slots, ranked.size());
  outcome.winners.reserve(n_winners);
  // Prices depend only on bids, so every winner is priced before any budget moves.
  for (std::size_t k = 0; k < n_winners; ++k) {
    const CandidateAd& ad = ranked[k];
    WinnerRecord w;
    w.merchant_id = ad.merchant_id;
    w.cluster_id = ad.cluster_id;
    w.slot = k;
    w.final_bid = ad.final_bid;
    w.price_per_click = gsp_price(ranked, k, config.reserve_price);
    w.expected_click = ad.pctr;
    w.expected_cost = w.price_per_click * ad.pctr;
    w.expected_revenue = ad.pctr * ad.pcvr * ad.ppb;
    outcome.winners.push_back(w);
  }
  for (const WinnerRecord& w : outcome.winners) ledger.charge(w.merchant_id, w.expected_cost);
  return outcome;
}

AuctionOutcome settle_auction(const AuctionRequest& request, BudgetLedger& ledger,
                              const AuctionConfig& config) {
  std::vector<CandidateAd> eligible;
  eligible.reserve(request.candidates.size());
  for (const CandidateAd& c : request.candidates) {
    if (is_eligible(c, ledger, config)) eligible.push_back(c);
  }
  rank_by_ecpm_in_place(eligible);
  return settle_ranked(eligible, ledger, config);
}

}  // namespace dcmab
