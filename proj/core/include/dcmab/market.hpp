#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dcmab {

using MerchantId = std::uint32_t;
using ConsumerId = std::uint32_t;
using RequestId = std::uint64_t;

/// Absolute tolerance for every currency comparison.
inline constexpr double kCurrencyTolerance = 1e-9;

struct MerchantProfile {
  MerchantId merchant_id = 0;
  double base_bid = 0.0;  // manually set bid per click
  double ppb = 0.0;       // pay-per-buy product price
  double budget = 0.0;
  double budget_remaining = 0.0;
  std::size_t cluster_id = 0;
};

/// One merchant's entry in one auction.
struct CandidateAd {
  MerchantId merchant_id = 0;
  std::size_t cluster_id = 0;  // merchant cluster, filled in by the simulator
  double base_bid = 0.0;
  double pctr = 0.0;
  double pcvr = 0.0;
  double pcvr_avg = 1.0;  // historical average pCVR of this merchant
  double ppb = 0.0;
  double final_bid = 0.0;  // bid after adjustment

  [[nodiscard]] double bratio() const { return pcvr / pcvr_avg; }
  [[nodiscard]] double ecpm() const { return final_bid * pctr; }
};

struct AuctionRequest {
  RequestId request_id = 0;
  ConsumerId consumer_id = 0;
  std::size_t consumer_cluster_id = 0;
  std::uint32_t timestamp = 0;  // seconds within the episode
  std::vector<CandidateAd> candidates;
};

struct WinnerRecord {
  MerchantId merchant_id = 0;
  std::size_t cluster_id = 0;
  std::size_t slot = 0;
  double final_bid = 0.0;
  double price_per_click = 0.0;
  double expected_cost = 0.0;
  double expected_revenue = 0.0;
  double expected_click = 0.0;  // equals pctr
};

struct AuctionOutcome {
  std::vector<WinnerRecord> winners;  // descending eCPM
  std::size_t slots = 3;
};

struct AuctionConfig {
  std::size_t slots = 3;
  double reserve_price = 0.0;  // per-click price of a winner with no successor
};

/// Serialized budget book-keeping for every merchant in a market.
///
/// Spent plus remaining always equals the initial budget. A click whose
/// expected cost crosses zero is still settled in full; the excess is tracked
/// as overspend and the merchant is treated as exhausted afterwards.
class BudgetLedger {
 public:
  BudgetLedger() = default;
  explicit BudgetLedger(std::vector<double> budgets);

  static BudgetLedger unlimited(std::size_t merchant_count);

  [[nodiscard]] std::size_t size() const { return budget_.size(); }
  [[nodiscard]] bool is_active(MerchantId merchant) const;
  [[nodiscard]] double budget(MerchantId merchant) const { return budget_.at(merchant); }
  [[nodiscard]] double remaining(MerchantId merchant) const { return remaining_.at(merchant); }
  [[nodiscard]] double spent(MerchantId merchant) const { return spent_.at(merchant); }
  [[nodiscard]] double overspend(MerchantId merchant) const { return overspend_.at(merchant); }
  [[nodiscard]] bool is_unlimited() const { return unlimited_; }

  /// Charges an expected cost. Returns the amount that was actually deducted
  /// from the remaining budget (the remainder, if any, is overspend).
  double charge(MerchantId merchant, double cost);

 private:
  std::vector<double> budget_;
  std::vector<double> remaining_;
  std::vector<double> spent_;
  std::vector<double> overspend_;
  bool unlimited_ = false;
};

/// Sorts by eCPM = final_bid * pctr descending, ties by ascending merchant id.
[[nodiscard]] std::vector<CandidateAd> rank_by_ecpm(std::span<const CandidateAd> candidates);
void rank_by_ecpm_in_place(std::vector<CandidateAd>& candidates);

/// GSP per-click price of the winner at `slot_index` in an eCPM-ranked list.
[[nodiscard]] double gsp_price(std::span<const CandidateAd> ranked, std::size_t slot_index,
                               double reserve_price = 0.0);

/// Settles an already budget-filtered and ranked candidate list: prices the
/// top `config.slots`, charges the ledger and returns the winners.
[[nodiscard]] AuctionOutcome settle_ranked(std::span<const CandidateAd> ranked, BudgetLedger& ledger,
                                           const AuctionConfig& config);

/// Full auction: drops exhausted or unpriceable candidates, ranks and settles.
[[nodiscard]] AuctionOutcome settle_auction(const AuctionRequest& request, BudgetLedger& ledger,
                                            const AuctionConfig& config);

/// True when the candidate may enter ranking (active budget, positive pctr,
/// bid at or above the reserve price).
[[nodiscard]] bool is_eligible(const CandidateAd& candidate, const BudgetLedger& ledger,
                               const AuctionConfig& config);

}  // namespace dcmab
