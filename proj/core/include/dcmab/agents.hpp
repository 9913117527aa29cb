#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dcmab/neural.hpp"
#include "dcmab/state_space.hpp"

namespace dcmab {

enum class Algorithm { kManual, kBandit, kA2C, kDdpg, kDcmab };

[[nodiscard]] std::string to_string(Algorithm a);
[[nodiscard]] Algorithm algorithm_from_string(const std::string& name);

enum class NoiseMode { kGaussian, kOrnsteinUhlenbeck };

struct NoiseConfig {
  NoiseMode mode = NoiseMode::kGaussian;
  double sigma = 0.2;
  double theta = 0.15;  // OU mean reversion
  double dt = 1.0;
  double decay = 0.995;  // sigma multiplier applied at every episode end
};

struct AgentConfig {
  Algorithm algorithm = Algorithm::kDcmab;
  RewardMode reward_mode = RewardMode::kSelfInterest;
  double gamma = 1.0;
  std::size_t minibatch_size = 32;
  std::size_t replay_capacity = 100000;
  NoiseConfig noise{};
  double range = 0.9;
  double actor_learning_rate = 1e-4;
  double critic_learning_rate = 1e-3;
  double tau = 0.01;
  std::size_t actor_hidden = 300;
  std::size_t critic_hidden = 100;
  /// Reproduces the printed critic loss (y - gamma * Q)^2 instead of (y - Q)^2.
  bool discounted_q_loss = false;
  std::size_t bandit_candidates = 32;
  double bandit_epsilon = 0.1;
  double a2c_sigma = 0.2;
  std::size_t updates_per_step = 1;
  /// Rewards are divided by this before entering any loss.
  double reward_scale = 1.0;

  void validate() const;
};

/// alpha = clip(a_ij * bratio, -range, range).
[[nodiscard]] double adjustment_ratio(double a_ij, double bratio, double range);
/// base_bid * (1 + alpha).
[[nodiscard]] double compute_bid_adjustment(double a_ij, double bratio, double base_bid, double range);

/// y = r + gamma * q_next, without the bootstrap term at terminal steps.
[[nodiscard]] double td_target(double reward, double gamma, double q_next, bool terminal);
/// r + gamma * V(s') - V(s), without V(s') at terminal steps.
[[nodiscard]] double a2c_advantage(double reward, double gamma, double value, double next_value, bool terminal);

class ExplorationNoise {
 public:
  ExplorationNoise() = default;
  ExplorationNoise(NoiseConfig config, std::size_t dim, std::uint64_t seed);

  /// Adds noise and re-clips every entry to [-1, 1].
  void perturb(std::span<double> actions);
  void reset();
  void end_episode();

  [[nodiscard]] double sigma() const { return sigma_; }
  [[nodiscard]] const NoiseConfig& config() const { return config_; }
  [[nodiscard]] std::span<const double> ou_state() const { return state_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  NoiseConfig config_{};
  double sigma_ = 0.0;
  std::vector<double> state_;
  std::mt19937_64 rng_;
};

/// Capacity-bounded ring buffer with a uniform sampler. Index 0 is the oldest.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 100000);

  void push(TransitionTuple tuple);
  [[nodiscard]] std::size_t size() const { return buffer_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] const TransitionTuple& at(std::size_t index) const { return buffer_.at(index); }
  /// `count` distinct indices, uniformly; requires size() >= count.
  [[nodiscard]] std::vector<std::size_t> sample_indices(std::size_t count, std::mt19937_64& rng) const;
  void clear() { buffer_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<TransitionTuple> buffer_;
};

/// Builds actor inputs [g, x_j] for every state column and every consumer
/// cluster. Column b * L + j holds the input of state b, cluster j.
[[nodiscard]] Eigen::MatrixXd actor_inputs(const StateLayout& layout, const Eigen::MatrixXd& states);
[[nodiscard]] Eigen::MatrixXd states_to_matrix(std::span<const double> state);

/// Actor: [g, x_j] -> hidden (relu) -> hidden (relu) -> 1 (tanh).
[[nodiscard]] std::vector<LayerSpec> actor_specs(const StateLayout& layout, std::size_t hidden);

struct CriticCache {
  ForwardCache encoder;
  ForwardCache head;
};

struct CriticGradients {
  MlpGradients encoder;
  MlpGradients head;
  Eigen::MatrixXd side_gradient;  // side_dim x batch
};

/// Critic with the state entering the first layer and the side inputs
/// (actions, distribution) joining at the first hidden layer:
///   h1 = relu(W1 s + b1); h2 = relu(W2 [h1; side] + b2); q = W3 h2 + b3.
class CriticNetwork {
 public:
  CriticNetwork() = default;
  CriticNetwork(std::size_t state_dim, std::size_t side_dim, std::size_t hidden, std::mt19937_64& rng);

  [[nodiscard]] Eigen::RowVectorXd forward(const Eigen::MatrixXd& states, const Eigen::MatrixXd& side,
                                           CriticCache* cache = nullptr) const;
  [[nodiscard]] CriticGradients backward(const CriticCache& cache, const Eigen::RowVectorXd& output_gradient) const;

  [[nodiscard]] std::size_t side_dim() const { return side_dim_; }
  [[nodiscard]] Mlp& encoder() { return encoder_; }
  [[nodiscard]] Mlp& head() { return head_; }
  [[nodiscard]] const Mlp& encoder() const { return encoder_; }
  [[nodiscard]] const Mlp& head() const { return head_; }

 private:
  Mlp encoder_;
  Mlp head_;
  std::size_t side_dim_ = 0;
};

void soft_update(CriticNetwork& target, const CriticNetwork& source, double tau);

/// Joint policy inputs available to an agent when it acts.
struct PolicyContext {
  std::span<const double> state;          // normalized [g, x^q]
  std::span<const double> joint_actions;  // last executed joint actions (N * L)
  std::span<const double> distribution;   // last interval's d (N * L)
};

struct UpdateStats {
  bool updated = false;
  double critic_loss = 0.0;
  double actor_gradient_norm = 0.0;
};

/// Target-policy actions of agent `o` for a batch of states (L x batch).
using TargetPolicyFn = std::function<Eigen::MatrixXd(std::size_t agent, const Eigen::MatrixXd& states)>;

struct TrainingView {
  const ReplayMemory& memory;
  const TransitionTuple& latest;
  TargetPolicyFn target_actions;
};

/// Minibatch gathered for one agent.
struct Minibatch {
  Eigen::MatrixXd states;             // state_dim x S
  Eigen::MatrixXd next_states;        // state_dim x S
  Eigen::MatrixXd actions;            // N*L x S
  Eigen::MatrixXd distribution;       // N*L x S
  Eigen::MatrixXd next_distribution;  // N*L x S
  Eigen::VectorXd rewards;            // scaled reward of the learning agent
  std::vector<bool> terminal;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
};

[[nodiscard]] Minibatch gather_minibatch(const ReplayMemory& memory, std::span<const std::size_t> indices,
                                         std::size_t agent, double reward_scale);
[[nodiscard]] Minibatch make_minibatch(std::span<const TransitionTuple> tuples, std::size_t agent,
                                       double reward_scale);

/// One merchant-cluster agent.
class BiddingAgent {
 public:
  BiddingAgent(std::size_t index, StateLayout layout, AgentConfig config);
  virtual ~BiddingAgent() = default;
  BiddingAgent(const BiddingAgent&) = default;
  BiddingAgent& operator=(const BiddingAgent&) = delete;

  [[nodiscard]] virtual std::unique_ptr<BiddingAgent> clone() const = 0;

  [[nodiscard]] Algorithm algorithm() const { return config_.algorithm; }
  [[nodiscard]] std::size_t index() const { return index_; }
  [[nodiscard]] const AgentConfig& config() const { return config_; }
  [[nodiscard]] const StateLayout& layout() const { return layout_; }

  [[nodiscard]] virtual bool learns() const { return true; }
  [[nodiscard]] virtual bool uses_replay() const { return false; }

  /// Cluster-level actions a_i^q = [a_i1, ..., a_iL], each in [-1, 1].
  [[nodiscard]] virtual std::vector<double> act(const PolicyContext& context, bool explore) = 0;
  /// Delayed-policy actions for bootstrapping; zeros for non-actor agents.
  [[nodiscard]] virtual Eigen::MatrixXd target_actions(const Eigen::MatrixXd& states) const;

  virtual void begin_episode() {}
  virtual void end_episode() {}
  virtual UpdateStats update(const TrainingView& view);

  virtual void save(const std::filesystem::path& dir) const;
  virtual void load(const std::filesystem::path& dir);

 protected:
  std::size_t index_;
  StateLayout layout_;
  AgentConfig config_;
};

/// Human-set bids: a_ij = 0 everywhere.
class ManualAgent final : public BiddingAgent {
 public:
  ManualAgent(std::size_t index, StateLayout layout, AgentConfig config);
  [[nodiscard]] std::unique_ptr<BiddingAgent> clone() const override;
  [[nodiscard]] bool learns() const override { return false; }
  [[nodiscard]] std::vector<double> act(const PolicyContext& context, bool explore) override;
};

[[nodiscard]] std::vector<double> manual_policy(const StateLayout& layout);

/// Deterministic actor-critic with replay and target networks. With a joint
/// critic (DCMAB) Q_i sees every agent's actions; otherwise (DDPG) only its own.
class DeterministicPolicyAgent final : public BiddingAgent {
 public:
  DeterministicPolicyAgent(std::size_t index, StateLayout layout, AgentConfig config, std::uint64_t seed);

  [[nodiscard]] std::unique_ptr<BiddingAgent> clone() const override;
  [[nodiscard]] bool uses_replay() const override { return true; }
  [[nodiscard]] bool joint_critic() const { return config_.algorithm == Algorithm::kDcmab; }

  [[nodiscard]] std::vector<double> act(const PolicyContext& context, bool explore) override;
  [[nodiscard]] Eigen::MatrixXd target_actions(const Eigen::MatrixXd& states) const override;
  /// Noise-free actor output for a batch of states (L x batch).
  [[nodiscard]] Eigen::MatrixXd policy_actions(const Eigen::MatrixXd& states) const;

  void begin_episode() override;
  void end_episode() override;
  UpdateStats update(const TrainingView& view) override;

  /// Minimizes (y - Q)^2 over the batch; returns the mean loss.
  double critic_update(const Minibatch& batch, const TargetPolicyFn& target_actions);
  /// Ascends sum_j dmu(g, x_j)/dtheta * dQ/da_ij; returns the gradient norm.
  double actor_update(const Minibatch& batch);
  /// The raw actor gradient (of -mean Q) without applying it.
  [[nodiscard]] MlpGradients actor_gradient(const Minibatch& batch) const;
  void update_targets();

  /// Side input [actions slice, d] the critic sees for this batch.
  [[nodiscard]] Eigen::MatrixXd critic_side(const Eigen::MatrixXd& joint_actions,
                                            const Eigen::MatrixXd& distribution) const;
  [[nodiscard]] std::size_t own_action_offset() const;

  [[nodiscard]] Mlp& actor() { return actor_; }
  [[nodiscard]] const Mlp& actor() const { return actor_; }
  [[nodiscard]] const Mlp& target_actor() const { return target_actor_; }
  [[nodiscard]] CriticNetwork& critic() { return critic_; }
  [[nodiscard]] const CriticNetwork& critic() const { return critic_; }
  [[nodiscard]] CriticNetwork& target_critic() { return target_critic_; }
  [[nodiscard]] ExplorationNoise& noise() { return noise_; }
  [[nodiscard]] const ExplorationNoise& noise() const { return noise_; }

  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

 private:
  Mlp actor_;
  Mlp target_actor_;
  CriticNetwork critic_;
  CriticNetwork target_critic_;
  AdamOptimizer actor_optimizer_;
  AdamOptimizer critic_encoder_optimizer_;
  AdamOptimizer critic_head_optimizer_;
  ExplorationNoise noise_;
  std::mt19937_64 rng_;
};

/// On-policy actor-critic without replay. The policy is the actor mean plus a
/// fixed gaussian; the critic is a state-value function V(s^q).
class A2CAgent final : public BiddingAgent {
 public:
  A2CAgent(std::size_t index, StateLayout layout, AgentConfig config, std::uint64_t seed);

  [[nodiscard]] std::unique_ptr<BiddingAgent> clone() const override;
  [[nodiscard]] std::vector<double> act(const PolicyContext& context, bool explore) override;
  [[nodiscard]] Eigen::MatrixXd target_actions(const Eigen::MatrixXd& states) const override;
  void begin_episode() override { pending_.clear(); }
  /// Consumes the oldest exploratory action, which must belong to `view.latest`.
  UpdateStats update(const TrainingView& view) override;

  [[nodiscard]] double value(std::span<const double> state) const;

  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

 private:
  Mlp actor_;
  CriticNetwork value_;
  AdamOptimizer actor_optimizer_;
  AdamOptimizer value_encoder_optimizer_;
  AdamOptimizer value_head_optimizer_;
  std::mt19937_64 rng_;
  struct Sample {
    std::vector<double> state;
    std::vector<double> raw;  // unclipped gaussian sample per consumer cluster
  };
  std::deque<Sample> pending_;  // exploratory actions not yet learned from
};

/// One-step contextual bandit: a reward estimator over (state, all agents'
/// actions, d) and an argmax over sampled candidate actions.
class BanditAgent final : public BiddingAgent {
 public:
  BanditAgent(std::size_t index, StateLayout layout, AgentConfig config, std::uint64_t seed);

  [[nodiscard]] std::unique_ptr<BiddingAgent> clone() const override;
  [[nodiscard]] bool uses_replay() const override { return true; }
  [[nodiscard]] std::vector<double> act(const PolicyContext& context, bool explore) override;
  UpdateStats update(const TrainingView& view) override;

  /// Regression step towards y = r; returns the mean loss.
  double estimator_update(const Minibatch& batch);
  [[nodiscard]] const CriticNetwork& estimator() const { return estimator_; }

  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

 private:
  CriticNetwork estimator_;
  AdamOptimizer encoder_optimizer_;
  AdamOptimizer head_optimizer_;
  std::mt19937_64 rng_;
};

[[nodiscard]] std::unique_ptr<BiddingAgent> make_agent(std::size_t index, const StateLayout& layout,
                                                       const AgentConfig& config, std::uint64_t seed);

/// Deterministic per-agent seed derivation.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// All N agents plus the shared replay memory.
class AgentTeam {
 public:
  AgentTeam(StateLayout layout, std::vector<AgentConfig> configs, std::uint64_t seed);
  AgentTeam(const AgentTeam& other);
  AgentTeam& operator=(const AgentTeam& other);
  AgentTeam(AgentTeam&&) noexcept = default;
  AgentTeam& operator=(AgentTeam&&) noexcept = default;
  ~AgentTeam() = default;

  [[nodiscard]] std::size_t size() const { return agents_.size(); }
  [[nodiscard]] const StateLayout& layout() const { return layout_; }
  [[nodiscard]] BiddingAgent& agent(std::size_t i) { return *agents_.at(i); }
  [[nodiscard]] const BiddingAgent& agent(std::size_t i) const { return *agents_.at(i); }
  [[nodiscard]] bool any_learner() const;
  [[nodiscard]] std::vector<RewardMode> reward_modes() const;
  [[nodiscard]] ReplayMemory& memory() { return memory_; }
  [[nodiscard]] const ReplayMemory& memory() const { return memory_; }

  /// Joint action matrix (agent-major, N * L) for the given state.
  [[nodiscard]] std::vector<double> act(std::span<const double> state, bool explore);

  void begin_episode();
  void end_episode();
  /// Context shown to agents on their next act(): the latest executed joint
  /// actions and their distribution.
  void set_context(std::span<const double> joint_actions, std::span<const double> distribution);
  /// Stores a completed tuple if any agent replays.
  void observe(const TransitionTuple& tuple);
  std::vector<UpdateStats> update(const TransitionTuple& latest);

  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  StateLayout layout_;
  std::vector<std::unique_ptr<BiddingAgent>> agents_;
  ReplayMemory memory_;
  std::vector<double> last_actions_;
  std::vector<double> last_distribution_;
};

}  // namespace dcmab
