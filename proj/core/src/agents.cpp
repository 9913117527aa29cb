#include "dcmab/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dcmab {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kManual: return "manual";
    case Algorithm::kBandit: return "bandit";
    case Algorithm::kA2C: return "a2c";
    case Algorithm::kDdpg: return "ddpg";
    case Algorithm::kDcmab: return "dcmab";
  }
  return "manual";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "manual") return Algorithm::kManual;
  if (name == "bandit") return Algorithm::kBandit;
  if (name == "a2c") return Algorithm::kA2C;
  if (name == "ddpg") return Algorithm::kDdpg;
  if (name == "dcmab") return Algorithm::kDcmab;
  throw std::invalid_argument("unknown algorithm: " + name);
}

void AgentConfig::validate() const {
  if (!(range > 0.0 && range < 1.0)) throw std::invalid_argument("range must be in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (minibatch_size == 0 || minibatch_size > replay_capacity) {
    throw std::invalid_argument("minibatch size must be in [1, replay_capacity]");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in [0, 1]");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("reward scale must be positive");
  if (actor_hidden == 0 || critic_hidden == 0) throw std::invalid_argument("hidden sizes must be positive");
  if (bandit_candidates == 0) throw std::invalid_argument("bandit needs at least one candidate");
  if (!(bandit_epsilon >= 0.0 && bandit_epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
  if (!(a2c_sigma > 0.0)) throw std::invalid_argument("a2c sigma must be positive");
  if (noise.sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
}

double adjustment_ratio(double a_ij, double bratio, double range) {
  return std::clamp(a_ij * bratio, -range, range);
}

double compute_bid_adjustment(double a_ij, double bratio, double base_bid, double range) {
  if (!(base_bid > 0.0)) throw std::invalid_argument("base bid must be positive");
  return base_bid * (1.0 + adjustment_ratio(a_ij, bratio, range));
}

double td_target(double reward, double gamma, double q_next, bool terminal) {
  return terminal ? reward : reward + gamma * q_next;
}

double a2c_advantage(double reward, double gamma, double value, double next_value, bool terminal) {
  return td_target(reward, gamma, next_value, terminal) - value;
}

// ---------------------------------------------------------------- noise

ExplorationNoise::ExplorationNoise(NoiseConfig config, std::size_t dim, std::uint64_t seed)
    : config_(config), sigma_(config.sigma), state_(dim, 0.0), rng_(seed) {}

void ExplorationNoise::perturb(std::span<double> actions) {
  if (actions.size() != state_.size()) throw std::invalid_argument("noise dimension mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < actions.size(); ++k) {
    double n = 0.0;
    if (config_.mode == NoiseMode::kGaussian) {
      n = sigma_ * normal(rng_);
    } else {
      state_[k] += -config_.theta * config_.dt * state_[k] + sigma_ * std::sqrt(config_.dt) * normal(rng_);
      n = state_[k];
    }
    actions[k] = std::clamp(actions[k] + n, -1.0, 1.0);
  }
}

void ExplorationNoise::reset() { std::fill(state_.begin(), state_.end(), 0.0); }

void ExplorationNoise::end_episode() { sigma_ *= config_.decay; }

void ExplorationNoise::save(std::ostream& out) const {
  nlohmann::json j;
  j["sigma"] = sigma_;
  j["state"] = state_;
  std::ostringstream rng;
  rng << rng_;
  j["rng"] = rng.str();
  out << j.dump() << '\n';
}

void ExplorationNoise::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("noise state missing");
  const auto j = nlohmann::json::parse(line);
  sigma_ = j.at("sigma").get<double>();
  state_ = j.at("state").get<std::vector<double>>();
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> rng_;
}

// ---------------------------------------------------------------- replay

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayMemory::push(TransitionTuple tuple) {
  if (buffer_.size() == capacity_) buffer_.pop_front();
  buffer_.push_back(std::move(tuple));
}

std::vector<std::size_t> ReplayMemory::sample_indices(std::size_t count, std::mt19937_64& rng) const {
  if (count > buffer_.size()) throw std::invalid_argument("not enough transitions to sample");
  // Partial Fisher-Yates over [0, size).
  std::vector<std::size_t> pool(buffer_.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

// ---------------------------------------------------------------- network helpers

Eigen::MatrixXd states_to_matrix(std::span<const double> state) {
  return Eigen::Map<const Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
}

Eigen::MatrixXd actor_inputs(const StateLayout& layout, const Eigen::MatrixXd& states) {
  const auto g_dim = static_cast<Eigen::Index>(layout.g_dim());
  const auto x_dim = static_cast<Eigen::Index>(layout.x_dim());
  const auto L = static_cast<Eigen::Index>(layout.n_consumer_clusters);
  if (states.rows() != static_cast<Eigen::Index>(layout.state_dim())) {
    throw std::invalid_argument("actor_inputs: state dim mismatch");
  }
  Eigen::MatrixXd in(g_dim + x_dim, states.cols() * L);
  for (Eigen::Index b = 0; b < states.cols(); ++b) {
    for (Eigen::Index j = 0; j < L; ++j) {
      auto col = in.col(b * L + j);
      col.head(g_dim) = states.col(b).head(g_dim);
      col.tail(x_dim) = states.col(b).segment(g_dim + j * x_dim, x_dim);
    }
  }
  return in;
}

std::vector<LayerSpec> actor_specs(const StateLayout& layout, std::size_t hidden) {
  return {{layout.actor_input_dim(), hidden, Activation::kRelu},
          {hidden, hidden, Activation::kRelu},
          {hidden, 1, Activation::kTanh}};
}

CriticNetwork::CriticNetwork(std::size_t state_dim, std::size_t side_dim, std::size_t hidden, std::mt19937_64& rng)
    : encoder_({{state_dim, hidden, Activation::kRelu}}, rng),
      head_({{hidden + side_dim, hidden, Activation::kRelu}, {hidden, 1, Activation::kLinear}}, rng),
      side_dim_(side_dim) {}

Eigen::RowVectorXd CriticNetwork::forward(const Eigen::MatrixXd& states, const Eigen::MatrixXd& side,
                                          CriticCache* cache) const {
  if (static_cast<std::size_t>(side.rows()) != side_dim_ || (side_dim_ > 0 && side.cols() != states.cols())) {
    throw std::invalid_argument("critic: side input shape mismatch");
  }
  Eigen::MatrixXd h1 = encoder_.forward(states, cache ? &cache->encoder : nullptr);
  if (side_dim_ == 0) return head_.forward(h1, cache ? &cache->head : nullptr);
  Eigen::MatrixXd joined(h1.rows() + side.rows(), h1.cols());
  joined.topRows(h1.rows()) = h1;
  joined.bottomRows(side.rows()) = side;
  return head_.forward(joined, cache ? &cache->head : nullptr);
}

CriticGradients CriticNetwork::backward(const CriticCache& cache, const Eigen::RowVectorXd& output_gradient) const {
  CriticGradients out;
  BackwardResult head = head_.backward(cache.head, output_gradient);
  const Eigen::Index hidden = static_cast<Eigen::Index>(encoder_.output_dim());
  Eigen::MatrixXd h1_grad = head.input_gradient.topRows(hidden);
  out.side_gradient = head.input_gradient.bottomRows(static_cast<Eigen::Index>(side_dim_));
  BackwardResult enc = encoder_.backward(cache.encoder, h1_grad);
  out.encoder = std::move(enc.params);
  out.head = std::move(head.params);
  return out;
}

void soft_update(CriticNetwork& target, const CriticNetwork& source, double tau) {
  soft_update(target.encoder(), source.encoder(), tau);
  soft_update(target.head(), source.head(), tau);
}

Minibatch make_minibatch(std::span<const TransitionTuple> tuples, std::size_t agent, double reward_scale) {
  if (tuples.empty()) throw std::invalid_argument("empty minibatch");
  const auto S = static_cast<Eigen::Index>(tuples.size());
  const auto state_dim = static_cast<Eigen::Index>(tuples.front().state.size());
  const auto joint_dim = static_cast<Eigen::Index>(tuples.front().actions.size());
  const auto cells = static_cast<Eigen::Index>(tuples.front().distribution.values.size());
  Minibatch mb;
  mb.states.resize(state_dim, S);
  mb.next_states.resize(state_dim, S);
  mb.actions.resize(joint_dim, S);
  mb.distribution.resize(cells, S);
  mb.next_distribution.resize(cells, S);
  mb.rewards.resize(S);
  mb.terminal.resize(tuples.size());
  for (Eigen::Index b = 0; b < S; ++b) {
    const TransitionTuple& t = tuples[static_cast<std::size_t>(b)];
    if (agent >= t.rewards.size() || !t.rewards[agent]) {
      throw std::logic_error("transition carries no reward for learning agent");
    }
    mb.states.col(b) = states_to_matrix(t.state);
    mb.next_states.col(b) = states_to_matrix(t.next_state);
    mb.actions.col(b) = states_to_matrix(t.actions);
    mb.distribution.col(b) = states_to_matrix(t.distribution.values);
    mb.next_distribution.col(b) = states_to_matrix(t.next_distribution.values);
    mb.rewards(b) = *t.rewards[agent] / reward_scale;
    mb.terminal[static_cast<std::size_t>(b)] = t.terminal;
  }
  return mb;
}

Minibatch gather_minibatch(const ReplayMemory& memory, std::span<const std::size_t> indices, std::size_t agent,
                           double reward_scale) {
  std::vector<TransitionTuple> tuples;
  tuples.reserve(indices.size());
  for (std::size_t idx : indices) tuples.push_back(memory.at(idx));
  return make_minibatch(tuples, agent, reward_scale);
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return in;
}

void save_net(const std::filesystem::path& p, const Mlp& m) {
  auto out = open_out(p);
  save_mlp(out, m);
}

void load_net(const std::filesystem::path& p, Mlp& m) {
  auto in = open_in(p);
  Mlp loaded = load_mlp(in);
  if (loaded.specs() != m.specs()) throw std::runtime_error("checkpoint shape mismatch in " + p.string());
  m = std::move(loaded);
}

void save_opt(const std::filesystem::path& p, const AdamOptimizer& o) {
  auto out = open_out(p);
  o.save(out);
}

void load_opt(const std::filesystem::path& p, AdamOptimizer& o) {
  auto in = open_in(p);
  o.load(in);
}

void save_rng(const std::filesystem::path& p, const std::mt19937_64& rng) {
  auto out = open_out(p);
  out << rng << '\n';
}

void load_rng(const std::filesystem::path& p, std::mt19937_64& rng) {
  auto in = open_in(p);
  in >> rng;
}

void check_finite(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw std::runtime_error("non-finite network output: training diverged");
}

}  // namespace

// ---------------------------------------------------------------- base agent

BiddingAgent::BiddingAgent(std::size_t index, StateLayout layout, AgentConfig config)
    : index_(index), layout_(layout), config_(config) {
  config_.validate();
  if (index >= layout.n_merchant_clusters) throw std::invalid_argument("agent index out of range");
}

Eigen::MatrixXd BiddingAgent::target_actions(const Eigen::MatrixXd& states) const {
  return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout_.n_consumer_clusters), states.cols());
}

UpdateStats BiddingAgent::update(const TrainingView&) { return {}; }

void BiddingAgent::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "agent.json");
  nlohmann::json j;
  j["algorithm"] = to_string(config_.algorithm);
  j["index"] = index_;
  out << j.dump() << '\n';
}

void BiddingAgent::load(const std::filesystem::path& dir) {
  auto in = open_in(dir / "agent.json");
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("algorithm").get<std::string>() != to_string(config_.algorithm)) {
    throw std::runtime_error("checkpoint algorithm mismatch in " + dir.string());
  }
}

// ---------------------------------------------------------------- manual

ManualAgent::ManualAgent(std::size_t index, StateLayout layout, AgentConfig config)
    : BiddingAgent(index, layout, config) {}

std::unique_ptr<BiddingAgent> ManualAgent::clone() const { return std::make_unique<ManualAgent>(*this); }

std::vector<double> ManualAgent::act(const PolicyContext&, bool) { return manual_policy(layout_); }

std::vector<double> manual_policy(const StateLayout& layout) {
  return std::vector<double>(layout.n_consumer_clusters, 0.0);
}

// ---------------------------------------------------------------- deterministic policy gradient

DeterministicPolicyAgent::DeterministicPolicyAgent(std::size_t index, StateLayout layout, AgentConfig config,
                                                   std::uint64_t seed)
    : BiddingAgent(index, layout, config), rng_(seed) {
  const std::size_t side = (joint_critic() ? layout.cells() : layout.n_consumer_clusters) + layout.cells();
  actor_ = Mlp(actor_specs(layout, config_.actor_hidden), rng_);
  critic_ = CriticNetwork(layout.state_dim(), side, config_.critic_hidden, rng_);
  target_actor_ = actor_;
  target_critic_ = critic_;
  actor_optimizer_ = AdamOptimizer(actor_, {.learning_rate = config_.actor_learning_rate});
  critic_encoder_optimizer_ = AdamOptimizer(critic_.encoder(), {.learning_rate = config_.critic_learning_rate});
  critic_head_optimizer_ = AdamOptimizer(critic_.head(), {.learning_rate = config_.critic_learning_rate});
  noise_ = ExplorationNoise(config_.noise, layout.n_consumer_clusters, derive_seed(seed, 0x6e6f697365));
}

std::unique_ptr<BiddingAgent> DeterministicPolicyAgent::clone() const {
  return std::make_unique<DeterministicPolicyAgent>(*this);
}

Eigen::MatrixXd DeterministicPolicyAgent::policy_actions(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd mu = actor_.forward(actor_inputs(layout_, states));
  check_finite(mu);
  return mu.reshaped(static_cast<Eigen::Index>(layout_.n_consumer_clusters), states.cols());
}

Eigen::MatrixXd DeterministicPolicyAgent::target_actions(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd mu = target_actor_.forward(actor_inputs(layout_, states));
  return mu.reshaped(static_cast<Eigen::Index>(layout_.n_consumer_clusters), states.cols());
}

std::vector<double> DeterministicPolicyAgent::act(const PolicyContext& context, bool explore) {
  Eigen::MatrixXd mu = policy_actions(states_to_matrix(context.state));
  std::vector<double> a(mu.data(), mu.data() + mu.size());
  for (double& v : a) v = std::clamp(v, -1.0, 1.0);
  if (explore) noise_.perturb(a);
  return a;
}

void DeterministicPolicyAgent::begin_episode() { noise_.reset(); }

void DeterministicPolicyAgent::end_episode() { noise_.end_episode(); }

std::size_t DeterministicPolicyAgent::own_action_offset() const {
  return joint_critic() ? index_ * layout_.n_consumer_clusters : 0;
}

Eigen::MatrixXd DeterministicPolicyAgent::critic_side(const Eigen::MatrixXd& joint_actions,
                                                      const Eigen::MatrixXd& distribution) const {
  const auto L = static_cast<Eigen::Index>(layout_.n_consumer_clusters);
  const auto cells = static_cast<Eigen::Index>(layout_.cells());
  if (joint_actions.rows() != cells || distribution.rows() != cells) {
    throw std::invalid_argument("critic_side: expected joint actions and distribution of N*L rows");
  }
  const Eigen::Index action_rows = joint_critic() ? cells : L;
  Eigen::MatrixXd side(action_rows + cells, joint_actions.cols());
  if (joint_critic()) {
    side.topRows(cells) = joint_actions;
  } else {
    side.topRows(L) = joint_actions.middleRows(static_cast<Eigen::Index>(index_) * L, L);
  }
  side.bottomRows(cells) = distribution;
  return side;
}

double DeterministicPolicyAgent::critic_update(const Minibatch& batch, const TargetPolicyFn& target_actions_fn) {
  const auto S = static_cast<Eigen::Index>(batch.size());
  const auto L = static_cast<Eigen::Index>(layout_.n_consumer_clusters);
  const auto N = static_cast<Eigen::Index>(layout_.n_merchant_clusters);

  // Target joint actions a'_o = [mu'_o(g', x'_1), ..., mu'_o(g', x'_L)] for every agent.
  Eigen::MatrixXd next_joint = Eigen::MatrixXd::Zero(N * L, S);
  for (Eigen::Index o = 0; o < N; ++o) {
    if (!joint_critic() && o != static_cast<Eigen::Index>(index_)) continue;
    next_joint.middleRows(o * L, L) = target_actions_fn(static_cast<std::size_t>(o), batch.next_states);
  }
  const Eigen::RowVectorXd q_next =
      target_critic_.forward(batch.next_states, critic_side(next_joint, batch.next_distribution));

  Eigen::RowVectorXd y(S);
  for (Eigen::Index b = 0; b < S; ++b) {
    y(b) = td_target(batch.rewards(b), config_.gamma, q_next(b), batch.terminal[static_cast<std::size_t>(b)]);
  }

  CriticCache cache;
  const Eigen::RowVectorXd q = critic_.forward(batch.states, critic_side(batch.actions, batch.distribution), &cache);
  check_finite(q);
  Eigen::RowVectorXd grad(S);
  double loss = 0.0;
  if (config_.discounted_q_loss) {
    const Eigen::RowVectorXd err = y - config_.gamma * q;
    loss = err.squaredNorm() / static_cast<double>(S);
    grad = -2.0 * config_.gamma * err / static_cast<double>(S);
  } else {
    const Eigen::RowVectorXd err = q - y;
    loss = err.squaredNorm() / static_cast<double>(S);
    grad = 2.0 * err / static_cast<double>(S);
  }
  CriticGradients g = critic_.backward(cache, grad);
  critic_encoder_optimizer_.step(critic_.encoder(), g.encoder);
  critic_head_optimizer_.step(critic_.head(), g.head);
  return loss;
}

MlpGradients DeterministicPolicyAgent::actor_gradient(const Minibatch& batch) const {
  const auto S = static_cast<Eigen::Index>(batch.size());
  const auto L = static_cast<Eigen::Index>(layout_.n_consumer_clusters);
  const auto offset = static_cast<Eigen::Index>(own_action_offset());

  ForwardCache actor_cache;
  const Eigen::MatrixXd mu = actor_.forward(actor_inputs(layout_, batch.states), &actor_cache);
  check_finite(mu);

  Eigen::MatrixXd side = critic_side(batch.actions, batch.distribution);
  for (Eigen::Index b = 0; b < S; ++b) {
    for (Eigen::Index j = 0; j < L; ++j) side(offset + j, b) = mu(0, b * L + j);
  }
  CriticCache critic_cache;
  (void)critic_.forward(batch.states, side, &critic_cache);
  // Minimize -mean(Q).
  const Eigen::RowVectorXd q_grad = Eigen::RowVectorXd::Constant(S, -1.0 / static_cast<double>(S));
  const CriticGradients cg = critic_.backward(critic_cache, q_grad);

  Eigen::MatrixXd mu_grad(1, S * L);
  for (Eigen::Index b = 0; b < S; ++b) {
    for (Eigen::Index j = 0; j < L; ++j) mu_grad(0, b * L + j) = cg.side_gradient(offset + j, b);
  }
  return actor_.backward(actor_cache, mu_grad).params;
}

double DeterministicPolicyAgent::actor_update(const Minibatch& batch) {
  const MlpGradients g = actor_gradient(batch);
  actor_optimizer_.step(actor_, g);
  return std::sqrt(g.squared_norm());
}

void DeterministicPolicyAgent::update_targets() {
  soft_update(target_actor_, actor_, config_.tau);
  soft_update(target_critic_, critic_, config_.tau);
}

UpdateStats DeterministicPolicyAgent::update(const TrainingView& view) {
  UpdateStats stats;
  if (view.memory.size() < config_.minibatch_size) return stats;
  for (std::size_t k = 0; k < config_.updates_per_step; ++k) {
    const auto idx = view.memory.sample_indices(config_.minibatch_size, rng_);
    const Minibatch batch = gather_minibatch(view.memory, idx, index_, config_.reward_scale);
    stats.critic_loss = critic_update(batch, view.target_actions);
    stats.actor_gradient_norm = actor_update(batch);
    update_targets();
  }
  stats.updated = true;
  return stats;
}

void DeterministicPolicyAgent::save(const std::filesystem::path& dir) const {
  BiddingAgent::save(dir);
  save_net(dir / "actor.txt", actor_);
  save_net(dir / "actor_target.txt", target_actor_);
  save_net(dir / "critic_encoder.txt", critic_.encoder());
  save_net(dir / "critic_head.txt", critic_.head());
  save_net(dir / "critic_target_encoder.txt", target_critic_.encoder());
  save_net(dir / "critic_target_head.txt", target_critic_.head());
  save_opt(dir / "actor_optimizer.txt", actor_optimizer_);
  save_opt(dir / "critic_encoder_optimizer.txt", critic_encoder_optimizer_);
  save_opt(dir / "critic_head_optimizer.txt", critic_head_optimizer_);
  auto noise_out = open_out(dir / "noise.json");
  noise_.save(noise_out);
  save_rng(dir / "rng.txt", rng_);
}

void DeterministicPolicyAgent::load(const std::filesystem::path& dir) {
  BiddingAgent::load(dir);
  load_net(dir / "actor.txt", actor_);
  load_net(dir / "actor_target.txt", target_actor_);
  load_net(dir / "critic_encoder.txt", critic_.encoder());
  load_net(dir / "critic_head.txt", critic_.head());
  load_net(dir / "critic_target_encoder.txt", target_critic_.encoder());
  load_net(dir / "critic_target_head.txt", target_critic_.head());
  load_opt(dir / "actor_optimizer.txt", actor_optimizer_);
  load_opt(dir / "critic_encoder_optimizer.txt", critic_encoder_optimizer_);
  load_opt(dir / "critic_head_optimizer.txt", critic_head_optimizer_);
  auto noise_in = open_in(dir / "noise.json");
  noise_.load(noise_in);
  load_rng(dir / "rng.txt", rng_);
}

// ---------------------------------------------------------------- A2C

A2CAgent::A2CAgent(std::size_t index, StateLayout layout, AgentConfig config, std::uint64_t seed)
    : BiddingAgent(index, layout, config), rng_(seed) {
  actor_ = Mlp(actor_specs(layout, config_.actor_hidden), rng_);
  value_ = CriticNetwork(layout.state_dim(), 0, config_.critic_hidden, rng_);
  actor_optimizer_ = AdamOptimizer(actor_, {.learning_rate = config_.actor_learning_rate});
  value_encoder_optimizer_ = AdamOptimizer(value_.encoder(), {.learning_rate = config_.critic_learning_rate});
  value_head_optimizer_ = AdamOptimizer(value_.head(), {.learning_rate = config_.critic_learning_rate});
}

std::unique_ptr<BiddingAgent> A2CAgent::clone() const { return std::make_unique<A2CAgent>(*this); }

std::vector<double> A2CAgent::act(const PolicyContext& context, bool explore) {
  const Eigen::MatrixXd mu = actor_.forward(actor_inputs(layout_, states_to_matrix(context.state)));
  check_finite(mu);
  std::vector<double> a(mu.data(), mu.data() + mu.size());
  if (!explore) return a;
  std::normal_distribution<double> normal(0.0, config_.a2c_sigma);
  Sample sample{{context.state.begin(), context.state.end()}, std::vector<double>(a.size())};
  for (std::size_t j = 0; j < a.size(); ++j) {
    sample.raw[j] = a[j] + normal(rng_);
    a[j] = std::clamp(sample.raw[j], -1.0, 1.0);
  }
  pending_.push_back(std::move(sample));
  return a;
}

Eigen::MatrixXd A2CAgent::target_actions(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd mu = actor_.forward(actor_inputs(layout_, states));
  return mu.reshaped(static_cast<Eigen::Index>(layout_.n_consumer_clusters), states.cols());
}

double A2CAgent::value(std::span<const double> state) const {
  return value_.forward(states_to_matrix(state), Eigen::MatrixXd(0, 1))(0);
}

UpdateStats A2CAgent::update(const TrainingView& view) {
  const TransitionTuple& t = view.latest;
  if (pending_.empty() || pending_.front().state != t.state) {
    throw std::logic_error("A2C update without a matching on-policy action");
  }
  const Sample sample = std::move(pending_.front());
  pending_.pop_front();
  if (index_ >= t.rewards.size() || !t.rewards[index_]) return {};
  const double r = *t.rewards[index_] / config_.reward_scale;
  const Eigen::MatrixXd s = states_to_matrix(t.state);
  const Eigen::MatrixXd empty(0, 1);

  CriticCache cache;
  const double v = value_.forward(s, empty, &cache)(0);
  const double v_next = t.terminal ? 0.0 : value(t.next_state);
  const double advantage = a2c_advantage(r, config_.gamma, v, v_next, t.terminal);

  UpdateStats stats;
  stats.updated = true;
  stats.critic_loss = advantage * advantage;
  // d/dV (V - y)^2 with y held fixed.
  const CriticGradients vg = value_.backward(cache, Eigen::RowVectorXd::Constant(1, -2.0 * advantage));
  value_encoder_optimizer_.step(value_.encoder(), vg.encoder);
  value_head_optimizer_.step(value_.head(), vg.head);

  // Policy gradient of -advantage * log N(sample | mu, sigma^2), summed over clusters.
  ForwardCache actor_cache;
  const Eigen::MatrixXd mu = actor_.forward(actor_inputs(layout_, s), &actor_cache);
  const double var = config_.a2c_sigma * config_.a2c_sigma;
  Eigen::MatrixXd mu_grad(1, mu.cols());
  for (Eigen::Index j = 0; j < mu.cols(); ++j) {
    mu_grad(0, j) = -advantage * (sample.raw[static_cast<std::size_t>(j)] - mu(0, j)) / var;
  }
  const MlpGradients ag = actor_.backward(actor_cache, mu_grad).params;
  actor_optimizer_.step(actor_, ag);
  stats.actor_gradient_norm = std::sqrt(ag.squared_norm());
  return stats;
}

void A2CAgent::save(const std::filesystem::path& dir) const {
  BiddingAgent::save(dir);
  save_net(dir / "actor.txt", actor_);
  save_net(dir / "value_encoder.txt", value_.encoder());
  save_net(dir / "value_head.txt", value_.head());
  save_opt(dir / "actor_optimizer.txt", actor_optimizer_);
  save_opt(dir / "value_encoder_optimizer.txt", value_encoder_optimizer_);
  save_opt(dir / "value_head_optimizer.txt", value_head_optimizer_);
  save_rng(dir / "rng.txt", rng_);
}

void A2CAgent::load(const std::filesystem::path& dir) {
  BiddingAgent::load(dir);
  load_net(dir / "actor.txt", actor_);
  load_net(dir / "value_encoder.txt", value_.encoder());
  load_net(dir / "value_head.txt", value_.head());
  load_opt(dir / "actor_optimizer.txt", actor_optimizer_);
  load_opt(dir / "value_encoder_optimizer.txt", value_encoder_optimizer_);
  load_opt(dir / "value_head_optimizer.txt", value_head_optimizer_);
  load_rng(dir / "rng.txt", rng_);
}

// ---------------------------------------------------------------- contextual bandit

BanditAgent::BanditAgent(std::size_t index, StateLayout layout, AgentConfig config, std::uint64_t seed)
    : BiddingAgent(index, layout, config), rng_(seed) {
  estimator_ = CriticNetwork(layout.state_dim(), 2 * layout.cells(), config_.critic_hidden, rng_);
  encoder_optimizer_ = AdamOptimizer(estimator_.encoder(), {.learning_rate = config_.critic_learning_rate});
  head_optimizer_ = AdamOptimizer(estimator_.head(), {.learning_rate = config_.critic_learning_rate});
}

std::unique_ptr<BiddingAgent> BanditAgent::clone() const { return std::make_unique<BanditAgent>(*this); }

std::vector<double> BanditAgent::act(const PolicyContext& context, bool explore) {
  const auto L = static_cast<Eigen::Index>(layout_.n_consumer_clusters);
  const auto cells = static_cast<Eigen::Index>(layout_.cells());
  const auto K = static_cast<Eigen::Index>(config_.bandit_candidates);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::MatrixXd candidates(L, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < L; ++j) candidates(j, k) = unit(rng_);
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (explore && coin(rng_) < config_.bandit_epsilon) {
    return {candidates.col(0).data(), candidates.col(0).data() + L};
  }
  // Other agents' latest actions are part of the context.
  Eigen::MatrixXd side(2 * cells, K);
  const Eigen::VectorXd joint = states_to_matrix(context.joint_actions);
  const Eigen::VectorXd d = states_to_matrix(context.distribution);
  for (Eigen::Index k = 0; k < K; ++k) {
    side.col(k).head(cells) = joint;
    side.col(k).segment(static_cast<Eigen::Index>(index_) * L, L) = candidates.col(k);
    side.col(k).tail(cells) = d;
  }
  const Eigen::MatrixXd states = states_to_matrix(context.state).replicate(1, K);
  const Eigen::RowVectorXd estimate = estimator_.forward(states, side);
  check_finite(estimate);
  Eigen::Index best = 0;
  estimate.maxCoeff(&best);
  return {candidates.col(best).data(), candidates.col(best).data() + L};
}

double BanditAgent::estimator_update(const Minibatch& batch) {
  const auto S = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd side(batch.actions.rows() + batch.distribution.rows(), S);
  side.topRows(batch.actions.rows()) = batch.actions;
  side.bottomRows(batch.distribution.rows()) = batch.distribution;
  CriticCache cache;
  const Eigen::RowVectorXd q = estimator_.forward(batch.states, side, &cache);
  // One-step objective: the target is the immediate reward whatever gamma is.
  const Eigen::RowVectorXd err = q - batch.rewards.transpose();
  const CriticGradients g = estimator_.backward(cache, 2.0 * err / static_cast<double>(S));
  encoder_optimizer_.step(estimator_.encoder(), g.encoder);
  head_optimizer_.step(estimator_.head(), g.head);
  return err.squaredNorm() / static_cast<double>(S);
}

UpdateStats BanditAgent::update(const TrainingView& view) {
  UpdateStats stats;
  if (view.memory.size() < config_.minibatch_size) return stats;
  for (std::size_t k = 0; k < config_.updates_per_step; ++k) {
    const auto idx = view.memory.sample_indices(config_.minibatch_size, rng_);
    stats.critic_loss = estimator_update(gather_minibatch(view.memory, idx, index_, config_.reward_scale));
  }
  stats.updated = true;
  return stats;
}

void BanditAgent::save(const std::filesystem::path& dir) const {
  BiddingAgent::save(dir);
  save_net(dir / "estimator_encoder.txt", estimator_.encoder());
  save_net(dir / "estimator_head.txt", estimator_.head());
  save_opt(dir / "encoder_optimizer.txt", encoder_optimizer_);
  save_opt(dir / "head_optimizer.txt", head_optimizer_);
  save_rng(dir / "rng.txt", rng_);
}

void BanditAgent::load(const std::filesystem::path& dir) {
  BiddingAgent::load(dir);
  load_net(dir / "estimator_encoder.txt", estimator_.encoder());
  load_net(dir / "estimator_head.txt", estimator_.head());
  load_opt(dir / "encoder_optimizer.txt", encoder_optimizer_);
  load_opt(dir / "head_optimizer.txt", head_optimizer_);
  load_rng(dir / "rng.txt", rng_);
}

// ---------------------------------------------------------------- factory and team

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::unique_ptr<BiddingAgent> make_agent(std::size_t index, const StateLayout& layout, const AgentConfig& config,
                                         std::uint64_t seed) {
  switch (config.algorithm) {
    case Algorithm::kManual: return std::make_unique<ManualAgent>(index, layout, config);
    case Algorithm::kBandit: return std::make_unique<BanditAgent>(index, layout, config, seed);
    case Algorithm::kA2C: return std::make_unique<A2CAgent>(index, layout, config, seed);
    case Algorithm::kDdpg:
    case Algorithm::kDcmab: return std::make_unique<DeterministicPolicyAgent>(index, layout, config, seed);
  }
  throw std::invalid_argument("unknown algorithm");
}

namespace {

std::size_t team_capacity(const std::vector<AgentConfig>& configs) {
  std::size_t cap = 1;
  for (const auto& c : configs) cap = std::max(cap, c.replay_capacity);
  return cap;
}

}  // namespace

AgentTeam::AgentTeam(StateLayout layout, std::vector<AgentConfig> configs, std::uint64_t seed)
    : layout_(layout),
      memory_(team_capacity(configs)),
      last_actions_(layout.cells(), 0.0),
      last_distribution_(layout.cells(), 0.0) {
  if (configs.size() != layout.n_merchant_clusters) throw std::invalid_argument("need one agent config per cluster");
  for (std::size_t i = 0; i < configs.size(); ++i) {
    agents_.push_back(make_agent(i, layout, configs[i], derive_seed(seed, i)));
  }
}

AgentTeam::AgentTeam(const AgentTeam& other)
    : layout_(other.layout_),
      memory_(other.memory_),
      last_actions_(other.last_actions_),
      last_distribution_(other.last_distribution_) {
  for (const auto& a : other.agents_) agents_.push_back(a->clone());
}

AgentTeam& AgentTeam::operator=(const AgentTeam& other) {
  if (this != &other) {
    AgentTeam copy(other);
    *this = std::move(copy);
  }
  return *this;
}

bool AgentTeam::any_learner() const {
  return std::any_of(agents_.begin(), agents_.end(), [](const auto& a) { return a->learns(); });
}

std::vector<RewardMode> AgentTeam::reward_modes() const {
  std::vector<RewardMode> modes;
  for (const auto& a : agents_) modes.push_back(a->learns() ? a->config().reward_mode : RewardMode::kNone);
  return modes;
}

std::vector<double> AgentTeam::act(std::span<const double> state, bool explore) {
  if (state.size() != layout_.state_dim()) throw std::invalid_argument("team act: state dim mismatch");
  std::vector<double> joint;
  joint.reserve(layout_.cells());
  const PolicyContext ctx{state, last_actions_, last_distribution_};
  for (auto& a : agents_) {
    const std::vector<double> row = a->act(ctx, explore);
    if (row.size() != layout_.n_consumer_clusters) throw std::logic_error("agent returned wrong action count");
    for (double v : row) {
      if (!(v >= -1.0 && v <= 1.0)) throw std::runtime_error("agent action outside [-1, 1]");
    }
    joint.insert(joint.end(), row.begin(), row.end());
  }
  return joint;
}

void AgentTeam::begin_episode() {
  std::fill(last_actions_.begin(), last_actions_.end(), 0.0);
  std::fill(last_distribution_.begin(), last_distribution_.end(), 0.0);
  for (auto& a : agents_) a->begin_episode();
}

void AgentTeam::end_episode() {
  for (auto& a : agents_) a->end_episode();
}

void AgentTeam::set_context(std::span<const double> joint_actions, std::span<const double> distribution) {
  if (joint_actions.size() != layout_.cells() || distribution.size() != layout_.cells()) {
    throw std::invalid_argument("team context shape");
  }
  last_actions_.assign(joint_actions.begin(), joint_actions.end());
  last_distribution_.assign(distribution.begin(), distribution.end());
}

void AgentTeam::observe(const TransitionTuple& tuple) {
  const bool replay = std::any_of(agents_.begin(), agents_.end(), [](const auto& a) { return a->uses_replay(); });
  if (replay) memory_.push(tuple);
}

std::vector<UpdateStats> AgentTeam::update(const TransitionTuple& latest) {
  TargetPolicyFn targets = [this](std::size_t o, const Eigen::MatrixXd& states) {
    return agents_.at(o)->target_actions(states);
  };
  const TrainingView view{memory_, latest, targets};
  std::vector<UpdateStats> stats;
  for (auto& a : agents_) stats.push_back(a->learns() ? a->update(view) : UpdateStats{});
  return stats;
}

void AgentTeam::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i]->save(dir / ("agent_" + std::to_string(i)));
}

void AgentTeam::load(const std::filesystem::path& dir) {
  for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i]->load(dir / ("agent_" + std::to_string(i)));
}

}  // namespace dcmab
