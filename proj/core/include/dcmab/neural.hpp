#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dcmab {

enum class Activation { kRelu, kTanh, kLinear };

[[nodiscard]] std::string to_string(Activation a);
[[nodiscard]] Activation activation_from_string(const std::string& name);

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::kLinear;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out_dim x in_dim
  Eigen::VectorXd bias;    // out_dim
  Activation activation = Activation::kLinear;
};

/// Values retained by forward() for the matching backward() call.
/// Samples are columns throughout.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;   // input of each layer
  std::vector<Eigen::MatrixXd> outputs;  // activated output of each layer
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  MlpGradients& operator+=(const MlpGradients& other);
  MlpGradients& operator*=(double factor);
  [[nodiscard]] double squared_norm() const;
};

struct BackwardResult {
  MlpGradients params;
  Eigen::MatrixXd input_gradient;  // in_dim x batch
};

/// Fully-connected network with exact reverse-mode gradients.
class Mlp {
 public:
  Mlp() = default;
  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(const std::vector<LayerSpec>& specs, std::mt19937_64& rng);

  [[nodiscard]] static Mlp zeros(const std::vector<LayerSpec>& specs);

  [[nodiscard]] std::vector<LayerSpec> specs() const;
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::vector<DenseLayer>& layers() { return layers_; }
  [[nodiscard]] std::size_t input_dim() const;
  [[nodiscard]] std::size_t output_dim() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] bool all_finite() const;

  /// `input` is in_dim x batch. The cache is filled when non-null.
  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache* cache = nullptr) const;
  [[nodiscard]] BackwardResult backward(const ForwardCache& cache, const Eigen::MatrixXd& output_gradient) const;

  [[nodiscard]] MlpGradients zero_gradients() const;
  [[nodiscard]] std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool plain_sgd = false;  // w -= lr * g, no moments
};

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const Mlp& shape, AdamConfig config);

  void step(Mlp& params, const MlpGradients& gradients);

  [[nodiscard]] const AdamConfig& config() const { return config_; }
  [[nodiscard]] std::uint64_t steps() const { return t_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  AdamConfig config_{};
  MlpGradients m_;
  MlpGradients v_;
  std::uint64_t t_ = 0;
};

/// target <- tau * source + (1 - tau) * target, elementwise.
void soft_update(Mlp& target, const Mlp& source, double tau);

/// One JSON header line (layer specs, seed) followed by the parameters as
/// whitespace-separated round-trip decimals, layer by layer, weight
/// row-major then bias.
void save_mlp(std::ostream& out, const Mlp& mlp, std::uint64_t seed = 0);
[[nodiscard]] Mlp load_mlp(std::istream& in, std::uint64_t* seed = nullptr);

}  // namespace dcmab
