#include "dcmab/neural.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace dcmab {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kLinear: return "linear";
  }
  return "linear";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "linear") return Activation::kLinear;
  throw std::invalid_argument("unknown activation: " + name);
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  if (other.weight.size() != weight.size()) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

MlpGradients& MlpGradients::operator*=(double factor) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] *= factor;
    bias[l] *= factor;
  }
  return *this;
}

double MlpGradients::squared_norm() const {
  double s = 0.0;
  for (std::size_t l = 0; l < weight.size(); ++l) s += weight[l].squaredNorm() + bias[l].squaredNorm();
  return s;
}

namespace {

void check_specs(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (specs[l].in_dim == 0 || specs[l].out_dim == 0) throw std::invalid_argument("layer dims must be >= 1");
    if (l > 0 && specs[l].in_dim != specs[l - 1].out_dim) throw std::invalid_argument("layer chain mismatch");
  }
}

void activate(Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::kRelu: z = z.cwiseMax(0.0); break;
    case Activation::kTanh: z = z.array().tanh().matrix(); break;
    case Activation::kLinear: break;
  }
}

}  // namespace

Mlp::Mlp(const std::vector<LayerSpec>& specs, std::mt19937_64& rng) {
  check_specs(specs);
  for (const auto& s : specs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.activation = s.activation;
    layer.weight.resize(static_cast<Eigen::Index>(s.out_dim), static_cast<Eigen::Index>(s.in_dim));
    layer.bias.resize(static_cast<Eigen::Index>(s.out_dim));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(const std::vector<LayerSpec>& specs) {
  check_specs(specs);
  Mlp m;
  for (const auto& s : specs) {
    DenseLayer layer;
    layer.activation = s.activation;
    layer.weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.out_dim), static_cast<Eigen::Index>(s.in_dim));
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.out_dim));
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

std::vector<LayerSpec> Mlp::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) {
    out.push_back({static_cast<std::size_t>(l.weight.cols()), static_cast<std::size_t>(l.weight.rows()),
                   l.activation});
  }
  return out;
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, ForwardCache* cache) const {
  if (layers_.empty()) throw std::logic_error("forward on empty network");
  if (static_cast<std::size_t>(input.rows()) != input_dim()) {
    throw std::invalid_argument("forward: input dim " + std::to_string(input.rows()) + " != " +
                                std::to_string(input_dim()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Eigen::MatrixXd x = input;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z(layer.weight.rows(), x.cols());
    z.noalias() = layer.weight * x;
    z.colwise() += layer.bias;
    activate(z, layer.activation);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->outputs.push_back(z);
    }
    x = std::move(z);
  }
  return x;
}

BackwardResult Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& output_gradient) const {
  if (cache.inputs.size() != layers_.size()) throw std::invalid_argument("backward: cache does not match network");
  const Eigen::MatrixXd& last_out = cache.outputs.back();
  if (output_gradient.rows() != last_out.rows() || output_gradient.cols() != last_out.cols()) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  BackwardResult result;
  result.params.weight.resize(layers_.size());
  result.params.bias.resize(layers_.size());

  Eigen::MatrixXd grad = output_gradient;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const DenseLayer& layer = layers_[k];
    const Eigen::MatrixXd& out = cache.outputs[k];
    switch (layer.activation) {
      case Activation::kRelu: grad = (out.array() > 0.0).select(grad, 0.0); break;
      case Activation::kTanh: grad = (grad.array() * (1.0 - out.array().square())).matrix(); break;
      case Activation::kLinear: break;
    }
    result.params.weight[k].noalias() = grad * cache.inputs[k].transpose();
    result.params.bias[k] = grad.rowwise().sum();
    Eigen::MatrixXd next(layer.weight.cols(), grad.cols());
    next.noalias() = layer.weight.transpose() * grad;
    grad = std::move(next);
  }
  result.input_gradient = std::move(grad);
  return result;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void Mlp::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = values[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = values[k++];
  }
}

AdamOptimizer::AdamOptimizer(const Mlp& shape, AdamConfig config)
    : config_(config), m_(shape.zero_gradients()), v_(shape.zero_gradients()) {}

void AdamOptimizer::step(Mlp& params, const MlpGradients& g) {
  auto& layers = params.layers();
  if (g.weight.size() != layers.size() || m_.weight.size() != layers.size()) {
    throw std::invalid_argument("optimizer step: shape mismatch");
  }
  ++t_;
  const double lr = config_.learning_rate;
  if (config_.plain_sgd) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= lr * g.weight[l];
      layers[l].bias -= lr * g.bias[l];
    }
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double eps = config_.epsilon;
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, g.weight[l], m_.weight[l], v_.weight[l]);
    update(layers[l].bias, g.bias[l], m_.bias[l], v_.bias[l]);
  }
}

namespace {

void write_numbers(std::ostream& out, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      out.write(buf, res.ptr - buf);
      out.put(' ');
    }
  }
  out.put('\n');
}

void read_numbers(std::istream& in, Eigen::Ref<Eigen::MatrixXd> m) {
  std::string token;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!(in >> token)) throw std::runtime_error("parameter file truncated");
      double v = 0.0;
      auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (res.ec != std::errc()) throw std::runtime_error("parameter file: bad number " + token);
      m(r, c) = v;
    }
  }
}

}  // namespace

void AdamOptimizer::save(std::ostream& out) const {
  nlohmann::json header;
  header["steps"] = t_;
  header["learning_rate"] = config_.learning_rate;
  header["beta1"] = config_.beta1;
  header["beta2"] = config_.beta2;
  header["epsilon"] = config_.epsilon;
  header["plain_sgd"] = config_.plain_sgd;
  header["layers"] = m_.weight.size();
  out << header.dump() << '\n';
  for (std::size_t l = 0; l < m_.weight.size(); ++l) {
    write_numbers(out, m_.weight[l]);
    write_numbers(out, m_.bias[l]);
    write_numbers(out, v_.weight[l]);
    write_numbers(out, v_.bias[l]);
  }
}

void AdamOptimizer::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("optimizer state: missing header");
  const auto header = nlohmann::json::parse(line);
  if (header.at("layers").get<std::size_t>() != m_.weight.size()) {
    throw std::runtime_error("optimizer state: layer count mismatch");
  }
  t_ = header.at("steps").get<std::uint64_t>();
  config_.learning_rate = header.at("learning_rate").get<double>();
  config_.beta1 = header.at("beta1").get<double>();
  config_.beta2 = header.at("beta2").get<double>();
  config_.epsilon = header.at("epsilon").get<double>();
  config_.plain_sgd = header.at("plain_sgd").get<bool>();
  for (std::size_t l = 0; l < m_.weight.size(); ++l) {
    read_numbers(in, m_.weight[l]);
    read_numbers(in, m_.bias[l]);
    read_numbers(in, v_.weight[l]);
    read_numbers(in, v_.bias[l]);
  }
  std::getline(in, line);
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau must be in [0, 1]");
  auto& t = target.layers();
  const auto& s = source.layers();
  if (t.size() != s.size()) throw std::invalid_argument("soft_update: shape mismatch");
  for (std::size_t l = 0; l < t.size(); ++l) {
    if (t[l].weight.rows() != s[l].weight.rows() || t[l].weight.cols() != s[l].weight.cols()) {
      throw std::invalid_argument("soft_update: shape mismatch");
    }
    t[l].weight = tau * s[l].weight + (1.0 - tau) * t[l].weight;
    t[l].bias = tau * s[l].bias + (1.0 - tau) * t[l].bias;
  }
}

void save_mlp(std::ostream& out, const Mlp& mlp, std::uint64_t seed) {
  nlohmann::json header;
  header["format"] = "dcmab-mlp";
  header["version"] = 1;
  header["seed"] = seed;
  header["layers"] = nlohmann::json::array();
  for (const auto& s : mlp.specs()) {
    header["layers"].push_back({{"in", s.in_dim}, {"out", s.out_dim}, {"activation", to_string(s.activation)}});
  }
  out << header.dump() << '\n';
  for (const auto& l : mlp.layers()) {
    write_numbers(out, l.weight);
    write_numbers(out, l.bias);
  }
}

Mlp load_mlp(std::istream& in, std::uint64_t* seed) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parameter file: missing header");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "dcmab-mlp") throw std::runtime_error("parameter file: wrong format tag");
  std::vector<LayerSpec> specs;
  for (const auto& l : header.at("layers")) {
    specs.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                     activation_from_string(l.at("activation").get<std::string>())});
  }
  if (seed) *seed = header.value("seed", std::uint64_t{0});
  Mlp mlp = Mlp::zeros(specs);
  for (auto& l : mlp.layers()) {
    read_numbers(in, l.weight);
    read_numbers(in, l.bias);
  }
  std::getline(in, line);
  return mlp;
}

}  // namespace dcmab
