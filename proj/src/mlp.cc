#include "tidal/mlp.h"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "tidal/errors.h"

namespace tidal {

namespace {

void ApplyActivation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::kTanh:
      z = z.array().tanh();
      break;
    case Activation::kRelu:
      z = z.array().max(0.0);
      break;
    case Activation::kIdentity:
      break;
  }
}

// Multiplies grad in place by the activation derivative, expressed through
// the post-activation value.
void ApplyActivationGrad(Activation a, const Matrix& value, Matrix& grad) {
  switch (a) {
    case Activation::kTanh:
      grad.array() *= 1.0 - value.array().square();
      break;
    case Activation::kRelu:
      grad.array() *= (value.array() > 0.0).cast<double>();
      break;
    case Activation::kIdentity:
      break;
  }
}

std::string ShapeString(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

std::string ActivationName(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation ParseActivation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

void MlpGradients::SetZero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  if (other.weight.size() != weight.size()) throw ConfigError("gradient shape mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

double MlpGradients::SquaredNorm() const {
  double s = 0.0;
  for (const auto& w : weight) s += w.squaredNorm();
  for (const auto& b : bias) s += b.squaredNorm();
  return s;
}

MlpNetwork::MlpNetwork(std::vector<int> layer_dims, Activation hidden)
    : layer_dims_(std::move(layer_dims)), hidden_(hidden) {
  if (layer_dims_.size() < 3) {
    throw ConfigError("MlpNetwork needs at least one hidden layer");
  }
  for (int d : layer_dims_) {
    if (d <= 0) throw ConfigError("MlpNetwork layer dims must be positive");
  }
  if (hidden_ == Activation::kIdentity) {
    throw ConfigError("MlpNetwork hidden activation must be tanh or relu");
  }
  const std::size_t n = layer_dims_.size() - 1;
  layers_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    layers_[i].weight = Matrix::Zero(layer_dims_[i + 1], layer_dims_[i]);
    layers_[i].bias = Vector::Zero(layer_dims_[i + 1]);
    layers_[i].activation = (i + 1 == n) ? Activation::kIdentity : hidden_;
  }
}

void MlpNetwork::InitializeRandom(SeededRng& rng) {
  for (auto& layer : layers_) {
    const double fan_in = static_cast<double>(layer.weight.cols());
    const double fan_out = static_cast<double>(layer.weight.rows());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = rng.Uniform(-limit, limit);
    }
    layer.bias.setZero();
  }
}

Matrix MlpNetwork::Forward(const Matrix& input, MlpCache* cache) const {
  if (input.cols() != input_dim()) {
    throw ConfigError("mlp forward: expected input width " + std::to_string(input_dim()) +
                      ", got " + std::to_string(input.cols()));
  }
  if (cache) {
    cache->values.clear();
    cache->values.reserve(layers_.size() + 1);
    cache->values.push_back(input);
  }
  Matrix x = input;
  for (const auto& layer : layers_) {
    Matrix z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    ApplyActivation(layer.activation, z);
    x = std::move(z);
    if (cache) cache->values.push_back(x);
  }
  return x;
}

Vector MlpNetwork::Forward(const Vector& input) const {
  Matrix row = input.transpose();
  Matrix out = Forward(row);
  return out.row(0).transpose();
}

MlpGradients MlpNetwork::Backward(const MlpCache& cache, const Matrix& output_grad,
                                  Matrix* input_grad) const {
  if (cache.values.size() != layers_.size() + 1) {
    throw ConfigError("mlp backward: cache does not belong to this network");
  }
  const Eigen::Index batch = cache.values.front().rows();
  for (std::size_t i = 0; i < cache.values.size(); ++i) {
    if (cache.values[i].cols() != layer_dims_[i] || cache.values[i].rows() != batch) {
      throw ConfigError("mlp backward: cache shape mismatch at layer " + std::to_string(i));
    }
  }
  if (output_grad.rows() != batch || output_grad.cols() != output_dim()) {
    throw ConfigError("mlp backward: output grad is " +
                      ShapeString(output_grad.rows(), output_grad.cols()) + ", expected " +
                      ShapeString(batch, output_dim()));
  }
  MlpGradients grads = ZeroGradients();
  Matrix delta = output_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    ApplyActivationGrad(layer.activation, cache.values[li + 1], delta);
    grads.weight[li].noalias() = delta.transpose() * cache.values[li];
    grads.bias[li] = delta.colwise().sum().transpose();
    if (li > 0 || input_grad) {
      Matrix prev = delta * layer.weight;
      delta = std::move(prev);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
  return grads;
}

MlpGradients MlpNetwork::ZeroGradients() const {
  MlpGradients g;
  for (const auto& layer : layers_) {
    g.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return g;
}

std::size_t MlpNetwork::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

double& MlpNetwork::Parameter(std::size_t index) {
  for (auto& layer : layers_) {
    const auto nw = static_cast<std::size_t>(layer.weight.size());
    if (index < nw) return layer.weight.data()[index];
    index -= nw;
    const auto nb = static_cast<std::size_t>(layer.bias.size());
    if (index < nb) return layer.bias.data()[index];
    index -= nb;
  }
  throw ConfigError("parameter index out of range");
}

double MlpNetwork::Parameter(std::size_t index) const {
  return const_cast<MlpNetwork*>(this)->Parameter(index);
}

double MlpNetwork::GradientEntry(const MlpGradients& grads, const MlpNetwork& shape,
                                 std::size_t index) {
  for (std::size_t li = 0; li < shape.layers_.size(); ++li) {
    const auto nw = static_cast<std::size_t>(grads.weight[li].size());
    if (index < nw) return grads.weight[li].data()[index];
    index -= nw;
    const auto nb = static_cast<std::size_t>(grads.bias[li].size());
    if (index < nb) return grads.bias[li].data()[index];
    index -= nb;
  }
  throw ConfigError("gradient index out of range");
}

std::uint64_t MlpNetwork::Checksum() const {
  std::uint64_t h = Fnv1a(layer_dims_.data(), layer_dims_.size() * sizeof(int));
  for (const auto& layer : layers_) {
    h = Fnv1a(layer.weight.data(), layer.weight.size() * sizeof(double), h);
    h = Fnv1a(layer.bias.data(), layer.bias.size() * sizeof(double), h);
  }
  return h;
}

bool MlpNetwork::operator==(const MlpNetwork& other) const {
  if (layer_dims_ != other.layer_dims_ || hidden_ != other.hidden_) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weight != other.layers_[i].weight) return false;
    if (layers_[i].bias != other.layers_[i].bias) return false;
  }
  return true;
}

AdamState::AdamState(const MlpNetwork& net, AdamConfig config)
    : config_(config), first_(net.ZeroGradients()), second_(net.ZeroGradients()) {}

void AdamState::Step(MlpNetwork& net, const MlpGradients& grads) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || first_.weight.size() != layers.size()) {
    throw ConfigError("adam: gradient/network shape mismatch");
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (param.size() != g.size()) throw ConfigError("adam: gradient/network shape mismatch");
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= config_.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + config_.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads.weight[i], first_.weight[i], second_.weight[i]);
    update(layers[i].bias, grads.bias[i], first_.bias[i], second_.bias[i]);
  }
}

void WriteMlp(std::ostream& out, const MlpNetwork& net) {
  out << "tidal-mlp 1\n";
  out << "dims " << net.layer_dims().size();
  for (int d : net.layer_dims()) out << ' ' << d;
  out << "\nhidden " << ActivationName(net.hidden_activation()) << '\n';
  out << std::setprecision(17);
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& w = layers[i].weight;
    out << "layer " << i << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index k = 0; k < w.size(); ++k) out << (k ? " " : "") << w.data()[k];
    out << '\n';
    for (Eigen::Index k = 0; k < layers[i].bias.size(); ++k) {
      out << (k ? " " : "") << layers[i].bias[k];
    }
    out << '\n';
  }
}

MlpNetwork ReadMlp(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "tidal-mlp") throw ConfigError("not a tidal-mlp stream");
  if (version != 1) throw ConfigError("unsupported tidal-mlp version " + std::to_string(version));
  std::size_t n = 0;
  if (!(in >> tag >> n) || tag != "dims") throw ConfigError("tidal-mlp: missing dims");
  std::vector<int> dims(n);
  for (auto& d : dims) in >> d;
  std::string act;
  if (!(in >> tag >> act) || tag != "hidden") throw ConfigError("tidal-mlp: missing hidden");
  MlpNetwork net(dims, ParseActivation(act));
  // Parse through strtod so that every value round-trips exactly.
  auto read_double = [&in]() {
    std::string tok;
    if (!(in >> tok)) throw ConfigError("tidal-mlp: truncated parameters");
    return std::strtod(tok.c_str(), nullptr);
  };
  for (auto& layer : net.layers()) {
    std::size_t idx = 0;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> idx >> rows >> cols) || tag != "layer" || rows != layer.weight.rows() ||
        cols != layer.weight.cols()) {
      throw ConfigError("tidal-mlp: layer header mismatch");
    }
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = read_double();
    for (Eigen::Index k = 0; k < layer.bias.size(); ++k) layer.bias[k] = read_double();
  }
  return net;
}

std::uint64_t Fnv1a(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t Fnv1a(const std::string& text) { return Fnv1a(text.data(), text.size()); }

}  // namespace tidal
