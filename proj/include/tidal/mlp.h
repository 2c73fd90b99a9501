#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tidal/linalg.h"
#include "tidal/rng.h"

namespace tidal {

enum class Activation { kTanh, kRelu, kIdentity };

std::string ActivationName(Activation a);
Activation ParseActivation(const std::string& name);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;
};

// Post-activation outputs of every layer; values[0] is the input batch.
struct MlpCache {
  std::vector<Matrix> values;
};

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  void SetZero();
  MlpGradients& operator+=(const MlpGradients& other);
  double SquaredNorm() const;
};

// Fully connected network. Hidden layers share one activation, the output
// layer is always linear. Batched calls take one sample per row.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  // Zero-initialized weights and biases.
  explicit MlpNetwork(std::vector<int> layer_dims, Activation hidden = Activation::kTanh);

  // Glorot-uniform weights, zero biases.
  void InitializeRandom(SeededRng& rng);

  int input_dim() const { return layer_dims_.front(); }
  int output_dim() const { return layer_dims_.back(); }
  const std::vector<int>& layer_dims() const { return layer_dims_; }
  Activation hidden_activation() const { return hidden_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Matrix Forward(const Matrix& input, MlpCache* cache = nullptr) const;
  Vector Forward(const Vector& input) const;

  // Exact reverse-mode gradients of sum(output_grad .* output) with respect
  // to every parameter. If input_grad is set it receives d/d(input).
  MlpGradients Backward(const MlpCache& cache, const Matrix& output_grad,
                        Matrix* input_grad = nullptr) const;

  MlpGradients ZeroGradients() const;

  // Flat parameter view (layer by layer, weights row-major then bias).
  std::size_t ParameterCount() const;
  double& Parameter(std::size_t index);
  double Parameter(std::size_t index) const;
  static double GradientEntry(const MlpGradients& grads, const MlpNetwork& shape,
                              std::size_t index);

  // FNV-1a over the raw parameter bytes.
  std::uint64_t Checksum() const;

  bool operator==(const MlpNetwork& other) const;

 private:
  std::vector<int> layer_dims_;
  Activation hidden_ = Activation::kTanh;
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const MlpNetwork& net, AdamConfig config);

  void Step(MlpNetwork& net, const MlpGradients& grads);
  long step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  long step_ = 0;
  MlpGradients first_;
  MlpGradients second_;
};

// Versioned text format:
//   tidal-mlp 1
//   dims <n> d0 d1 ...
//   hidden <activation>
//   layer <i> <rows> <cols>
//   <rows*cols weights, row-major>
//   <rows biases>
// Values are written with 17 significant digits so a round trip is bit-exact.
void WriteMlp(std::ostream& out, const MlpNetwork& net);
MlpNetwork ReadMlp(std::istream& in);

std::uint64_t Fnv1a(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t Fnv1a(const std::string& text);

}  // namespace tidal
