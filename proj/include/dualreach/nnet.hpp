// Small dense-network toolkit with hand-written backpropagation.
//
// Activations are column-major batches: one column per sample, one row per
// feature. A Network is a flat sequence of layers; forward() caches what
// backward() needs, predict() is a const, cache-free evaluation pass.
#pragma once

#include <Eigen/Core>

#include <random>
#include <span>
#include <vector>

namespace dualreach::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

enum class LayerKind { kDense, kCRelu, kBatchNorm, kDropout, kTanh };

enum class Init {
  kFanIn,         // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kUniformRange,  // U(-range, range), used for output layers
};

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int width = 0;  // dense only
  Init init = Init::kFanIn;
  double init_range = 3e-3;
  double keep_prob = 1.0;  // dropout only

  static LayerSpec dense(int width, Init init = Init::kFanIn, double range = 3e-3);
  static LayerSpec crelu();
  static LayerSpec batchnorm();
  static LayerSpec dropout(double keep_prob);
  static LayerSpec tanh();
};

// ---------------------------------------------------------------------------
// Layer primitives

// concat(max(x, 0), max(-x, 0)) along the feature axis.
Matrix crelu(const Matrix& x);
Matrix crelu_backward(const Matrix& x, const Matrix& dy);

Matrix dense_forward(const Matrix& weights, const Vector& bias, const Matrix& x);

struct DenseGrads {
  Matrix dx;
  Matrix dweights;
  Vector dbias;
};
DenseGrads dense_backward(const Matrix& weights, const Matrix& x, const Matrix& dy);

struct BatchNormParams {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.99;
  double eps = 1e-5;

  static BatchNormParams identity(int width);
};

struct BatchNormCache {
  Matrix xhat;
  Vector inv_std;
  Mode mode = Mode::kEval;
};

// Training mode normalizes by batch statistics (batch size >= 2) and, when
// `update_running` is set, folds them into the running estimates.
Matrix batchnorm_forward(BatchNormParams& params, const Matrix& x, Mode mode,
                         BatchNormCache* cache = nullptr, bool update_running = true);
Matrix batchnorm_predict(const BatchNormParams& params, const Matrix& x);

struct BatchNormGrads {
  Matrix dx;
  Vector dgamma;
  Vector dbeta;
};
BatchNormGrads batchnorm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                                  const Matrix& dy);

// Inverted dropout: identity in eval mode; in training mode zeroes each unit
// with probability 1 - keep_prob and scales survivors by 1 / keep_prob.
Matrix dropout(const Matrix& x, double keep_prob, Mode mode, Rng& rng, Matrix* mask = nullptr);

// 2 * lambda * W.
Matrix l2_penalty_grad(const Matrix& weights, double lambda);

// ---------------------------------------------------------------------------
// Network

struct ParamView {
  std::span<double> value;
  std::span<double> grad;
  bool is_weight = false;  // dense weight matrix (the only L2-regularized kind)
};

class Network {
 public:
  Network() = default;
  Network(int input_dim, std::vector<LayerSpec> specs, Rng& rng);

  int input_dim() const { return input_dim_; }
  int output_dim() const;
  const std::vector<LayerSpec>& specs() const { return specs_; }

  // `rng` is required in training mode when a dropout layer has keep_prob < 1.
  Matrix forward(const Matrix& x, Mode mode, Rng* rng = nullptr);
  Matrix predict(const Matrix& x) const;
  // Backpropagates through the last forward() call and returns d/dx.
  // Parameter gradients accumulate unless `accumulate` is false.
  Matrix backward(const Matrix& dy, bool accumulate = true);
  void zero_grad();

  // Trainable parameters with their gradient buffers.
  std::vector<ParamView> parameters();
  // Every persistent array (parameters plus batch-norm running statistics),
  // in a fixed order; used by checkpoints and target-network blending.
  std::vector<std::span<double>> state_arrays();
  std::vector<std::span<const double>> state_arrays() const;

  // Whether training-mode batch-norm passes update the running statistics.
  void set_update_running_stats(bool on) { update_running_ = on; }

  // Sum of squared dense weights.
  double weight_norm2() const;

 private:
  struct Layer {
    LayerSpec spec;
    int in = 0;
    int out = 0;
    Matrix weights, dweights;
    Vector bias, dbias;
    BatchNormParams bn;
    Vector dgamma, dbeta;
    // forward caches
    Matrix input;
    Matrix output;
    Matrix mask;
    BatchNormCache bn_cache;
  };

  int input_dim_ = 0;
  std::vector<LayerSpec> specs_;
  std::vector<Layer> layers_;
  bool update_running_ = true;
};

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Vector> m;
  std::vector<Vector> v;
  long step = 0;
};

AdamState make_adam(Network& net, AdamConfig config = {});
// One bias-corrected Adam update from the gradients stored in `params`.
void adam_step(AdamState& state, std::span<const ParamView> params);
void adam_step(AdamState& state, Network& net);

// Adds 2*lambda*W to every dense weight gradient; returns lambda*sum(W^2).
double add_l2_penalty(Network& net, double lambda);

// ---------------------------------------------------------------------------
// Verification

struct GradientCheck {
  double max_param_error = 0.0;  // max relative error over parameters
  double max_input_error = 0.0;  // max relative error over inputs
};

// |a - b| / max(|a|, |b|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Compares backward() against central differences of the scalar
// sum(C .* net(x)) for a random fixed C. Training mode is allowed only when
// the network has no active dropout (keep_prob < 1).
GradientCheck finite_difference_check(Network& net, const Matrix& input, double h, Mode mode,
                                      Rng& rng);

}  // namespace dualreach::nn
