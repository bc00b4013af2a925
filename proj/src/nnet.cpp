#include "dualreach/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dualreach::nn {

LayerSpec LayerSpec::dense(int width, Init init, double range) {
  if (width <= 0) throw std::invalid_argument("dense layer width must be positive");
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.width = width;
  s.init = init;
  s.init_range = range;
  return s;
}

LayerSpec LayerSpec::crelu() {
  LayerSpec s;
  s.kind = LayerKind::kCRelu;
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  return s;
}

LayerSpec LayerSpec::dropout(double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw std::invalid_argument("dropout keep probability must lie in (0, 1]");
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.keep_prob = keep_prob;
  return s;
}

LayerSpec LayerSpec::tanh() {
  LayerSpec s;
  s.kind = LayerKind::kTanh;
  return s;
}

Matrix crelu(const Matrix& x) {
  Matrix y(2 * x.rows(), x.cols());
  y.topRows(x.rows()) = x.cwiseMax(0.0);
  y.bottomRows(x.rows()) = (-x).cwiseMax(0.0);
  return y;
}

Matrix crelu_backward(const Matrix& x, const Matrix& dy) {
  if (dy.rows() != 2 * x.rows() || dy.cols() != x.cols())
    throw std::invalid_argument("crelu_backward: shape mismatch");
  const auto n = x.rows();
  return (x.array() > 0.0).select(dy.topRows(n), 0.0) -
         (x.array() < 0.0).select(dy.bottomRows(n), 0.0);
}

Matrix dense_forward(const Matrix& weights, const Vector& bias, const Matrix& x) {
  if (weights.cols() != x.rows() || weights.rows() != bias.size())
    throw std::invalid_argument("dense_forward: shape mismatch");
  Matrix y(weights.rows(), x.cols());
  y.noalias() = weights * x;
  y.colwise() += bias;
  return y;
}

DenseGrads dense_backward(const Matrix& weights, const Matrix& x, const Matrix& dy) {
  if (dy.rows() != weights.rows() || dy.cols() != x.cols() || x.rows() != weights.cols())
    throw std::invalid_argument("dense_backward: shape mismatch");
  DenseGrads g;
  g.dx.noalias() = weights.transpose() * dy;
  g.dweights.noalias() = dy * x.transpose();
  g.dbias = dy.rowwise().sum();
  return g;
}

BatchNormParams BatchNormParams::identity(int width) {
  BatchNormParams p;
  p.gamma = Vector::Ones(width);
  p.beta = Vector::Zero(width);
  p.running_mean = Vector::Zero(width);
  p.running_var = Vector::Ones(width);
  return p;
}

Matrix batchnorm_predict(const BatchNormParams& p, const Matrix& x) {
  const Vector scale = p.gamma.array() / (p.running_var.array() + p.eps).sqrt();
  const Vector shift = p.beta.array() - p.running_mean.array() * scale.array();
  Matrix y = x.array().colwise() * scale.array();
  y.colwise() += shift;
  return y;
}

Matrix batchnorm_forward(BatchNormParams& p, const Matrix& x, Mode mode, BatchNormCache* cache,
                         bool update_running) {
  if (x.rows() != p.gamma.size()) throw std::invalid_argument("batchnorm: width mismatch");
  if (mode == Mode::kEval) {
    if (!cache) return batchnorm_predict(p, x);
    cache->mode = Mode::kEval;
    cache->inv_std = (p.running_var.array() + p.eps).rsqrt();
    cache->xhat = (x.colwise() - p.running_mean).array().colwise() * cache->inv_std.array();
    Matrix y = cache->xhat.array().colwise() * p.gamma.array();
    y.colwise() += p.beta;
    return y;
  }
  const auto batch = x.cols();
  if (batch < 2) throw std::invalid_argument("batchnorm: training mode needs a batch of at least 2");
  const Vector mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  const Vector var = centered.array().square().rowwise().mean();
  const Vector inv_std = (var.array() + p.eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix y = xhat.array().colwise() * p.gamma.array();
  y.colwise() += p.beta;
  if (update_running) {
    p.running_mean = p.momentum * p.running_mean + (1.0 - p.momentum) * mean;
    p.running_var = p.momentum * p.running_var + (1.0 - p.momentum) * var;
  }
  if (cache) {
    cache->mode = Mode::kTrain;
    cache->inv_std = inv_std;
    cache->xhat = std::move(xhat);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                  const Matrix& dy) {
  BatchNormGrads g;
  if (cache.mode == Mode::kEval) {
    // Fixed statistics: the layer is affine in x.
    g.dx = dy.array().colwise() * (p.gamma.array() * cache.inv_std.array());
    g.dgamma = (dy.array() * cache.xhat.array()).rowwise().sum();
    g.dbeta = dy.rowwise().sum();
    return g;
  }
  const double batch = static_cast<double>(dy.cols());
  g.dbeta = dy.rowwise().sum();
  g.dgamma = (dy.array() * cache.xhat.array()).rowwise().sum();
  const Matrix dxhat = dy.array().colwise() * p.gamma.array();
  const Vector sum_dxhat = dxhat.rowwise().sum();
  const Vector sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum();
  Matrix dx = batch * dxhat.array();
  dx.colwise() -= sum_dxhat;
  dx -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  g.dx = dx.array().colwise() * (cache.inv_std.array() / batch);
  return g;
}

Matrix dropout(const Matrix& x, double keep_prob, Mode mode, Rng& rng, Matrix* mask) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw std::invalid_argument("dropout keep probability must lie in (0, 1]");
  if (mode == Mode::kEval || keep_prob == 1.0) {
    if (mask) mask->setOnes(x.rows(), x.cols());
    return x;
  }
  // Four 16-bit uniforms per engine call. The keep probability is rounded to
  // a multiple of 2^-16 and the survivor scale uses the rounded value, so the
  // layer stays unbiased.
  Matrix m(x.rows(), x.cols());
  const auto threshold =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(keep_prob * 65536.0)));
  const double scale = 65536.0 / static_cast<double>(threshold);
  double* out = m.data();
  const Eigen::Index n = m.size();
  for (Eigen::Index i = 0; i < n; i += 4) {
    std::uint64_t r = rng();
    for (Eigen::Index k = i; k < std::min(n, i + 4); ++k, r >>= 16)
      out[k] = scale * static_cast<double>((r & 0xffffu) < threshold);
  }
  Matrix y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

Matrix l2_penalty_grad(const Matrix& weights, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("L2 coefficient must be nonnegative");
  return 2.0 * lambda * weights;
}

// ---------------------------------------------------------------------------

Network::Network(int input_dim, std::vector<LayerSpec> specs, Rng& rng)
    : input_dim_(input_dim), specs_(std::move(specs)) {
  if (input_dim <= 0) throw std::invalid_argument("network input dimension must be positive");
  int width = input_dim;
  for (const auto& spec : specs_) {
    Layer layer;
    layer.spec = spec;
    layer.in = width;
    switch (spec.kind) {
      case LayerKind::kDense: {
        if (spec.width <= 0) throw std::invalid_argument("dense layer width must be positive");
        layer.out = spec.width;
        const double range =
            spec.init == Init::kFanIn ? 1.0 / std::sqrt(static_cast<double>(width)) : spec.init_range;
        std::uniform_real_distribution<double> u(-range, range);
        layer.weights.resize(layer.out, layer.in);
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
          for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = u(rng);
        layer.bias.resize(layer.out);
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = u(rng);
        layer.dweights = Matrix::Zero(layer.out, layer.in);
        layer.dbias = Vector::Zero(layer.out);
        break;
      }
      case LayerKind::kCRelu:
        layer.out = 2 * width;
        break;
      case LayerKind::kBatchNorm:
        layer.out = width;
        layer.bn = BatchNormParams::identity(width);
        layer.dgamma = Vector::Zero(width);
        layer.dbeta = Vector::Zero(width);
        break;
      case LayerKind::kDropout:
        if (!(spec.keep_prob > 0.0 && spec.keep_prob <= 1.0))
          throw std::invalid_argument("dropout keep probability must lie in (0, 1]");
        layer.out = width;
        break;
      case LayerKind::kTanh:
        layer.out = width;
        break;
    }
    width = layer.out;
    layers_.push_back(std::move(layer));
  }
}

int Network::output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out; }

Matrix Network::forward(const Matrix& x, Mode mode, Rng* rng) {
  if (x.rows() != input_dim_)
    throw std::invalid_argument("network input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(input_dim_));
  Matrix h = x;
  for (auto& layer : layers_) {
    layer.input = h;
    switch (layer.spec.kind) {
      case LayerKind::kDense:
        h = dense_forward(layer.weights, layer.bias, h);
        break;
      case LayerKind::kCRelu:
        h = crelu(h);
        break;
      case LayerKind::kBatchNorm:
        h = batchnorm_forward(layer.bn, h, mode, &layer.bn_cache, update_running_);
        break;
      case LayerKind::kDropout:
        if (mode == Mode::kTrain && layer.spec.keep_prob < 1.0) {
          if (!rng) throw std::invalid_argument("training-mode dropout needs an rng");
          h = dropout(h, layer.spec.keep_prob, mode, *rng, &layer.mask);
        } else {
          layer.mask.resize(0, 0);
        }
        break;
      case LayerKind::kTanh:
        h = h.array().tanh();
        layer.output = h;
        break;
    }
  }
  return h;
}

Matrix Network::predict(const Matrix& x) const {
  if (x.rows() != input_dim_)
    throw std::invalid_argument("network input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(input_dim_));
  Matrix h = x;
  for (const auto& layer : layers_) {
    switch (layer.spec.kind) {
      case LayerKind::kDense:
        h = dense_forward(layer.weights, layer.bias, h);
        break;
      case LayerKind::kCRelu:
        h = crelu(h);
        break;
      case LayerKind::kBatchNorm:
        h = batchnorm_predict(layer.bn, h);
        break;
      case LayerKind::kDropout:
        break;
      case LayerKind::kTanh:
        h = h.array().tanh();
        break;
    }
  }
  return h;
}

Matrix Network::backward(const Matrix& dy, bool accumulate) {
  Matrix g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    auto& layer = *it;
    switch (layer.spec.kind) {
      case LayerKind::kDense:
        if (accumulate) {
          layer.dweights.noalias() += g * layer.input.transpose();
          layer.dbias += g.rowwise().sum();
        }
        g = layer.weights.transpose() * g;
        break;
      case LayerKind::kCRelu:
        g = crelu_backward(layer.input, g);
        break;
      case LayerKind::kBatchNorm: {
        auto grads = batchnorm_backward(layer.bn, layer.bn_cache, g);
        if (accumulate) {
          layer.dgamma += grads.dgamma;
          layer.dbeta += grads.dbeta;
        }
        g = std::move(grads.dx);
        break;
      }
      case LayerKind::kDropout:
        if (layer.mask.size() > 0) g = g.cwiseProduct(layer.mask);
        break;
      case LayerKind::kTanh:
        g = g.array() * (1.0 - layer.output.array().square());
        break;
    }
  }
  return g;
}

void Network::zero_grad() {
  for (auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::kDense) {
      layer.dweights.setZero();
      layer.dbias.setZero();
    } else if (layer.spec.kind == LayerKind::kBatchNorm) {
      layer.dgamma.setZero();
      layer.dbeta.setZero();
    }
  }
}

namespace {

template <typename T>
std::span<double> span_of(T& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename T>
std::span<const double> cspan_of(const T& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

std::vector<ParamView> Network::parameters() {
  std::vector<ParamView> out;
  for (auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::kDense) {
      out.push_back({span_of(layer.weights), span_of(layer.dweights), true});
      out.push_back({span_of(layer.bias), span_of(layer.dbias), false});
    } else if (layer.spec.kind == LayerKind::kBatchNorm) {
      out.push_back({span_of(layer.bn.gamma), span_of(layer.dgamma), false});
      out.push_back({span_of(layer.bn.beta), span_of(layer.dbeta), false});
    }
  }
  return out;
}

std::vector<std::span<double>> Network::state_arrays() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::kDense) {
      out.push_back(span_of(layer.weights));
      out.push_back(span_of(layer.bias));
    } else if (layer.spec.kind == LayerKind::kBatchNorm) {
      out.push_back(span_of(layer.bn.gamma));
      out.push_back(span_of(layer.bn.beta));
      out.push_back(span_of(layer.bn.running_mean));
      out.push_back(span_of(layer.bn.running_var));
    }
  }
  return out;
}

std::vector<std::span<const double>> Network::state_arrays() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::kDense) {
      out.push_back(cspan_of(layer.weights));
      out.push_back(cspan_of(layer.bias));
    } else if (layer.spec.kind == LayerKind::kBatchNorm) {
      out.push_back(cspan_of(layer.bn.gamma));
      out.push_back(cspan_of(layer.bn.beta));
      out.push_back(cspan_of(layer.bn.running_mean));
      out.push_back(cspan_of(layer.bn.running_var));
    }
  }
  return out;
}

double Network::weight_norm2() const {
  double total = 0.0;
  for (const auto& layer : layers_)
    if (layer.spec.kind == LayerKind::kDense) total += layer.weights.squaredNorm();
  return total;
}

// ---------------------------------------------------------------------------

AdamState make_adam(Network& net, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : net.parameters()) {
    s.m.push_back(Vector::Zero(static_cast<Eigen::Index>(p.value.size())));
    s.v.push_back(Vector::Zero(static_cast<Eigen::Index>(p.value.size())));
  }
  return s;
}

void adam_step(AdamState& state, std::span<const ParamView> params) {
  if (params.size() != state.m.size()) throw std::invalid_argument("adam_step: parameter count mismatch");
  const auto& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(params[i].value.size());
    if (state.m[i].size() != n) throw std::invalid_argument("adam_step: parameter shape mismatch");
    Eigen::Map<Vector> value(params[i].value.data(), n);
    Eigen::Map<const Vector> grad(params[i].grad.data(), n);
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad.cwiseAbs2();
    value.array() -= c.learning_rate * (state.m[i].array() / correction1) /
                     ((state.v[i].array() / correction2).sqrt() + c.eps);
  }
}

void adam_step(AdamState& state, Network& net) {
  const auto params = net.parameters();
  adam_step(state, params);
}

double add_l2_penalty(Network& net, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("L2 coefficient must be nonnegative");
  if (lambda == 0.0) return 0.0;
  for (auto& p : net.parameters()) {
    if (!p.is_weight) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += 2.0 * lambda * p.value[i];
  }
  return lambda * net.weight_norm2();
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradientCheck finite_difference_check(Network& net, const Matrix& input, double h, Mode mode,
                                      Rng& rng) {
  if (mode == Mode::kTrain)
    for (const auto& s : net.specs())
      if (s.kind == LayerKind::kDropout && s.keep_prob < 1.0)
        throw std::invalid_argument("finite_difference_check: training-mode dropout is stochastic");

  net.set_update_running_stats(false);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix weights(net.output_dim(), input.cols());
  for (Eigen::Index c = 0; c < weights.cols(); ++c)
    for (Eigen::Index r = 0; r < weights.rows(); ++r) weights(r, c) = normal(rng);

  auto loss = [&](const Matrix& x) { return net.forward(x, mode).cwiseProduct(weights).sum(); };

  net.zero_grad();
  net.forward(input, mode);
  const Matrix dx = net.backward(weights);

  GradientCheck out;
  for (auto& p : net.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = loss(input);
      p.value[i] = saved - h;
      const double down = loss(input);
      p.value[i] = saved;
      out.max_param_error =
          std::max(out.max_param_error, relative_error(p.grad[i], (up - down) / (2.0 * h)));
    }
  }
  Matrix x = input;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double saved = x(r, c);
      x(r, c) = saved + h;
      const double up = loss(x);
      x(r, c) = saved - h;
      const double down = loss(x);
      x(r, c) = saved;
      out.max_input_error =
          std::max(out.max_input_error, relative_error(dx(r, c), (up - down) / (2.0 * h)));
    }
  }
  net.set_update_running_stats(true);
  return out;
}

}  // namespace dualreach::nn
