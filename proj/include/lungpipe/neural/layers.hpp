#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lungpipe/neural/tensor.hpp"

namespace lungpipe::nn {

using Rng = std::mt19937_64;

struct Parameter {
  std::string role;  // e.g. "weight", "moving_mean"
  std::string name;  // unique name inside a network
  Tensor value;
  Tensor grad;
  bool trainable = true;  // false for batch-norm running statistics
};

/// A differentiable layer. `forward` caches what `backward` needs; `infer`
/// is the const inference path (dropout off, batch norm on running stats).
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string type() const = 0;
  /// Output shape for one item, without the batch dimension.
  virtual std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const = 0;
  virtual Tensor forward(const Tensor& x, bool training, Rng& rng) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;
  /// Accumulates parameter gradients and returns d(loss)/d(input).
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual void initialize(Rng&) {}
  virtual std::unique_ptr<Layer> clone() const = 0;

  std::vector<const Parameter*> parameters() const;
};

/// 3D convolution, stride 1, zero 'same' padding, odd cubic kernel.
class Conv3d : public Layer {
 public:
  Conv3d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);
  std::string type() const override { return "conv3d"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3d>(*this); }

 private:
  std::size_t in_c_, out_c_, k_;
  Parameter weight_, bias_;  // weight (out, in, k, k, k)
  Tensor input_;
};

class ReLU : public Layer {
 public:
  std::string type() const override { return "relu"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override { return in; }
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor output_;
};

/// Non-overlapping max pooling with a cubic window; input sides must be divisible.
class MaxPool3d : public Layer {
 public:
  explicit MaxPool3d(std::size_t pool) : p_(pool) {}
  std::string type() const override { return "maxpool3d"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool3d>(*this); }

 private:
  std::size_t p_;
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Per-channel batch normalization for NF or NCDHW activations.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.9, double eps = 1e-3);
  std::string type() const override { return "batchnorm"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override { return in; }
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_, &mean_, &var_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

 private:
  std::size_t c_;
  double momentum_, eps_;
  Parameter gamma_, beta_, mean_, var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool used_batch_stats_ = false;
};

/// Inverted dropout.
class Dropout : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  std::string type() const override { return "dropout"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override { return in; }
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override { return x; }
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  double rate_;
  std::vector<double> scale_;
};

class Flatten : public Layer {
 public:
  std::string type() const override { return "flatten"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  std::vector<std::size_t> in_shape_;
};

class GlobalAvgPool : public Layer {
 public:
  std::string type() const override { return "global_avg_pool"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  std::vector<std::size_t> in_shape_;
};

class Dense : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);
  std::string type() const override { return "dense"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter weight_, bias_;  // weight (out, in)
  Tensor input_;
};

/// Two conv(+batch norm) stages with an identity shortcut, then ReLU.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::size_t channels, std::size_t kernel, bool batchnorm);
  ResidualBlock(const ResidualBlock& other);
  ResidualBlock& operator=(const ResidualBlock&) = delete;
  std::string type() const override { return "residual"; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override { return in; }
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void initialize(Rng& rng) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ResidualBlock>(*this); }

 private:
  std::vector<std::unique_ptr<Layer>> branch_;
  Tensor output_;
};

/// Sequential stack of layers producing logits.
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor forward(const Tensor& x, bool training, Rng& rng);
  /// Inference through the first `n_layers` layers (all by default).
  Tensor infer(const Tensor& x, std::size_t n_layers = static_cast<std::size_t>(-1)) const;
  void backward(const Tensor& grad_logits);
  void zero_grad();
  void initialize(Rng& rng);
  /// Assign "<index>_<type>.<role>" names to every parameter.
  void name_parameters();

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace lungpipe::nn
