#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/rng.hpp"

namespace voxfuse::nn {

enum class Activation { Identity, Relu, Sigmoid };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

struct Layer {
  std::size_t in = 0, out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
  Activation act = Activation::Identity;
};

/// Plain fully-connected network. Layers must chain (out of layer k equals in
/// of layer k+1) and hold finite parameters.
struct DenseNet {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }
  void validate() const;  // throws ContractError
};

struct LayerSpec {
  std::size_t out = 0;
  Activation act = Activation::Identity;
};

/// Xavier-uniform initialization (limit sqrt(6/(in+out))), biases zero, from
/// a splitmix64 stream: identical seed, identical parameters, bit for bit.
DenseNet make_net(std::size_t input_dim, const std::vector<LayerSpec>& specs,
                  SplitMix64& rng);

/// Affine + activation composition. Throws ContractError when |x| does not
/// match the input dimension.
std::vector<double> forward(const DenseNet& net, std::span<const double> x);

struct Gradients {
  std::vector<std::vector<double>> w;  // per layer, same shapes as the net
  std::vector<std::vector<double>> b;
  std::vector<double> input;  // dL/dx

  static Gradients zeros_like(const DenseNet& net);
  void accumulate(const Gradients& other);
  void scale(double s);
};

/// Exact reverse-mode gradients of forward at x, seeded with dL/d(output).
Gradients backward(const DenseNet& net, std::span<const double> x,
                   std::span<const double> upstream);

/// Plain SGD update: parameters -= lr * gradients.
void step(DenseNet& net, const Gradients& grads, double lr);

/// Binary cross-entropy against a probability s (clamped away from {0,1}).
double bce_loss(double s, double y);
double bce_output_grad(double s, double y);  // dL/ds

/// JSON parameter files: layer shapes, activations, row-major weights.
std::string net_to_json(const DenseNet& net);
DenseNet net_from_json(const std::string& text);
void save_net(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_net(const std::filesystem::path& path);

}  // namespace voxfuse::nn
