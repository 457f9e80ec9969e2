#include "voxfuse/nn.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "voxfuse/errors.hpp"
#include "voxfuse/kernels.hpp"
#include "voxfuse/kitti.hpp"

namespace voxfuse::nn {

namespace {

using json = nlohmann::ordered_json;

double apply_act(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::Identity: break;
  }
  return z;
}

// Derivative in terms of pre-activation z and activation value a.
double act_grad(Activation act, double z, double a) {
  switch (act) {
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return a * (1.0 - a);
    case Activation::Identity: break;
  }
  return 1.0;
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw FormatError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: break;
  }
  return "identity";
}

void DenseNet::validate() const {
  if (layers.empty()) throw ContractError("net: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& l = layers[k];
    if (l.in == 0 || l.out == 0)
      throw ContractError("net: layer " + std::to_string(k) + " has zero dim");
    if (l.w.size() != l.in * l.out || l.b.size() != l.out)
      throw ContractError("net: layer " + std::to_string(k) +
                          " parameter shape mismatch");
    if (k > 0 && layers[k - 1].out != l.in)
      throw ContractError("net: layers " + std::to_string(k - 1) + " and " +
                          std::to_string(k) + " do not chain");
    for (double v : l.w)
      if (!std::isfinite(v))
        throw ContractError("net: non-finite weight in layer " +
                            std::to_string(k));
    for (double v : l.b)
      if (!std::isfinite(v))
        throw ContractError("net: non-finite bias in layer " +
                            std::to_string(k));
  }
}

DenseNet make_net(std::size_t input_dim, const std::vector<LayerSpec>& specs,
                  SplitMix64& rng) {
  if (specs.empty()) throw ContractError("net: no layer specs");
  DenseNet net;
  std::size_t in = input_dim;
  for (const LayerSpec& spec : specs) {
    Layer l;
    l.in = in;
    l.out = spec.out;
    l.act = spec.act;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + spec.out));
    l.w.resize(in * spec.out);
    for (double& v : l.w) v = rng.uniform(-limit, limit);
    l.b.assign(spec.out, 0.0);
    net.layers.push_back(std::move(l));
    in = spec.out;
  }
  net.validate();
  return net;
}

std::vector<double> forward(const DenseNet& net, std::span<const double> x) {
  if (net.layers.empty()) throw ContractError("net: no layers");
  if (x.size() != net.input_dim())
    throw ContractError("net forward: input size " + std::to_string(x.size()) +
                        ", want " + std::to_string(net.input_dim()));
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> nxt;
  for (const Layer& l : net.layers) {
    nxt.resize(l.out);
    kernels::affine_forward(l.w.data(), l.b.data(), cur.data(), nxt.data(),
                            l.out, l.in);
    for (double& v : nxt) v = apply_act(l.act, v);
    cur.swap(nxt);
  }
  return cur;
}

Gradients Gradients::zeros_like(const DenseNet& net) {
  Gradients g;
  g.w.reserve(net.layers.size());
  g.b.reserve(net.layers.size());
  for (const Layer& l : net.layers) {
    g.w.emplace_back(l.w.size(), 0.0);
    g.b.emplace_back(l.b.size(), 0.0);
  }
  g.input.assign(net.input_dim(), 0.0);
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (std::size_t i = 0; i < w[k].size(); ++i) w[k][i] += other.w[k][i];
    for (std::size_t i = 0; i < b[k].size(); ++i) b[k][i] += other.b[k][i];
  }
  for (std::size_t i = 0; i < input.size(); ++i) input[i] += other.input[i];
}

void Gradients::scale(double s) {
  for (auto& layer : w)
    for (double& v : layer) v *= s;
  for (auto& layer : b)
    for (double& v : layer) v *= s;
  for (double& v : input) v *= s;
}

Gradients backward(const DenseNet& net, std::span<const double> x,
                   std::span<const double> upstream) {
  if (x.size() != net.input_dim())
    throw ContractError("net backward: input size mismatch");
  if (upstream.size() != net.output_dim())
    throw ContractError("net backward: upstream size mismatch");

  // Forward pass, keeping every layer's pre-activation and activation.
  const std::size_t n_layers = net.layers.size();
  std::vector<std::vector<double>> acts(n_layers + 1);
  std::vector<std::vector<double>> pre(n_layers);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t k = 0; k < n_layers; ++k) {
    const Layer& l = net.layers[k];
    pre[k].resize(l.out);
    kernels::affine_forward(l.w.data(), l.b.data(), acts[k].data(),
                            pre[k].data(), l.out, l.in);
    acts[k + 1].resize(l.out);
    for (std::size_t i = 0; i < l.out; ++i)
      acts[k + 1][i] = apply_act(l.act, pre[k][i]);
  }

  Gradients g = Gradients::zeros_like(net);
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t k = n_layers; k-- > 0;) {
    const Layer& l = net.layers[k];
    for (std::size_t i = 0; i < l.out; ++i)
      delta[i] *= act_grad(l.act, pre[k][i], acts[k + 1][i]);
    // dW = delta (x) input activation; db = delta; next delta = W^T delta
    for (std::size_t i = 0; i < l.out; ++i) {
      const double d = delta[i];
      double* wrow = g.w[k].data() + i * l.in;
      const double* a = acts[k].data();
      for (std::size_t j = 0; j < l.in; ++j) wrow[j] = d * a[j];
      g.b[k][i] = d;
    }
    std::vector<double> prev(l.in, 0.0);
    for (std::size_t i = 0; i < l.out; ++i) {
      const double d = delta[i];
      const double* wrow = l.w.data() + i * l.in;
      for (std::size_t j = 0; j < l.in; ++j) prev[j] += wrow[j] * d;
    }
    delta.swap(prev);
  }
  g.input = std::move(delta);
  return g;
}

void step(DenseNet& net, const Gradients& grads, double lr) {
  if (grads.w.size() != net.layers.size())
    throw ContractError("net step: gradient layer count mismatch");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Layer& l = net.layers[k];
    if (grads.w[k].size() != l.w.size() || grads.b[k].size() != l.b.size())
      throw ContractError("net step: gradient shape mismatch at layer " +
                          std::to_string(k));
    for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] -= lr * grads.w[k][i];
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] -= lr * grads.b[k][i];
  }
}

double bce_loss(double s, double y) {
  const double p = std::clamp(s, 1e-12, 1.0 - 1e-12);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

double bce_output_grad(double s, double y) {
  const double p = std::clamp(s, 1e-7, 1.0 - 1e-7);
  return (p - y) / (p * (1.0 - p));
}

std::string net_to_json(const DenseNet& net) {
  json layers = json::array();
  for (const Layer& l : net.layers) {
    layers.push_back(json{{"in", l.in},
                          {"out", l.out},
                          {"activation", activation_name(l.act)},
                          {"weights", l.w},
                          {"bias", l.b}});
  }
  return json{{"layers", layers}}.dump(2) + "\n";
}

DenseNet net_from_json(const std::string& text) {
  DenseNet net;
  try {
    const json j = json::parse(text);
    for (const auto& jl : j.at("layers")) {
      Layer l;
      l.in = jl.at("in").get<std::size_t>();
      l.out = jl.at("out").get<std::size_t>();
      l.act = activation_from_name(jl.at("activation").get<std::string>());
      l.w = jl.at("weights").get<std::vector<double>>();
      l.b = jl.at("bias").get<std::vector<double>>();
      net.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError("net parameters: " + std::string(e.what()));
  }
  net.validate();
  return net;
}

void save_net(const DenseNet& net, const std::filesystem::path& path) {
  kitti::write_text_file(path, net_to_json(net));
}

DenseNet load_net(const std::filesystem::path& path) {
  return net_from_json(kitti::read_text_file(path));
}

}  // namespace voxfuse::nn
