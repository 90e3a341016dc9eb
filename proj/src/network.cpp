#include "amg/network.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "amg/errors.hpp"

namespace amg {

namespace {

void apply_activation(Activation act, std::span<double> v) {
  switch (act) {
    case Activation::none:
      break;
    case Activation::relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::tanh:
      for (double& x : v) x = std::tanh(x);
      break;
  }
}

// grad <- grad * act'(.), expressed through the post-activation output.
void activation_backward(Activation act, std::span<const double> out, std::span<double> grad) {
  switch (act) {
    case Activation::none:
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (out[i] <= 0.0) grad[i] = 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - out[i] * out[i];
      break;
  }
}

void layer_forward(const Layer& l, std::span<const double> in, std::span<double> out,
                   std::size_t batch, Backend backend) {
  const bool par = backend == Backend::parallel;
  switch (l.kind) {
    case LayerKind::dense:
      par ? kernels::par::dense_forward(l.weight, l.bias, in, out, batch)
          : kernels::ref::dense_forward(l.weight, l.bias, in, out, batch);
      break;
    case LayerKind::conv:
      par ? kernels::par::conv2d_forward(l.conv, l.weight, l.bias, in, out, batch)
          : kernels::ref::conv2d_forward(l.conv, l.weight, l.bias, in, out, batch);
      break;
    case LayerKind::avgpool:
      par ? kernels::par::avgpool_forward(l.pool, in, out, batch)
          : kernels::ref::avgpool_forward(l.pool, in, out, batch);
      break;
  }
  apply_activation(l.act, out);
}

std::size_t batch_of(const Tensor& batch, std::size_t in_dim) {
  if (batch.rank() < 1 || in_dim == 0) throw InvalidInput("forward: empty network or input");
  const std::size_t n = batch.extent(0);
  if (n == 0 || batch.size() != n * in_dim)
    throw InvalidInput("forward: input shape does not match network input");
  return n;
}

float to_le_float(double v) { return static_cast<float>(v); }

}  // namespace

Network::Network(std::vector<std::size_t> input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  for (std::size_t i = 1; i < layers_.size(); ++i)
    if (layers_[i].in_dim != layers_[i - 1].out_dim) throw InvalidInput("layer shapes do not compose");
}

Tensor Network::forward(const Tensor& batch, Backend backend) const {
  const std::size_t n = batch_of(batch, input_dim());
  std::vector<double> cur(batch.raw());
  std::vector<double> next;
  for (const Layer& l : layers_) {
    next.assign(n * l.out_dim, 0.0);
    layer_forward(l, cur, next, n, backend);
    cur.swap(next);
  }
  return Tensor({n, output_dim()}, std::move(cur));
}

Tensor Network::forward(const Tensor& batch, ForwardCache& cache, Backend backend) const {
  const std::size_t n = batch_of(batch, input_dim());
  cache.batch = n;
  cache.inputs.resize(layers_.size());
  cache.outputs.resize(layers_.size());
  const std::vector<double>* cur = &batch.raw();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    cache.inputs[i] = *cur;
    cache.outputs[i].assign(n * l.out_dim, 0.0);
    layer_forward(l, cache.inputs[i], cache.outputs[i], n, backend);
    cur = &cache.outputs[i];
  }
  return Tensor({n, output_dim()}, *cur);
}

std::vector<double> Network::forward_one(std::span<const double> x) const {
  if (x.size() != input_dim()) throw InvalidInput("forward_one: input size mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const Layer& l : layers_) {
    next.assign(l.out_dim, 0.0);
    layer_forward(l, cur, next, 1, Backend::parallel);
    cur.swap(next);
  }
  // cur still owns the widest layer's capacity; callers often keep the result.
  return {cur.begin(), cur.end()};
}

void Network::backward(const ForwardCache& cache, std::span<const double> grad_output,
                       ParamGrads& grads, std::vector<double>* grad_input, Backend backend) const {
  const std::size_t n = cache.batch;
  if (grad_output.size() != n * output_dim()) throw InvalidInput("backward: gradient size mismatch");
  const bool par = backend == Backend::parallel;
  std::vector<double> g(grad_output.begin(), grad_output.end());
  std::vector<double> g_in;
  std::size_t block = 0;
  // Map each layer to the index of its weight block.
  std::vector<std::size_t> first_block(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    first_block[i] = block;
    if (layers_[i].kind != LayerKind::avgpool) block += 2;
  }
  for (std::size_t ii = layers_.size(); ii-- > 0;) {
    const Layer& l = layers_[ii];
    activation_backward(l.act, cache.outputs[ii], g);
    const bool need_input = ii > 0 || grad_input != nullptr;
    g_in.assign(need_input ? n * l.in_dim : 0, 0.0);
    switch (l.kind) {
      case LayerKind::dense: {
        auto& gw = grads[first_block[ii]];
        auto& gb = grads[first_block[ii] + 1];
        par ? kernels::par::dense_backward(l.weight, cache.inputs[ii], g, g_in, gw, gb, n)
            : kernels::ref::dense_backward(l.weight, cache.inputs[ii], g, g_in, gw, gb, n);
        break;
      }
      case LayerKind::conv: {
        auto& gw = grads[first_block[ii]];
        auto& gb = grads[first_block[ii] + 1];
        par ? kernels::par::conv2d_backward(l.conv, l.weight, cache.inputs[ii], g, g_in, gw, gb, n)
            : kernels::ref::conv2d_backward(l.conv, l.weight, cache.inputs[ii], g, g_in, gw, gb, n);
        break;
      }
      case LayerKind::avgpool:
        if (need_input)
          par ? kernels::par::avgpool_backward(l.pool, g, g_in, n)
              : kernels::ref::avgpool_backward(l.pool, g, g_in, n);
        break;
    }
    g.swap(g_in);
  }
  if (grad_input != nullptr) *grad_input = std::move(g);
}

ParamGrads Network::zero_grads() const {
  ParamGrads out;
  for (const Layer& l : layers_) {
    if (l.kind == LayerKind::avgpool) continue;
    out.emplace_back(l.weight.size(), 0.0);
    out.emplace_back(l.bias.size(), 0.0);
  }
  return out;
}

std::vector<std::span<double>> Network::parameter_blocks() {
  std::vector<std::span<double>> out;
  for (Layer& l : layers_) {
    if (l.kind == LayerKind::avgpool) continue;
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> Network::parameter_blocks() const {
  std::vector<std::span<const double>> out;
  for (const Layer& l : layers_) {
    if (l.kind == LayerKind::avgpool) continue;
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : parameter_blocks()) n += b.size();
  return n;
}

void Network::freeze() {
  for (auto block : parameter_blocks())
    for (double& v : block) v = static_cast<double>(to_le_float(v));
}

bool operator==(const Network& a, const Network& b) {
  if (a.input_shape_ != b.input_shape_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const Layer& x = a.layers_[i];
    const Layer& y = b.layers_[i];
    if (x.kind != y.kind || x.act != y.act || x.in_dim != y.in_dim || x.out_dim != y.out_dim ||
        x.weight != y.weight || x.bias != y.bias)
      return false;
  }
  return true;
}

NetworkBuilder::NetworkBuilder(std::vector<std::size_t> input_shape)
    : input_shape_(std::move(input_shape)) {
  if (input_shape_.size() == 3) {
    c_ = input_shape_[0];
    h_ = input_shape_[1];
    w_ = input_shape_[2];
  } else {
    c_ = shape_product(input_shape_);
    h_ = w_ = 1;
  }
}

NetworkBuilder& NetworkBuilder::conv(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                                     Activation act) {
  if (kernel > h_ || kernel > w_) throw InvalidInput("conv kernel larger than input");
  Layer l;
  l.kind = LayerKind::conv;
  l.act = act;
  l.conv = {c_, h_, w_, out_channels, kernel, stride};
  l.in_dim = l.conv.in_size();
  l.out_dim = l.conv.out_size();
  c_ = out_channels;
  h_ = l.conv.out_h();
  w_ = l.conv.out_w();
  layers_.push_back(std::move(l));
  return *this;
}

NetworkBuilder& NetworkBuilder::avgpool(std::size_t kernel) {
  Layer l;
  l.kind = LayerKind::avgpool;
  l.pool = {c_, h_, w_, kernel};
  l.in_dim = l.pool.in_size();
  l.out_dim = l.pool.out_size();
  h_ = l.pool.out_h();
  w_ = l.pool.out_w();
  layers_.push_back(std::move(l));
  return *this;
}

NetworkBuilder& NetworkBuilder::dense(std::size_t out_dim, Activation act) {
  Layer l;
  l.kind = LayerKind::dense;
  l.act = act;
  l.in_dim = c_ * h_ * w_;
  l.out_dim = out_dim;
  c_ = out_dim;
  h_ = w_ = 1;
  layers_.push_back(std::move(l));
  return *this;
}

Network NetworkBuilder::build(Rng& rng) const {
  std::vector<Layer> layers = layers_;
  for (Layer& l : layers) {
    if (l.kind == LayerKind::avgpool) continue;
    const std::size_t fan_in =
        l.kind == LayerKind::dense ? l.in_dim : l.conv.in_c * l.conv.k * l.conv.k;
    const std::size_t n_w = l.kind == LayerKind::dense ? l.in_dim * l.out_dim : l.conv.weight_size();
    const std::size_t n_b = l.kind == LayerKind::dense ? l.out_dim : l.conv.out_c;
    const double limit = std::sqrt((l.act == Activation::relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    l.weight.resize(n_w);
    for (double& v : l.weight) v = rng.uniform(-limit, limit);
    l.bias.assign(n_b, 0.0);
  }
  return Network(input_shape_, std::move(layers));
}

Network make_classifier(std::size_t channels, std::size_t height, std::size_t width,
                        std::size_t num_classes, Rng& rng) {
  return NetworkBuilder({channels, height, width})
      .conv(16, 3, 2)
      .conv(32, 3, 2)
      .dense(64, Activation::relu)
      .dense(num_classes)
      .build(rng);
}

Network make_encoder(std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t embed_dim, Rng& rng) {
  return NetworkBuilder({channels, height, width})
      .conv(8, 3, 2)
      .conv(16, 3, 2)
      .dense(embed_dim)
      .build(rng);
}

Network make_observation_cnn(std::size_t queue_len, std::size_t height, std::size_t width,
                             std::size_t embed_dim, Rng& rng) {
  return NetworkBuilder({queue_len, height, width})
      .avgpool(2)
      .conv(8, 3, 2)
      .dense(embed_dim)
      .build(rng);
}

Network make_mlp(std::size_t in_dim, std::span<const std::size_t> hidden, std::size_t out_dim,
                 Activation hidden_act, Rng& rng) {
  NetworkBuilder b({in_dim});
  for (std::size_t h : hidden) b.dense(h, hidden_act);
  b.dense(out_dim);
  return b.build(rng);
}

namespace {

constexpr std::array<char, 4> kMagic{'A', 'M', 'G', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16),
                                       static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_weights(const std::filesystem::path& path, std::span<const std::span<const double>> blocks) {
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.size();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kMagic.data(), 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(blocks.size()));
  put_u32(os, static_cast<std::uint32_t>(total));
  for (const auto& b : blocks)
    for (double v : b) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void load_weights(const std::filesystem::path& path, std::span<const std::span<double>> blocks) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactMissing("weights file not found: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw FormatError("weights header truncated", bytes.size());
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw FormatError("bad weights magic", 0);
  if (get_u32(&bytes[4]) != kVersion) throw FormatError("unsupported weights version", 4);
  if (get_u32(&bytes[8]) != blocks.size()) throw FormatError("weights block count mismatch", 8);
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.size();
  if (get_u32(&bytes[12]) != total) throw FormatError("weights parameter count mismatch", 12);
  if (bytes.size() != 16 + 4 * total) throw FormatError("weights payload truncated", bytes.size());
  std::size_t off = 16;
  for (const auto& b : blocks)
    for (double& v : b) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(&bytes[off])));
      off += 4;
    }
}

void save_network(const std::filesystem::path& path, const Network& net) {
  const auto blocks = net.parameter_blocks();
  save_weights(path, blocks);
}

void load_network(const std::filesystem::path& path, Network& net) {
  const auto blocks = net.parameter_blocks();
  load_weights(path, blocks);
}

}  // namespace amg
