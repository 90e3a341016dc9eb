#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "amg/kernels.hpp"
#include "amg/rng.hpp"
#include "amg/tensor.hpp"

namespace amg {

enum class LayerKind : std::uint8_t { dense, conv, avgpool };
enum class Activation : std::uint8_t { none, relu, tanh };
enum class Backend : std::uint8_t { parallel, reference };

struct Layer {
  LayerKind kind = LayerKind::dense;
  Activation act = Activation::none;
  kernels::ConvGeometry conv;  // kind == conv
  kernels::PoolGeometry pool;  // kind == avgpool
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Per-parameter-block gradient storage, aligned with Network::parameter_blocks().
using ParamGrads = std::vector<std::vector<double>>;

/// Activations recorded by a training-mode forward pass.
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::vector<double>> inputs;  // input to layer l
  std::vector<std::vector<double>> outputs; // post-activation output of layer l
};

/// Feed-forward stack of dense / convolutional / pooling layers.
class Network {
 public:
  Network() = default;
  Network(std::vector<std::size_t> input_shape, std::vector<Layer> layers);

  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// batch: leading extent N, remaining extents multiply to input_dim(). Returns (N, output_dim).
  Tensor forward(const Tensor& batch, Backend backend = Backend::parallel) const;
  Tensor forward(const Tensor& batch, ForwardCache& cache, Backend backend = Backend::parallel) const;
  /// Single sample of any shape with input_dim() elements.
  std::vector<double> forward_one(std::span<const double> x) const;

  /// Accumulates parameter gradients into `grads` (sized by zero_grads()). When grad_input is
  /// non-null it receives dLoss/dInput with the batch layout of the forward input.
  void backward(const ForwardCache& cache, std::span<const double> grad_output, ParamGrads& grads,
                std::vector<double>* grad_input = nullptr, Backend backend = Backend::parallel) const;

  ParamGrads zero_grads() const;
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
  std::size_t parameter_count() const;

  /// Rounds every parameter to float32 precision so the persisted form is exact.
  void freeze();

  friend bool operator==(const Network& a, const Network& b);

 private:
  std::vector<std::size_t> input_shape_;
  std::vector<Layer> layers_;
};

/// Fluent construction with fan-in scaled uniform initialization.
class NetworkBuilder {
 public:
  explicit NetworkBuilder(std::vector<std::size_t> input_shape);

  NetworkBuilder& conv(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                       Activation act = Activation::relu);
  NetworkBuilder& avgpool(std::size_t kernel);
  NetworkBuilder& dense(std::size_t out_dim, Activation act = Activation::none);

  Network build(Rng& rng) const;

 private:
  std::vector<std::size_t> input_shape_;
  std::vector<Layer> layers_;
  std::size_t c_, h_, w_;
};

// Architectures used across the arena.
Network make_classifier(std::size_t channels, std::size_t height, std::size_t width,
                        std::size_t num_classes, Rng& rng);
Network make_encoder(std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t embed_dim, Rng& rng);
Network make_observation_cnn(std::size_t queue_len, std::size_t height, std::size_t width,
                             std::size_t embed_dim, Rng& rng);
Network make_mlp(std::size_t in_dim, std::span<const std::size_t> hidden, std::size_t out_dim,
                 Activation hidden_act, Rng& rng);

// Weight files: 16-byte header then little-endian float32 parameters in
// parameter_blocks() order.
//   bytes 0-3   magic "AMGW"
//   bytes 4-7   u32 format version (1)
//   bytes 8-11  u32 block count (weight and bias of every parametrised layer, plus extras)
//   bytes 12-15 u32 total float count
void save_weights(const std::filesystem::path& path, std::span<const std::span<const double>> blocks);
void load_weights(const std::filesystem::path& path, std::span<const std::span<double>> blocks);
void save_network(const std::filesystem::path& path, const Network& net);
void load_network(const std::filesystem::path& path, Network& net);

}  // namespace amg
