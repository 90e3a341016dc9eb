#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "amg/network.hpp"
#include "amg/rng.hpp"
#include "amg/tensor.hpp"

namespace amg {

struct LabeledDataset {
  Tensor inputs;            // (N, C, H, W) or (N, D), values in [0,1] for image data
  std::vector<int> labels;  // class ids in [0, num_classes)

  std::size_t size() const { return labels.size(); }
  std::size_t sample_dim() const { return labels.empty() ? 0 : inputs.size() / labels.size(); }
  std::vector<std::size_t> sample_shape() const;
  Tensor sample(std::size_t i) const { return inputs.slice(i); }
  /// Subset in the given index order.
  LabeledDataset subset(std::span<const std::size_t> idx) const;
  void validate(std::size_t num_classes) const;
};

/// Softmax with the maximum subtracted before exponentiation.
std::vector<double> softmax(std::span<const double> logits);

/// Mean cross-entropy of softmax(logits) against labels; writes dLoss/dLogits when grad is non-empty.
double cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<double> grad);

struct SgdConfig {
  std::size_t epochs = 20;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
};

struct PgdConfig {
  double eps = 0.3;
  std::size_t steps = 40;
  double step_size = 0.0;  // 0 selects eps / 4
  bool random_start = true;
};

struct AdvTrainConfig {
  SgdConfig sgd;              // total epochs
  std::size_t clean_epochs = 10;
  PgdConfig pgd;
  double adv_lr = 0.0;        // learning rate for the adversarial epochs; 0 keeps sgd.lr
};

/// Heavy-ball SGD over a network's parameter blocks: v = mu v - lr g; w += v.
class MomentumSgd {
 public:
  MomentumSgd(const Network& net, double lr, double momentum);
  void step(Network& net, const ParamGrads& grads);
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, momentum_;
  ParamGrads velocity_;
};

/// Epoch callback: (epoch index, mean training loss).
using EpochHook = std::function<void(std::size_t, double)>;

Network train_sgd(Network net, const LabeledDataset& data, const SgdConfig& cfg, Rng& rng,
                  const EpochHook& hook = {});

/// L-infinity PGD maximizing cross-entropy; x is one sample or a batch with matching labels.
Tensor pgd_perturb(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                   Rng& rng);

/// First `clean_epochs` epochs on clean batches, the rest on batches extended with PGD examples
/// of the same batch. With pgd.steps == 0 no examples are added.
Network adversarial_train(Network net, const LabeledDataset& data, const AdvTrainConfig& cfg, Rng& rng,
                          const EpochHook& hook = {});

double accuracy(const Network& net, const LabeledDataset& data);
double robust_accuracy(const Network& net, const LabeledDataset& data, const PgdConfig& cfg, Rng& rng);

}  // namespace amg
