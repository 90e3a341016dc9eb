#pragma once

#include <deque>
#include <vector>

#include "amg/network.hpp"
#include "amg/training.hpp"
#include "amg/transforms.hpp"

namespace amg {

constexpr std::size_t kEmbedDim = 64;
constexpr std::size_t kQueueLen = 25;

struct ContrastiveConfig {
  std::size_t epochs = 6;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_pairs = 32;
  double margin = 1.0;
  double noise = 0.1;  // std of the Gaussian noise on positives
  double augment_probability = 0.5;  // chance a positive also goes through the transform list
};

/// Contrastive loss y D^2 + (1 - y) max(0, margin - D)^2 averaged over pairs, where rows i and
/// P + i of `embeddings` form pair i. Writes dLoss/dEmbeddings when grad is non-empty.
double contrastive_loss(const Tensor& embeddings, std::span<const int> similar, double margin, std::span<double> grad);

/// Siamese training: positives are (x, noisy / transformed x), negatives (x, different image).
Network train_contrastive(const LabeledDataset& data, const std::vector<TransformSpec>& augment,
                          const ContrastiveConfig& cfg, Rng& rng, const EpochHook& hook = {});

std::vector<double> embed(const Network& encoder, const Tensor& x);

/// 25-channel stack of (k_i - query), k_0 = queue.front(); missing channels are zero.
/// Multi-channel images contribute their first channel.
Tensor observation_stack(const Tensor& query, const std::deque<Tensor>& adv_queue);

std::vector<double> defender_observation(const Network& obs_cnn, const Tensor& query,
                                         const std::deque<Tensor>& adv_queue);

struct Triplet {
  Tensor anchor, positive, negative;  // observation stacks
};

struct TripletConfig {
  std::size_t epochs = 8;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 16;
  double margin = 0.2;
};

/// Mean of max(0, |a - p| - |a - n| + margin) with rows [a..., p..., n...].
double triplet_loss(const Tensor& embeddings, double margin, std::span<double> grad);

Network train_triplet(Network obs_cnn, const std::vector<Triplet>& triplets, const TripletConfig& cfg, Rng& rng,
                      const EpochHook& hook = {});

/// Fraction of triplets with |a - p| < |a - n| in observation space.
double triplet_accuracy(const Network& obs_cnn, const std::vector<Triplet>& triplets);

}  // namespace amg
